//! Command-line front end: configuration, input discovery, report writers
//! and the subcommand implementations behind the `busenc` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod inputs;
pub mod report;
