//! DRAM data-bus encoding: exact coders (DBI, the original BD-Coder, MBDC),
//! the approximate ZAC-DEST coder, channel energy accounting, cache-line
//! traces and output-quality metrics.
//!
//! A cache line is 64 bytes spread over 8 chips; each chip moves one 64-bit
//! [`ChipWord`] per access as 8 bursts over 8 data lanes. Coders work on one
//! chip's word sequence at a time.
//!
//! ```
//! use busenc::{simulate, ApproxConfig, Exec, RunSpec, Scheme, SimilarityLimit};
//! use busenc::trace::{image_to_cache_lines, Raster};
//!
//! let img = Raster::gray(16, 8, (0..128).map(|i| (i / 4) as u8).collect()).unwrap();
//! let stream = image_to_cache_lines(&img);
//! let spec = RunSpec::new(Scheme::ZacDest)
//!     .with_approx(ApproxConfig::approximate(SimilarityLimit::preset(80).unwrap()));
//! let run = simulate(&stream, &spec, Exec::default()).unwrap();
//! assert!(run.counters().termination_total() > 0);
//! ```

pub mod approx;
pub mod codec;
pub mod energy;
pub mod error;
pub mod framelog;
pub mod parallel;
pub mod quality;
pub mod sim;
pub mod table;
pub mod trace;
pub mod word;

pub use approx::{ApproxConfig, ChipMasks, SimilarityLimit, ToleranceMode};
pub use codec::{CoderConfig, Decoder, Encoder, Frame, FrameType, Scheme};
pub use energy::{EnergyCounters, EnergyMeter, EnergyParams, EnergyReport, SidebandCost};
pub use error::{Error, Result};
pub use framelog::FrameRecord;
pub use parallel::Exec;
pub use quality::{FrameCounts, FrameMix};
pub use sim::{simulate, RunSpec, SimResult};
pub use table::{DataTable, UpdatePolicy};
pub use trace::{Raster, TraceKind, TraceStream};
pub use word::{CacheLine, ChipWord};
