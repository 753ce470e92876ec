use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use busenc::{Exec, Scheme, SidebandCost, SimilarityLimit, ToleranceMode, UpdatePolicy};
use busenc_cli::commands;
use busenc_cli::config::{FrameLogFormat, RunConfig};
use busenc_cli::error::{CliError, CliResult};

/// Bus-energy simulator for cache-line transfers over an 8-chip DRAM channel.
#[derive(Parser)]
#[command(name = "busenc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every selected scheme over the inputs and write energy/quality reports.
    Run(Overrides),
    /// Run a grid of approximation knobs and write sweep reports.
    Sweep(SweepArgs),
    /// Convert an image, tensor or binary into a trace file.
    Img2trace {
        input: PathBuf,
        output: PathBuf,
        /// Write the hex text form instead of binary.
        #[arg(long)]
        hex: bool,
    },
    /// Turn a trace back into an image, tensor or byte file.
    Reconstruct(ReconstructArgs),
    /// Push seeded synthetic streams through every scheme and check invariants.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        lines: usize,
        #[arg(long)]
        sequential: bool,
    },
}

/// Settings that override the config file.
#[derive(Args, Default)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input files or directories (repeatable).
    #[arg(short, long = "input")]
    inputs: Vec<PathBuf>,
    #[arg(short, long, env = "BUSENC_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Schemes to run (repeatable or comma separated).
    #[arg(long = "scheme", value_delimiter = ',')]
    schemes: Vec<Scheme>,
    #[arg(long)]
    baseline: Option<Scheme>,
    /// Similarity limit: a preset (`90%`, `80%`, `75%`, `70%`) or a bit count.
    #[arg(long)]
    limit: Option<SimilarityLimit>,
    /// Truncated bits per 64-bit chip word.
    #[arg(long)]
    trunc: Option<u32>,
    /// Tolerance: protected MSBs per word (`0`, `8`, `16`) or `float32`.
    #[arg(long)]
    tol: Option<ToleranceMode>,
    #[arg(long)]
    value_width: Option<u32>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// counted or free.
    #[arg(long, value_parser = kebab::<SidebandCost>)]
    sideband: Option<SidebandCost>,
    /// raw-only or every-access (BDE_ORG only).
    #[arg(long, value_parser = kebab::<UpdatePolicy>)]
    update_policy: Option<UpdatePolicy>,
    /// none, binary or jsonl.
    #[arg(long, value_parser = kebab::<FrameLogFormat>)]
    frame_log: Option<FrameLogFormat>,
    #[arg(long)]
    dump_tables: bool,
    #[arg(long)]
    save_traces: bool,
    /// Run without the thread pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Overrides,
    #[arg(long, value_delimiter = ',')]
    limits: Vec<SimilarityLimit>,
    #[arg(long, value_delimiter = ',')]
    truncs: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    tols: Vec<ToleranceMode>,
}

#[derive(Args)]
struct ReconstructArgs {
    trace: PathBuf,
    /// Defaults to the trace path with the native extension.
    output: Option<PathBuf>,
    /// Pass the trace through this scheme before rebuilding it.
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    limit: Option<SimilarityLimit>,
    #[arg(long)]
    trunc: Option<u32>,
    #[arg(long)]
    tol: Option<ToleranceMode>,
    #[arg(long)]
    capacity: Option<usize>,
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Overrides {
    fn resolve(self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if !self.inputs.is_empty() {
            cfg.inputs = self.inputs;
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
        if !self.schemes.is_empty() {
            cfg.schemes = self.schemes;
        }
        if let Some(v) = self.baseline {
            cfg.baseline = v;
        }
        if let Some(v) = self.limit {
            cfg.limit = v;
        }
        if let Some(v) = self.trunc {
            cfg.truncation = v;
        }
        if let Some(v) = self.tol {
            cfg.tolerance = v;
        }
        if let Some(v) = self.value_width {
            cfg.value_width = v;
        }
        if let Some(v) = self.capacity {
            cfg.table_capacity = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.sideband {
            cfg.sideband = v;
        }
        if let Some(v) = self.update_policy {
            cfg.update_policy = v;
        }
        if let Some(v) = self.frame_log {
            cfg.frame_log = v;
        }
        cfg.dump_tables |= self.dump_tables;
        cfg.save_traces |= self.save_traces;
        if self.sequential {
            cfg.exec = Exec::Sequential;
        }
        if cfg.inputs.is_empty() {
            return Err(CliError::Usage(
                "no inputs given (use -i or `inputs` in the config)".into(),
            ));
        }
        Ok(cfg)
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let summary = commands::cmd_run(&cfg)?;
            println!("limit_bits={}", summary.limit_bits);
            for r in &summary.energy {
                println!(
                    "{:<24} {:<9} term={:<12} sw={:<12} term_red={:>7.2}% sw_red={:>7.2}%",
                    r.stream, r.scheme, r.term_total, r.sw_total, r.term_reduction_pct, r.sw_reduction_pct
                );
            }
            println!("reports in {}", cfg.output_dir.display());
        }
        Command::Sweep(a) => {
            let mut cfg = a.common.resolve()?;
            if !a.limits.is_empty() {
                cfg.sweep.limits = a.limits;
            }
            if !a.truncs.is_empty() {
                cfg.sweep.truncations = a.truncs;
            }
            if !a.tols.is_empty() {
                cfg.sweep.tolerances = a.tols;
            }
            let summary = commands::cmd_sweep(&cfg)?;
            println!("{} sweep rows", summary.rows);
            for m in &summary.monotonicity {
                println!(
                    "{:<24} trunc={} tol={} limit_bits={} term={} non_increasing={}",
                    m.stream, m.trunc, m.tol, m.limit_bits, m.term_totals, m.non_increasing
                );
            }
            println!("reports in {}", cfg.output_dir.display());
        }
        Command::Img2trace { input, output, hex } => {
            let s = commands::cmd_img2trace(&input, &output, hex)?;
            println!("{} lines ({}) -> {}", s.len(), s.meta.kind, output.display());
        }
        Command::Reconstruct(a) => {
            let spec = match a.scheme {
                None => None,
                Some(scheme) => {
                    let knobs_given = a.limit.is_some() || a.trunc.is_some() || a.tol.is_some();
                    if knobs_given && scheme != Scheme::ZacDest {
                        return Err(CliError::Usage(format!(
                            "--limit/--trunc/--tol apply to ZAC-DEST only, not {scheme}"
                        )));
                    }
                    let mut cfg = RunConfig::default();
                    cfg.limit = a.limit.unwrap_or(cfg.limit);
                    cfg.truncation = a.trunc.unwrap_or(cfg.truncation);
                    cfg.tolerance = a.tol.unwrap_or(cfg.tolerance);
                    cfg.table_capacity = a.capacity.unwrap_or(cfg.table_capacity);
                    cfg.approx(cfg.knobs())?.validate()?;
                    Some(cfg.spec(scheme, cfg.knobs(), 0)?.recording(false))
                }
            };
            let trace = busenc::trace::load_trace(&a.trace).map_err(|e| CliError::input(a.trace.display(), e))?;
            let output = a
                .output
                .unwrap_or_else(|| commands::default_reconstruct_path(&a.trace, &trace));
            let s = commands::cmd_reconstruct(trace, &output, spec, Exec::default())?;
            println!("{} lines ({}) -> {}", s.len(), s.meta.kind, output.display());
        }
        Command::Selftest {
            seed,
            lines,
            sequential,
        } => {
            let exec = if sequential { Exec::Sequential } else { Exec::default() };
            let n = commands::cmd_selftest(seed, lines, exec)?;
            println!("selftest: {n} runs ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
