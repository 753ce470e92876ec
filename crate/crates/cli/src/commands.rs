//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use busenc::energy::{to_joules, EnergyReport};
use busenc::framelog::{write_frame_log, write_frame_log_jsonl};
use busenc::quality::{psnr, ssim};
use busenc::table::TableSnapshot;
use busenc::trace::{self, Raster, TraceKind, TraceStream};
use busenc::word::CacheLine;
use busenc::{simulate, ApproxConfig, Exec, FrameMix, RunSpec, Scheme, SimResult, SimilarityLimit, ToleranceMode};

use crate::config::{FrameLogFormat, Knobs, RunConfig};
use crate::error::{CliError, CliResult};
use crate::inputs::{load_all, Input};
use crate::report::{
    write_csv, write_json, EnergyRow, FrameMixRow, KnobCols, MixCols, MonotonicityRow, QualityRow, SweepRow,
};

/// Sign and exponent of an IEEE-754 single.
const F32_PROTECTED: u32 = 0xFF80_0000;

/// Metrics kept from one (input, scheme, knobs) simulation.
#[derive(Debug, Clone)]
struct JobOutput {
    energy: EnergyReport,
    mix: FrameMix,
    psnr: Option<f64>,
    ssim: Option<f64>,
    f32_audit: Option<bool>,
    knobs: KnobCols,
}

/// Where the per-job artifacts of `run` go.
struct Artifacts<'a> {
    dir: &'a Path,
    frame_log: FrameLogFormat,
    dump_tables: bool,
    save_traces: bool,
}

fn create_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| CliError::input(p.display(), e))
}

/// Writes a stream back out in its native form: PGM/PPM, float32 or bytes.
pub fn write_stream(path: &Path, s: &TraceStream) -> CliResult<()> {
    let ctx = || path.display().to_string();
    match s.meta.kind {
        TraceKind::Image => {
            let img = trace::cache_lines_to_image(s).map_err(|e| CliError::input(ctx(), e))?;
            img.save_pnm(path).map_err(|e| CliError::input(ctx(), e))
        }
        TraceKind::TensorF32 => {
            let v = trace::cache_lines_to_tensor(s).map_err(|e| CliError::input(ctx(), e))?;
            trace::write_f32_file(path, &v).map_err(|e| CliError::input(ctx(), e))
        }
        TraceKind::Raw => {
            let bytes = s.payload().map_err(|e| CliError::input(ctx(), e))?;
            fs::write(path, bytes).map_err(|e| CliError::input(ctx(), e))
        }
    }
}

pub fn native_extension(s: &TraceStream) -> &'static str {
    match s.meta.kind {
        TraceKind::Image if s.meta.channels == 1 => "pgm",
        TraceKind::Image => "ppm",
        TraceKind::TensorF32 => "f32",
        TraceKind::Raw => "bin",
    }
}

/// Counts floats whose sign or exponent changed.
fn f32_violations(original: &TraceStream, received: &TraceStream) -> CliResult<usize> {
    let a = trace::cache_lines_to_tensor(original).map_err(|e| CliError::Input(e.to_string()))?;
    let b = trace::cache_lines_to_tensor(received).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(a.iter()
        .zip(&b)
        .filter(|(x, y)| (x.to_bits() ^ y.to_bits()) & F32_PROTECTED != 0)
        .count())
}

fn knob_cols(input: &Input, spec: &RunSpec, knobs: Knobs) -> KnobCols {
    let eff = spec.effective_approx(&input.stream);
    if spec.scheme != Scheme::ZacDest || !eff.approx_allowed {
        return KnobCols::default();
    }
    KnobCols {
        limit: knobs.limit.to_string(),
        limit_bits: Some(eff.similarity_limit_bits),
        trunc: Some(eff.truncation_total()),
        tol: eff.tolerance.to_string(),
    }
}

fn score(input: &Input, run: &SimResult) -> CliResult<(Option<f64>, Option<f64>, Option<bool>)> {
    match input.stream.meta.kind {
        TraceKind::Image => {
            let Some(reference) = &input.image else {
                return Ok((None, None, None));
            };
            let out = trace::cache_lines_to_image(&run.received).map_err(|e| CliError::Input(e.to_string()))?;
            let p = psnr(reference, &out).map_err(|e| CliError::Input(e.to_string()))?;
            let s = ssim(reference, &out).map_err(|e| CliError::Input(e.to_string()))?;
            Ok((Some(p), Some(s), None))
        }
        TraceKind::TensorF32 => Ok((None, None, Some(f32_violations(&input.stream, &run.received)? == 0))),
        TraceKind::Raw => Ok((None, None, None)),
    }
}

fn save_artifacts(a: &Artifacts, input: &Input, run: &SimResult) -> CliResult<()> {
    let stem = format!("{}.{}", input.name, run.spec.scheme);
    let recon = a
        .dir
        .join("reconstructed")
        .join(format!("{stem}.{}", native_extension(&run.received)));
    write_stream(&recon, &run.received)?;
    let io = |p: &Path, r: std::io::Result<()>| r.map_err(|e| CliError::input(p.display(), e));
    match a.frame_log {
        FrameLogFormat::None => {}
        FrameLogFormat::Binary => {
            let p = a.dir.join("frames").join(format!("{stem}.bin"));
            let f = fs::File::create(&p).map_err(|e| CliError::input(p.display(), e))?;
            io(&p, write_frame_log(std::io::BufWriter::new(f), &run.frames))?;
        }
        FrameLogFormat::Jsonl => {
            let p = a.dir.join("frames").join(format!("{stem}.jsonl"));
            let f = fs::File::create(&p).map_err(|e| CliError::input(p.display(), e))?;
            io(&p, write_frame_log_jsonl(std::io::BufWriter::new(f), &run.frames))?;
        }
    }
    if a.dump_tables {
        let tables: Vec<&TableSnapshot> = run.per_chip.iter().map(|c| &c.table).collect();
        write_json(&a.dir.join("tables").join(format!("{stem}.json")), &tables)?;
    }
    if a.save_traces {
        let p = a.dir.join("traces").join(format!("{stem}.betr"));
        io(&p, trace::save_trace(&p, &run.received, false))?;
    }
    Ok(())
}

fn execute(
    cfg: &RunConfig,
    input: &Input,
    spec: RunSpec,
    knobs: Knobs,
    artifacts: Option<&Artifacts>,
) -> CliResult<JobOutput> {
    let run = simulate(&input.stream, &spec, cfg.exec)?;
    if let Some(a) = artifacts {
        save_artifacts(a, input, &run)?;
    }
    let (psnr, ssim, f32_audit) = score(input, &run)?;
    Ok(JobOutput {
        energy: to_joules(&run.counters(), &cfg.energy),
        mix: run.frame_mix(),
        psnr,
        ssim,
        f32_audit,
        knobs: knob_cols(input, &spec, knobs),
    })
}

fn collect<T>(results: Vec<CliResult<T>>) -> CliResult<Vec<T>> {
    results.into_iter().collect()
}

fn audit_text(a: Option<bool>) -> String {
    match a {
        Some(true) => "pass".into(),
        Some(false) => "fail".into(),
        None => String::new(),
    }
}

#[derive(Serialize)]
struct StreamInfo {
    name: String,
    path: String,
    kind: TraceKind,
    lines: usize,
    approx_allowed: bool,
}

#[derive(Serialize)]
struct Resolved<'a> {
    config: &'a RunConfig,
    limit_bits: u32,
    approx: ApproxConfig,
    rgb_interleave: &'static str,
    luminance: &'static str,
    streams: Vec<StreamInfo>,
}

fn write_resolved(cfg: &RunConfig, inputs: &[Input]) -> CliResult<()> {
    let resolved = Resolved {
        config: cfg,
        limit_bits: cfg.limit.bits(),
        approx: cfg.approx(cfg.knobs())?,
        rgb_interleave: "R,G,B per pixel, row-major",
        luminance: "BT.601 (0.299 R + 0.587 G + 0.114 B)",
        streams: inputs
            .iter()
            .map(|i| StreamInfo {
                name: i.name.clone(),
                path: i.path.display().to_string(),
                kind: i.stream.meta.kind,
                lines: i.stream.len(),
                approx_allowed: i.stream.approx_allowed,
            })
            .collect(),
    };
    write_json(&cfg.output_dir.join("resolved.json"), &resolved)?;
    let p = cfg.output_dir.join("config.toml");
    fs::write(&p, cfg.to_toml()).map_err(|e| CliError::input(p.display(), e))
}

/// Summary of a finished `run`, for the caller to print.
pub struct RunSummary {
    pub energy: Vec<EnergyRow>,
    pub limit_bits: u32,
}

pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunSummary> {
    cfg.validate()?;
    let inputs = load_all(&cfg.inputs)?;
    create_dir(&cfg.output_dir)?;
    create_dir(&cfg.output_dir.join("reconstructed"))?;
    if cfg.frame_log != FrameLogFormat::None {
        create_dir(&cfg.output_dir.join("frames"))?;
    }
    if cfg.dump_tables {
        create_dir(&cfg.output_dir.join("tables"))?;
    }
    if cfg.save_traces {
        create_dir(&cfg.output_dir.join("traces"))?;
    }
    let artifacts = Artifacts {
        dir: &cfg.output_dir,
        frame_log: cfg.frame_log,
        dump_tables: cfg.dump_tables,
        save_traces: cfg.save_traces,
    };

    let knobs = cfg.knobs();
    let mut jobs = Vec::new();
    for (i, _) in inputs.iter().enumerate() {
        for (s, &scheme) in cfg.schemes.iter().enumerate() {
            jobs.push((i, s, cfg.spec(scheme, knobs, s as u32)?));
        }
    }
    let outputs = collect(cfg.exec.map(&jobs, |(i, _, spec)| {
        execute(cfg, &inputs[*i], *spec, knobs, Some(&artifacts))
    }))?;

    let per_input = cfg.schemes.len();
    let base_pos = cfg.schemes.iter().position(|&s| s == cfg.baseline).expect("validated");
    let mut energy = Vec::new();
    let mut quality = Vec::new();
    let mut mix_rows = Vec::new();
    for ((i, s, _), out) in jobs.iter().zip(&outputs) {
        let input = &inputs[*i];
        let scheme = cfg.schemes[*s];
        let base = &outputs[i * per_input + base_pos];
        energy.push(EnergyRow::new(
            &input.name,
            scheme,
            out.knobs.clone(),
            &out.energy,
            &base.energy,
        ));
        let agg = out.mix.aggregate();
        let mix = MixCols::from(&agg);
        quality.push(QualityRow {
            stream: input.name.clone(),
            scheme,
            limit: out.knobs.limit.clone(),
            limit_bits: out.knobs.limit_bits,
            trunc: out.knobs.trunc,
            tol: out.knobs.tol.clone(),
            psnr_db: out.psnr,
            ssim: out.ssim,
            ssim_ratio: out.ssim.zip(base.ssim).map(|(a, b)| a / b),
            frac_zero: mix.frac_zero,
            frac_ohe_skip: mix.frac_ohe_skip,
            frac_xor_encoded: mix.frac_xor_encoded,
            frac_raw: mix.frac_raw,
            f32_audit: audit_text(out.f32_audit),
        });
        for (chip, c) in out.mix.per_chip.iter().enumerate() {
            mix_rows.push(FrameMixRow::new(&input.name, scheme, &out.knobs, chip.to_string(), c));
        }
        mix_rows.push(FrameMixRow::new(&input.name, scheme, &out.knobs, "all".into(), &agg));
    }

    let dir = &cfg.output_dir;
    write_csv(&dir.join("energy.csv"), &energy)?;
    write_json(
        &dir.join("energy.json"),
        &EnergyJson {
            params: cfg.energy,
            rows: &energy,
        },
    )?;
    write_csv(&dir.join("quality.csv"), &quality)?;
    write_csv(&dir.join("frame_mix.csv"), &mix_rows)?;
    write_resolved(cfg, &inputs)?;
    Ok(RunSummary {
        energy,
        limit_bits: cfg.limit.bits(),
    })
}

#[derive(Serialize)]
struct EnergyJson<'a> {
    params: busenc::EnergyParams,
    rows: &'a [EnergyRow],
}

/// Summary of a finished `sweep`.
pub struct SweepSummary {
    pub rows: usize,
    pub monotonicity: Vec<MonotonicityRow>,
}

pub fn cmd_sweep(cfg: &RunConfig) -> CliResult<SweepSummary> {
    cfg.validate()?;
    cfg.validate_grid()?;
    let inputs = load_all(&cfg.inputs)?;
    create_dir(&cfg.output_dir)?;
    let grid = cfg.grid();

    // Only ZAC-DEST depends on the grid; every other scheme runs once per input.
    let mut jobs = Vec::new();
    for (i, _) in inputs.iter().enumerate() {
        for (s, &scheme) in cfg.schemes.iter().enumerate() {
            let points = if scheme == Scheme::ZacDest { grid.len() } else { 1 };
            for g in 0..points {
                let id = (s * grid.len() + g) as u32;
                jobs.push(((i, s, g), cfg.spec(scheme, grid[g], id)?.recording(false)));
            }
        }
    }
    let outputs = collect(cfg.exec.map(&jobs, |((i, _, g), spec)| {
        execute(cfg, &inputs[*i], *spec, grid[*g], None)
    }))?;
    let lookup = |i: usize, s: usize, g: usize| -> &JobOutput {
        let g = if cfg.schemes[s] == Scheme::ZacDest { g } else { 0 };
        let pos = jobs.iter().position(|(key, _)| *key == (i, s, g)).expect("job exists");
        &outputs[pos]
    };

    let base_pos = cfg.schemes.iter().position(|&s| s == cfg.baseline).expect("validated");
    let mut rows = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        for (s, &scheme) in cfg.schemes.iter().enumerate() {
            for (g, &k) in grid.iter().enumerate() {
                let out = lookup(i, s, g);
                let base = &lookup(i, base_pos, g).energy.counters;
                let c = &out.energy.counters;
                let mix = MixCols::from(&out.mix.aggregate());
                // grid coordinates identify the row even for schemes that ignore them
                let cols = if out.knobs.limit_bits.is_some() {
                    out.knobs.clone()
                } else {
                    KnobCols::from_knobs(k)
                };
                rows.push(SweepRow {
                    stream: input.name.clone(),
                    scheme,
                    limit: cols.limit,
                    limit_bits: cols.limit_bits,
                    trunc: cols.trunc,
                    tol: cols.tol,
                    term_total: c.termination_total(),
                    sw_total: c.switching_total(),
                    termination_j: out.energy.termination_j,
                    switching_j: out.energy.switching_j,
                    term_reduction_pct: busenc::energy::reduction_pct(base.termination_total(), c.termination_total()),
                    sw_reduction_pct: busenc::energy::reduction_pct(base.switching_total(), c.switching_total()),
                    psnr_db: out.psnr,
                    ssim: out.ssim,
                    frac_zero: mix.frac_zero,
                    frac_ohe_skip: mix.frac_ohe_skip,
                    frac_xor_encoded: mix.frac_xor_encoded,
                    frac_raw: mix.frac_raw,
                    f32_audit: audit_text(out.f32_audit),
                });
            }
        }
    }

    let monotonicity = monotonicity(cfg, &inputs, &grid, &lookup);
    write_csv(&cfg.output_dir.join("sweep.csv"), &rows)?;
    write_csv(&cfg.output_dir.join("sweep_monotonicity.csv"), &monotonicity)?;
    write_resolved(cfg, &inputs)?;
    Ok(SweepSummary {
        rows: rows.len(),
        monotonicity,
    })
}

fn monotonicity<'a>(
    cfg: &RunConfig,
    inputs: &[Input],
    grid: &[Knobs],
    lookup: &dyn Fn(usize, usize, usize) -> &'a JobOutput,
) -> Vec<MonotonicityRow> {
    let mut out = Vec::new();
    let Some(s) = cfg.schemes.iter().position(|&s| s == Scheme::ZacDest) else {
        return out;
    };
    for (i, input) in inputs.iter().enumerate() {
        for &trunc in &cfg.sweep.truncations {
            for &tol in &cfg.sweep.tolerances {
                let mut points: Vec<(u32, u64)> = grid
                    .iter()
                    .enumerate()
                    .filter(|(_, k)| k.truncation == trunc && k.tolerance == tol)
                    .map(|(g, k)| (k.limit.bits(), lookup(i, s, g).energy.counters.termination_total()))
                    .collect();
                points.sort();
                let join = |f: &dyn Fn(&(u32, u64)) -> String| points.iter().map(f).collect::<Vec<_>>().join("/");
                out.push(MonotonicityRow {
                    stream: input.name.clone(),
                    scheme: Scheme::ZacDest,
                    trunc,
                    tol: tol.to_string(),
                    limit_bits: join(&|p| p.0.to_string()),
                    term_totals: join(&|p| p.1.to_string()),
                    non_increasing: points.windows(2).all(|w| w[1].1 <= w[0].1),
                });
            }
        }
    }
    out
}

pub fn cmd_img2trace(input: &Path, output: &Path, hex: bool) -> CliResult<TraceStream> {
    let (stream, _) = crate::inputs::load(input)?;
    trace::save_trace(output, &stream, hex).map_err(|e| CliError::input(output.display(), e))?;
    Ok(stream)
}

/// Rebuilds the payload of a trace, optionally passing it through `spec` first.
pub fn cmd_reconstruct(
    stream: TraceStream,
    output: &Path,
    spec: Option<RunSpec>,
    exec: Exec,
) -> CliResult<TraceStream> {
    let received = match spec {
        Some(spec) => simulate(&stream, &spec, exec)?.received,
        None => stream,
    };
    write_stream(output, &received)?;
    Ok(received)
}

/// Seeded streams of each kind through every scheme and a grid of knobs.
/// The simulator checks the codec invariants on every frame; on top of that
/// exact schemes must return their input and float32 tensors must keep sign
/// and exponent.
pub fn cmd_selftest(seed: u64, lines: usize, exec: Exec) -> CliResult<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = 64;
    let mut pixels = Vec::with_capacity(width * lines);
    let mut row: Vec<u8> = (0..width).map(|x| (x * 2) as u8).collect();
    for _ in 0..lines {
        for v in row.iter_mut() {
            *v = v.wrapping_add(rng.gen_range(0..5)).wrapping_sub(2);
        }
        pixels.extend_from_slice(&row);
    }
    let img = Raster::gray(width, lines, pixels).map_err(|e| CliError::Invariant(e.to_string()))?;
    let centers: Vec<f32> = (0..8).map(|_| rng.gen_range(-4.0f32..4.0)).collect();
    let floats: Vec<f32> = (0..lines * 16)
        .map(|_| centers[rng.gen_range(0..8)] * (1.0 + rng.gen_range(-1e-3f32..1e-3)))
        .collect();
    let bytes: Vec<u8> = (0..lines * 64 + 17)
        .map(|_| rng.gen::<u8>() & rng.gen::<u8>())
        .collect();
    let mut zero = trace::image_to_cache_lines(&img);
    zero.lines = vec![CacheLine([0; 64]); zero.lines.len()];
    let streams = [
        trace::image_to_cache_lines(&img),
        trace::tensor_f32_to_cache_lines(&floats),
        trace::bytes_to_cache_lines(&bytes),
        zero,
    ];

    let mut checks = 0;
    for stream in &streams {
        let mut specs: Vec<RunSpec> = Scheme::ALL
            .iter()
            .filter(|s| s.is_exact())
            .map(|&s| RunSpec::new(s))
            .collect();
        for preset in SimilarityLimit::PRESETS {
            for (trunc, tol) in [
                (0, ToleranceMode::None),
                (1, ToleranceMode::Eighth),
                (2, ToleranceMode::Quarter),
            ] {
                let approx = ApproxConfig::approximate(SimilarityLimit::Percent(preset))
                    .with_truncation(trunc)
                    .with_tolerance(tol);
                specs.push(RunSpec::new(Scheme::ZacDest).with_approx(approx));
            }
        }
        let results = exec.map(&specs, |spec| simulate(stream, spec, exec));
        for (spec, result) in specs.iter().zip(results) {
            let run = result?;
            if spec.scheme.is_exact() && run.received.lines != stream.lines {
                return Err(CliError::Invariant(format!(
                    "{} altered a {} stream",
                    spec.scheme, stream.meta.kind
                )));
            }
            if stream.meta.kind == TraceKind::TensorF32 && f32_violations(stream, &run.received)? != 0 {
                return Err(CliError::Invariant("float32 sign/exponent changed".into()));
            }
            checks += 1;
        }
    }
    Ok(checks)
}

pub fn default_reconstruct_path(trace_path: &Path, s: &TraceStream) -> PathBuf {
    trace_path.with_extension(native_extension(s))
}
