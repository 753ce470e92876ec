//! CSV/JSON report rows. Every file is written from rows already in their
//! final order, so identical inputs give byte-identical reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use busenc::energy::{reduction_pct, EnergyReport};
use busenc::{FrameCounts, Scheme};

use crate::config::Knobs;
use crate::error::{CliError, CliResult};

/// Knob columns shared by all reports; empty for schemes that ignore them.
#[derive(Debug, Clone, Default)]
pub struct KnobCols {
    pub limit: String,
    pub limit_bits: Option<u32>,
    pub trunc: Option<u32>,
    pub tol: String,
}

impl KnobCols {
    pub fn from_knobs(k: Knobs) -> Self {
        KnobCols {
            limit: k.limit.to_string(),
            limit_bits: Some(k.limit.bits()),
            trunc: Some(k.truncation),
            tol: k.tolerance.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyRow {
    pub stream: String,
    pub scheme: Scheme,
    pub limit: String,
    pub limit_bits: Option<u32>,
    pub trunc: Option<u32>,
    pub tol: String,
    pub term_data: u64,
    pub term_index: u64,
    pub term_flags: u64,
    pub term_total: u64,
    pub sw_data: u64,
    pub sw_index: u64,
    pub sw_flags: u64,
    pub sw_total: u64,
    pub termination_j: f64,
    pub switching_j: f64,
    pub total_j: f64,
    /// Savings against the baseline scheme on the same stream (positive = less energy).
    pub term_reduction_pct: f64,
    pub sw_reduction_pct: f64,
}

impl EnergyRow {
    pub fn new(stream: &str, scheme: Scheme, knobs: KnobCols, r: &EnergyReport, baseline: &EnergyReport) -> Self {
        let c = &r.counters;
        let b = &baseline.counters;
        EnergyRow {
            stream: stream.to_string(),
            scheme,
            limit: knobs.limit,
            limit_bits: knobs.limit_bits,
            trunc: knobs.trunc,
            tol: knobs.tol,
            term_data: c.term_data,
            term_index: c.term_index,
            term_flags: c.term_flags,
            term_total: c.termination_total(),
            sw_data: c.sw_data,
            sw_index: c.sw_index,
            sw_flags: c.sw_flags,
            sw_total: c.switching_total(),
            termination_j: r.termination_j,
            switching_j: r.switching_j,
            total_j: r.total_j(),
            term_reduction_pct: reduction_pct(b.termination_total(), c.termination_total()),
            sw_reduction_pct: reduction_pct(b.switching_total(), c.switching_total()),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MixCols {
    pub frac_zero: f64,
    pub frac_ohe_skip: f64,
    pub frac_xor_encoded: f64,
    pub frac_raw: f64,
}

impl From<&FrameCounts> for MixCols {
    fn from(c: &FrameCounts) -> Self {
        let [frac_zero, frac_ohe_skip, frac_xor_encoded, frac_raw] = c.fractions();
        MixCols {
            frac_zero,
            frac_ohe_skip,
            frac_xor_encoded,
            frac_raw,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QualityRow {
    pub stream: String,
    pub scheme: Scheme,
    pub limit: String,
    pub limit_bits: Option<u32>,
    pub trunc: Option<u32>,
    pub tol: String,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    /// SSIM relative to the baseline scheme's reconstruction.
    pub ssim_ratio: Option<f64>,
    pub frac_zero: f64,
    pub frac_ohe_skip: f64,
    pub frac_xor_encoded: f64,
    pub frac_raw: f64,
    /// Sign/exponent audit for float32 tensors: `pass` or `fail`.
    pub f32_audit: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameMixRow {
    pub stream: String,
    pub scheme: Scheme,
    pub limit: String,
    pub limit_bits: Option<u32>,
    pub trunc: Option<u32>,
    pub tol: String,
    /// Chip index, or `all`.
    pub chip: String,
    pub zero: u64,
    pub ohe_skip: u64,
    pub xor_encoded: u64,
    pub raw: u64,
    pub frac_zero: f64,
    pub frac_ohe_skip: f64,
    pub frac_xor_encoded: f64,
    pub frac_raw: f64,
}

impl FrameMixRow {
    pub fn new(stream: &str, scheme: Scheme, knobs: &KnobCols, chip: String, c: &FrameCounts) -> Self {
        let mix = MixCols::from(c);
        FrameMixRow {
            stream: stream.to_string(),
            scheme,
            limit: knobs.limit.clone(),
            limit_bits: knobs.limit_bits,
            trunc: knobs.trunc,
            tol: knobs.tol.clone(),
            chip,
            zero: c.zero,
            ohe_skip: c.ohe_skip,
            xor_encoded: c.xor_encoded,
            raw: c.raw,
            frac_zero: mix.frac_zero,
            frac_ohe_skip: mix.frac_ohe_skip,
            frac_xor_encoded: mix.frac_xor_encoded,
            frac_raw: mix.frac_raw,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub stream: String,
    pub scheme: Scheme,
    pub limit: String,
    pub limit_bits: Option<u32>,
    pub trunc: Option<u32>,
    pub tol: String,
    pub term_total: u64,
    pub sw_total: u64,
    pub termination_j: f64,
    pub switching_j: f64,
    pub term_reduction_pct: f64,
    pub sw_reduction_pct: f64,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub frac_zero: f64,
    pub frac_ohe_skip: f64,
    pub frac_xor_encoded: f64,
    pub frac_raw: f64,
    pub f32_audit: String,
}

/// Whether termination never rises as the similarity limit loosens, for one
/// (stream, scheme, truncation, tolerance) slice of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityRow {
    pub stream: String,
    pub scheme: Scheme,
    pub trunc: u32,
    pub tol: String,
    /// Limits in increasing bit order, `/`-separated.
    pub limit_bits: String,
    pub term_totals: String,
    pub non_increasing: bool,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::input(path.display(), e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::input(path.display(), e))?;
    }
    w.flush().map_err(|e| CliError::input(path.display(), e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let f = File::create(path).map_err(|e| CliError::input(path.display(), e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::input(path.display(), e))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| CliError::input(path.display(), e))
}
