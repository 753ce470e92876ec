//! Runs a trace stream through one scheme: one encoder, decoder and energy
//! meter per chip, then reassembles the received cache lines.
//!
//! Every frame is decoded as it is produced and the result is checked
//! against the codec contract, so a desynchronised table or an out-of-bound
//! approximation surfaces as [`Error::Invariant`] rather than as silently
//! wrong numbers.

use serde::{Deserialize, Serialize};

use crate::approx::{ApproxConfig, ChipMasks};
use crate::codec::{CoderConfig, Decoder, Encoder, Frame, FrameType, Scheme};
use crate::energy::{EnergyCounters, EnergyMeter, SidebandCost};
use crate::error::{Error, Result};
use crate::framelog::FrameRecord;
use crate::parallel::Exec;
use crate::quality::{FrameCounts, FrameMix};
use crate::table::{TableSnapshot, UpdatePolicy, DEFAULT_CAPACITY};
use crate::trace::{TraceKind, TraceStream};
use crate::word::{merge_chip_words, split_cache_line, ChipWord, CHIPS};

/// Everything that determines one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSpec {
    pub scheme: Scheme,
    pub capacity: usize,
    pub approx: ApproxConfig,
    pub sideband: SidebandCost,
    pub update_policy: UpdatePolicy,
    /// Keep every frame for the frame log.
    pub record_frames: bool,
    pub config_id: u32,
}

impl RunSpec {
    pub fn new(scheme: Scheme) -> Self {
        RunSpec {
            scheme,
            capacity: DEFAULT_CAPACITY,
            approx: ApproxConfig::exact(),
            sideband: SidebandCost::Counted,
            update_policy: UpdatePolicy::RawOnly,
            record_frames: false,
            config_id: 0,
        }
    }

    pub fn with_approx(mut self, approx: ApproxConfig) -> Self {
        self.approx = approx;
        self
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_sideband(mut self, sideband: SidebandCost) -> Self {
        self.sideband = sideband;
        self
    }

    pub fn with_update_policy(mut self, policy: UpdatePolicy) -> Self {
        self.update_policy = policy;
        self
    }

    pub fn recording(mut self, record: bool) -> Self {
        self.record_frames = record;
        self
    }

    /// Knobs as they apply to `stream`: float32 tensors get float32 masks,
    /// streams that forbid approximation get none.
    pub fn effective_approx(&self, stream: &TraceStream) -> ApproxConfig {
        let mut a = self.approx;
        if a.approx_allowed && stream.meta.kind == TraceKind::TensorF32 {
            a = a.for_float32();
        }
        a.approx_allowed &= stream.approx_allowed;
        a
    }

    pub fn coder_configs(&self, stream: &TraceStream) -> Result<[CoderConfig; CHIPS]> {
        let approx = self.effective_approx(stream);
        let masks = approx.chip_masks()?;
        Ok(masks.map(|m| CoderConfig {
            capacity: self.capacity,
            masks: m,
            similarity_limit_bits: approx.similarity_limit_bits,
            approx_allowed: approx.approx_allowed,
            update_policy: self.update_policy,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChipResult {
    pub counters: EnergyCounters,
    pub mix: FrameCounts,
    pub table: TableSnapshot,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub spec: RunSpec,
    pub per_chip: Vec<ChipResult>,
    pub received: TraceStream,
    /// Ordered by line, then chip. Empty unless recording was requested.
    pub frames: Vec<FrameRecord>,
}

impl SimResult {
    pub fn counters(&self) -> EnergyCounters {
        self.per_chip.iter().map(|c| c.counters).sum()
    }

    pub fn frame_mix(&self) -> FrameMix {
        let mut mix = FrameMix::default();
        for (slot, c) in mix.per_chip.iter_mut().zip(&self.per_chip) {
            *slot = c.mix;
        }
        mix
    }
}

struct ChipRun {
    result: ChipResult,
    decoded: Vec<ChipWord>,
    frames: Vec<Frame>,
}

fn violation(scheme: Scheme, chip: usize, line: usize, what: String) -> Error {
    Error::Invariant(format!("{scheme} chip {chip} line {line}: {what}"))
}

/// Checks one decoded word against the codec contract.
fn check_word(cfg: &CoderConfig, scheme: Scheme, frame: &Frame, w: ChipWord, got: ChipWord) -> Option<String> {
    let trunc = if cfg.approx_allowed && matches!(scheme, Scheme::Mbdc | Scheme::ZacDest) {
        cfg.masks.trunc
    } else {
        0
    };
    let wt = w.masked(trunc);
    if frame.frame_type != FrameType::OheSkip {
        return (got != wt).then(|| format!("decoded {got} but sent {wt}"));
    }
    let diff = got ^ wt;
    if got.0 & trunc != 0 {
        return Some(format!("skip reconstruction {got} has truncated bits set"));
    }
    if diff.0 & cfg.masks.tol != 0 {
        return Some(format!("skip reconstruction {got} alters protected bits of {wt}"));
    }
    if diff.popcount() > cfg.similarity_limit_bits {
        return Some(format!(
            "skip reconstruction differs in {} bits, limit {}",
            diff.popcount(),
            cfg.similarity_limit_bits
        ));
    }
    None
}

fn run_chip(chip: usize, words: &[ChipWord], scheme: Scheme, cfg: CoderConfig, spec: &RunSpec) -> Result<ChipRun> {
    let mut enc = Encoder::new(scheme, cfg)?;
    let mut dec = Decoder::new(scheme, cfg)?;
    let mut meter = EnergyMeter::new(spec.sideband);
    let mut mix = FrameCounts::default();
    let mut decoded = Vec::with_capacity(words.len());
    let mut frames = Vec::new();
    for (line, &w) in words.iter().enumerate() {
        let frame = enc.encode(w);
        let got = dec
            .decode(&frame)
            .map_err(|e| violation(scheme, chip, line, e.to_string()))?;
        if let Some(what) = check_word(&cfg, scheme, &frame, w, got) {
            return Err(violation(scheme, chip, line, what));
        }
        meter.observe(&frame);
        mix.record(frame.frame_type);
        decoded.push(got);
        if spec.record_frames {
            frames.push(frame);
        }
    }
    if enc.table() != dec.table() {
        return Err(violation(
            scheme,
            chip,
            words.len(),
            "sender and receiver tables differ".into(),
        ));
    }
    Ok(ChipRun {
        result: ChipResult {
            counters: meter.counters(),
            mix,
            table: enc.table().snapshot(),
        },
        decoded,
        frames,
    })
}

/// Splits a stream into per-chip word sequences.
pub fn chip_columns(stream: &TraceStream) -> Vec<Vec<ChipWord>> {
    let mut cols: Vec<Vec<ChipWord>> = (0..CHIPS).map(|_| Vec::with_capacity(stream.len())).collect();
    for line in &stream.lines {
        for (col, w) in cols.iter_mut().zip(split_cache_line(line)) {
            col.push(w);
        }
    }
    cols
}

pub fn simulate(stream: &TraceStream, spec: &RunSpec, exec: Exec) -> Result<SimResult> {
    let configs = spec.coder_configs(stream)?;
    let cols = chip_columns(stream);
    let jobs: Vec<(usize, &Vec<ChipWord>, CoderConfig)> =
        cols.iter().enumerate().map(|(c, col)| (c, col, configs[c])).collect();
    let runs = exec
        .map(&jobs, |&(chip, col, cfg)| run_chip(chip, col, spec.scheme, cfg, spec))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let lines = (0..stream.len())
        .map(|i| {
            let mut words = [ChipWord::ZERO; CHIPS];
            for (w, run) in words.iter_mut().zip(&runs) {
                *w = run.decoded[i];
            }
            merge_chip_words(&words)
        })
        .collect();

    let mut frames = Vec::new();
    if spec.record_frames {
        frames.reserve(stream.len() * CHIPS);
        for line in 0..stream.len() {
            for (chip, run) in runs.iter().enumerate() {
                frames.push(FrameRecord {
                    line: line as u32,
                    chip: chip as u8,
                    frame: run.frames[line],
                    config_id: spec.config_id,
                });
            }
        }
    }

    Ok(SimResult {
        spec: *spec,
        per_chip: runs.into_iter().map(|r| r.result).collect(),
        received: stream.with_lines(lines),
        frames,
    })
}

/// Per-chip masks in force when `spec` runs on `stream`.
pub fn effective_masks(stream: &TraceStream, spec: &RunSpec) -> Result<[ChipMasks; CHIPS]> {
    Ok(spec.effective_approx(stream).chip_masks()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::SimilarityLimit;
    use crate::trace::{bytes_to_cache_lines, Raster};
    use crate::word::CacheLine;

    fn image_stream(lines: Vec<CacheLine>) -> TraceStream {
        let n = lines.len() * 64;
        let img = Raster::gray(n, 1, vec![0; n]).unwrap();
        crate::trace::image_to_cache_lines(&img).with_lines(lines)
    }

    #[test]
    fn identical_words_are_skipped_after_first() {
        let line = CacheLine([0x5A; 64]);
        let s = image_stream(vec![line; 10]);
        let spec = RunSpec::new(Scheme::ZacDest)
            .with_approx(ApproxConfig::approximate(SimilarityLimit::preset(90).unwrap()))
            .recording(true);
        let r = simulate(&s, &spec, Exec::Sequential).unwrap();
        let chip0: Vec<FrameType> = r
            .frames
            .iter()
            .filter(|f| f.chip == 0)
            .map(|f| f.frame.frame_type)
            .collect();
        assert_eq!(chip0[0], FrameType::Raw);
        assert!(chip0[1..].iter().all(|&t| t == FrameType::OheSkip));
        assert_eq!(r.received.lines, s.lines);
    }

    #[test]
    fn all_zero_stream() {
        let s = image_stream(vec![CacheLine([0; 64]); 5]);
        let r = simulate(&s, &RunSpec::new(Scheme::Mbdc), Exec::Sequential).unwrap();
        assert_eq!(r.frame_mix().fractions()[0], 1.0);
        assert_eq!(r.counters().term_data, 0);
        assert!(r.per_chip.iter().all(|c| c.table.slots.is_empty()));
    }

    #[test]
    fn sequential_equals_parallel() {
        let bytes: Vec<u8> = (0..64 * 50).map(|i| ((i * 7919) % 251) as u8).collect();
        let s = bytes_to_cache_lines(&bytes);
        for scheme in Scheme::ALL {
            let spec = RunSpec::new(scheme).recording(true);
            let a = simulate(&s, &spec, Exec::Sequential).unwrap();
            let b = simulate(&s, &spec, Exec::Parallel).unwrap();
            assert_eq!(a.per_chip, b.per_chip);
            assert_eq!(a.frames, b.frames);
            assert_eq!(a.received.lines, s.lines, "{scheme}");
        }
    }

    #[test]
    fn raw_streams_are_never_approximated() {
        let bytes: Vec<u8> = (0..64 * 20).map(|i| (i % 3) as u8).collect();
        let s = bytes_to_cache_lines(&bytes);
        let spec = RunSpec::new(Scheme::ZacDest)
            .with_approx(ApproxConfig::approximate(SimilarityLimit::Bits(20)).with_truncation(3));
        let r = simulate(&s, &spec, Exec::default()).unwrap();
        assert_eq!(r.received.lines, s.lines);
        assert_eq!(r.frame_mix().aggregate().ohe_skip, 0);
    }

    #[test]
    fn frame_records_are_line_major() {
        let s = image_stream(vec![CacheLine([1; 64]), CacheLine([2; 64])]);
        let r = simulate(&s, &RunSpec::new(Scheme::Org).recording(true), Exec::Parallel).unwrap();
        let order: Vec<(u32, u8)> = r.frames.iter().map(|f| (f.line, f.chip)).collect();
        assert_eq!(order.len(), 16);
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }
}
