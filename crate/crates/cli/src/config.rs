//! Run configuration: a TOML file, then command-line overrides on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use busenc::table::DEFAULT_CAPACITY;
use busenc::{
    ApproxConfig, EnergyParams, Exec, RunSpec, Scheme, SidebandCost, SimilarityLimit, ToleranceMode, UpdatePolicy,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameLogFormat {
    #[default]
    None,
    Binary,
    Jsonl,
}

/// Grid for `sweep`; every combination is run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub limits: Vec<SimilarityLimit>,
    /// Truncated bits per 64-bit word.
    pub truncations: Vec<u32>,
    pub tolerances: Vec<ToleranceMode>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            limits: SimilarityLimit::PRESETS.map(SimilarityLimit::Percent).to_vec(),
            truncations: vec![0],
            tolerances: vec![ToleranceMode::None],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schemes: Vec<Scheme>,
    /// Reference for the percentage columns; must be one of `schemes`.
    pub baseline: Scheme,
    /// Files or directories (directories are scanned one level deep).
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub table_capacity: usize,
    pub limit: SimilarityLimit,
    pub value_width: u32,
    /// Truncated bits per 64-bit word.
    pub truncation: u32,
    pub tolerance: ToleranceMode,
    pub sideband: SidebandCost,
    pub update_policy: UpdatePolicy,
    pub exec: Exec,
    pub frame_log: FrameLogFormat,
    pub dump_tables: bool,
    /// Also write every received trace.
    pub save_traces: bool,
    pub energy: EnergyParams,
    pub sweep: SweepGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schemes: vec![Scheme::Org, Scheme::Dbi, Scheme::BdeOrg, Scheme::Mbdc, Scheme::ZacDest],
            baseline: Scheme::Org,
            inputs: Vec::new(),
            output_dir: PathBuf::from("busenc-out"),
            seed: 0,
            table_capacity: DEFAULT_CAPACITY,
            limit: SimilarityLimit::Percent(80),
            value_width: 8,
            truncation: 0,
            tolerance: ToleranceMode::None,
            sideband: SidebandCost::Counted,
            update_policy: UpdatePolicy::RawOnly,
            exec: Exec::default(),
            frame_log: FrameLogFormat::None,
            dump_tables: false,
            save_traces: false,
            energy: EnergyParams::default(),
            sweep: SweepGrid::default(),
        }
    }
}

/// Knob setting for one job.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Knobs {
    pub limit: SimilarityLimit,
    pub truncation: u32,
    pub tolerance: ToleranceMode,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
        Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn knobs(&self) -> Knobs {
        Knobs {
            limit: self.limit,
            truncation: self.truncation,
            tolerance: self.tolerance,
        }
    }

    /// Sweep grid points in row order: limit outermost, tolerance innermost.
    pub fn grid(&self) -> Vec<Knobs> {
        let g = &self.sweep;
        let mut out = Vec::new();
        for &limit in &g.limits {
            for &truncation in &g.truncations {
                for &tolerance in &g.tolerances {
                    out.push(Knobs {
                        limit,
                        truncation,
                        tolerance,
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schemes.is_empty() {
            return Err(CliError::Usage("no schemes selected".into()));
        }
        if !self.schemes.contains(&self.baseline) {
            return Err(CliError::Usage(format!(
                "baseline {} is not among the selected schemes",
                self.baseline
            )));
        }
        if !self.energy.is_valid() {
            return Err(CliError::Usage("energy parameters must be positive and finite".into()));
        }
        busenc::DataTable::new(self.table_capacity, false)?;
        self.approx(self.knobs())?.validate()?;
        Ok(())
    }

    pub fn validate_grid(&self) -> CliResult<()> {
        let g = &self.sweep;
        if g.limits.is_empty() || g.truncations.is_empty() || g.tolerances.is_empty() {
            return Err(CliError::Usage("sweep grid has an empty axis".into()));
        }
        for k in self.grid() {
            self.approx(k)?.validate()?;
        }
        Ok(())
    }

    /// Approximation settings for `k`. A float32 tolerance implies 32-bit values.
    pub fn approx(&self, k: Knobs) -> CliResult<ApproxConfig> {
        let width = if k.tolerance == ToleranceMode::Float32 {
            32
        } else {
            self.value_width
        };
        let per_value = ApproxConfig::truncation_from_total(k.truncation, width)?;
        Ok(ApproxConfig::approximate(k.limit)
            .with_value_width(width)
            .with_truncation(per_value)
            .with_tolerance(k.tolerance))
    }

    /// Knobs reach ZAC-DEST only; every other scheme runs exact.
    pub fn spec(&self, scheme: Scheme, k: Knobs, config_id: u32) -> CliResult<RunSpec> {
        let mut spec = RunSpec::new(scheme)
            .with_capacity(self.table_capacity)
            .with_sideband(self.sideband)
            .with_update_policy(self.update_policy)
            .recording(self.frame_log != FrameLogFormat::None);
        spec.config_id = config_id;
        if scheme == Scheme::ZacDest {
            spec = spec.with_approx(self.approx(k)?);
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn customized_round_trip() {
        let cfg = RunConfig {
            schemes: vec![Scheme::Mbdc, Scheme::ZacDest],
            baseline: Scheme::Mbdc,
            inputs: vec!["a.pgm".into(), "dir".into()],
            limit: SimilarityLimit::Bits(11),
            truncation: 16,
            tolerance: ToleranceMode::Float32,
            frame_log: FrameLogFormat::Jsonl,
            energy: EnergyParams {
                v_dd: 1.1,
                ..EnergyParams::default()
            },
            sweep: SweepGrid {
                limits: vec![SimilarityLimit::Percent(90), SimilarityLimit::Bits(3)],
                truncations: vec![0, 16],
                tolerances: vec![ToleranceMode::Eighth],
            },
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml("schemes = [\"ORG\", \"ZAC-DEST\"]\nlimit = \"90%\"\n").unwrap();
        assert_eq!(cfg.limit.bits(), 7);
        assert_eq!(cfg.table_capacity, 64);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn baseline_must_be_selected() {
        let cfg = RunConfig {
            schemes: vec![Scheme::Mbdc],
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }

    #[test]
    fn grid_is_cartesian() {
        let mut cfg = RunConfig::default();
        cfg.sweep.truncations = vec![0, 16];
        assert_eq!(cfg.grid().len(), 8);
        assert!(cfg.validate_grid().is_ok());
        cfg.sweep.truncations = vec![12];
        assert!(cfg.validate_grid().is_err());
    }

    #[test]
    fn float32_tolerance_switches_value_width() {
        let cfg = RunConfig::default();
        let k = Knobs {
            limit: SimilarityLimit::Percent(80),
            truncation: 16,
            tolerance: ToleranceMode::Float32,
        };
        let a = cfg.approx(k).unwrap();
        assert_eq!((a.value_width, a.trunc_bits_per_value), (32, 8));
    }
}
