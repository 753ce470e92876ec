//! Approximation knobs: similarity limit, truncation and tolerance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::word::{build_mask, check_width, float32_tolerance_masks, float32_truncation_masks, MaskKind, CHIPS};

/// Maximum number of dissimilar (non-truncated) bits for a skipped transfer.
///
/// Written either as a percentage preset (`"90%"`) or a raw bit count (`"7"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SimilarityLimit {
    Percent(u32),
    Bits(u32),
}

impl SimilarityLimit {
    pub const PRESETS: [u32; 4] = [90, 80, 75, 70];

    pub fn preset(percent: u32) -> Result<Self, ConfigError> {
        preset_bits(percent)?;
        Ok(SimilarityLimit::Percent(percent))
    }

    pub fn bits(self) -> u32 {
        match self {
            SimilarityLimit::Percent(p) => preset_bits(p).expect("validated preset"),
            SimilarityLimit::Bits(b) => b,
        }
    }
}

/// Dissimilar-bit budget for the four similarity presets.
pub fn preset_bits(percent: u32) -> Result<u32, ConfigError> {
    match percent {
        90 => Ok(7),
        80 => Ok(13),
        75 => Ok(16),
        70 => Ok(20),
        p => Err(ConfigError::SimilarityPreset(p)),
    }
}

impl fmt::Display for SimilarityLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimilarityLimit::Percent(p) => write!(f, "{p}%"),
            SimilarityLimit::Bits(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for SimilarityLimit {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parse_err = || ConfigError::Parse {
            what: "similarity limit",
            input: s.to_string(),
        };
        if let Some(p) = s.strip_suffix('%') {
            let p: u32 = p.trim().parse().map_err(|_| parse_err())?;
            SimilarityLimit::preset(p)
        } else {
            let b: u32 = s.parse().map_err(|_| parse_err())?;
            if b > 64 {
                return Err(ConfigError::SimilarityBits(b));
            }
            Ok(SimilarityLimit::Bits(b))
        }
    }
}

impl TryFrom<String> for SimilarityLimit {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SimilarityLimit> for String {
    fn from(l: SimilarityLimit) -> String {
        l.to_string()
    }
}

/// Which MSBs must match exactly before a transfer may be skipped.
///
/// Textual form counts protected bits per 64-bit word: `"0"`, `"8"` (N/8 of
/// each value), `"16"` (N/4), or `"float32"` (sign and exponent of every
/// float in the line).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ToleranceMode {
    #[default]
    None,
    Eighth,
    Quarter,
    Float32,
}

impl ToleranceMode {
    pub fn bits_per_value(self, value_width: u32) -> u32 {
        match self {
            ToleranceMode::None => 0,
            ToleranceMode::Eighth => value_width / 8,
            ToleranceMode::Quarter => value_width / 4,
            ToleranceMode::Float32 => 9,
        }
    }
}

impl fmt::Display for ToleranceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ToleranceMode::None => "0",
            ToleranceMode::Eighth => "8",
            ToleranceMode::Quarter => "16",
            ToleranceMode::Float32 => "float32",
        })
    }
}

impl FromStr for ToleranceMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "none" => Ok(ToleranceMode::None),
            "8" | "n/8" => Ok(ToleranceMode::Eighth),
            "16" | "n/4" => Ok(ToleranceMode::Quarter),
            "float32" | "f32" => Ok(ToleranceMode::Float32),
            _ => Err(ConfigError::Parse {
                what: "tolerance",
                input: s.to_string(),
            }),
        }
    }
}

impl TryFrom<String> for ToleranceMode {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ToleranceMode> for String {
    fn from(t: ToleranceMode) -> String {
        t.to_string()
    }
}

/// Truncation and tolerance masks for one chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChipMasks {
    pub trunc: u64,
    pub tol: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApproxConfig {
    pub similarity_limit_bits: u32,
    pub value_width: u32,
    pub trunc_bits_per_value: u32,
    pub tolerance: ToleranceMode,
    pub approx_allowed: bool,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig::exact()
    }
}

impl ApproxConfig {
    /// No truncation, no tolerance, no skipping.
    pub fn exact() -> Self {
        ApproxConfig {
            similarity_limit_bits: 0,
            value_width: 8,
            trunc_bits_per_value: 0,
            tolerance: ToleranceMode::None,
            approx_allowed: false,
        }
    }

    pub fn approximate(limit: SimilarityLimit) -> Self {
        ApproxConfig {
            similarity_limit_bits: limit.bits(),
            approx_allowed: true,
            ..ApproxConfig::exact()
        }
    }

    pub fn with_truncation(mut self, bits_per_value: u32) -> Self {
        self.trunc_bits_per_value = bits_per_value;
        self
    }

    pub fn with_tolerance(mut self, tolerance: ToleranceMode) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_value_width(mut self, width: u32) -> Self {
        self.value_width = width;
        self
    }

    /// Retargets the knobs at a float32 stream: 32-bit values, sign and
    /// exponent always protected. A truncation given in bits per 64-bit word
    /// is rescaled to bits per float.
    pub fn for_float32(self) -> Self {
        let trunc = if self.value_width == 32 {
            self.trunc_bits_per_value
        } else {
            self.trunc_bits_per_value * 64 / self.value_width / 2
        };
        ApproxConfig {
            value_width: 32,
            trunc_bits_per_value: trunc,
            tolerance: ToleranceMode::Float32,
            ..self
        }
    }

    /// Converts a truncation expressed as bits per 64-bit word into bits per value.
    pub fn truncation_from_total(total: u32, value_width: u32) -> Result<u32, ConfigError> {
        check_width(value_width)?;
        let chunks = 64 / value_width;
        if !total.is_multiple_of(chunks) {
            return Err(ConfigError::TruncationTotal {
                total,
                width: value_width,
            });
        }
        Ok(total / chunks)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        check_width(self.value_width)?;
        if self.similarity_limit_bits > 64 {
            return Err(ConfigError::SimilarityBits(self.similarity_limit_bits));
        }
        if self.trunc_bits_per_value >= self.value_width {
            return Err(ConfigError::BitsPerValue {
                bits: self.trunc_bits_per_value,
                width: self.value_width,
            });
        }
        if self.tolerance == ToleranceMode::Float32 && self.value_width != 32 {
            return Err(ConfigError::Float32Width(self.value_width));
        }
        let tol = self.tolerance.bits_per_value(self.value_width);
        if self.trunc_bits_per_value + tol > self.value_width {
            return Err(ConfigError::MaskOverlap {
                trunc: self.trunc_bits_per_value,
                tol,
                width: self.value_width,
            });
        }
        Ok(())
    }

    /// Per-chip masks. Streams that may not be approximated get empty masks.
    pub fn chip_masks(&self) -> Result<[ChipMasks; CHIPS], ConfigError> {
        self.validate()?;
        if !self.approx_allowed {
            return Ok([ChipMasks::default(); CHIPS]);
        }
        if self.tolerance == ToleranceMode::Float32 {
            let tol = float32_tolerance_masks();
            let trunc = float32_truncation_masks(self.trunc_bits_per_value)?;
            let mut out = [ChipMasks::default(); CHIPS];
            for c in 0..CHIPS {
                out[c] = ChipMasks {
                    trunc: trunc[c].mask,
                    tol: tol[c].mask,
                };
            }
            return Ok(out);
        }
        let trunc = build_mask(MaskKind::Truncation, self.value_width, self.trunc_bits_per_value)?;
        let tol = build_mask(
            MaskKind::Tolerance,
            self.value_width,
            self.tolerance.bits_per_value(self.value_width),
        )?;
        Ok([ChipMasks {
            trunc: trunc.mask,
            tol: tol.mask,
        }; CHIPS])
    }

    /// Truncated bits per 64-bit word, the unit the sweep reports use.
    pub fn truncation_total(&self) -> u32 {
        self.trunc_bits_per_value * (64 / self.value_width)
    }
}
