//! Chip words, the cache-line layout, and truncation/tolerance masks.
//!
//! A 64-byte cache line leaves the DIMM as 8 bursts of 64 bits. With x8
//! chips each chip drives 8 lanes, so over one line a chip transmits one
//! 64-bit [`ChipWord`]. Byte `j` of the line belongs to chip `j % 8` and
//! burst `j / 8`; burst 0 is the least-significant byte of the chip word and
//! lane `l` of a burst is bit `l` of that byte.

use std::fmt;
use std::ops::{BitAnd, BitOr, BitXor, Not};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const LINE_BYTES: usize = 64;
pub const CHIPS: usize = 8;
pub const BURSTS: usize = 8;
pub const LANES: usize = 8;

/// One chip's 64-bit share of a cache line: bit `burst * 8 + lane`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ChipWord(pub u64);

impl ChipWord {
    pub const ZERO: ChipWord = ChipWord(0);

    #[inline]
    pub fn popcount(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn burst(self, burst: usize) -> u8 {
        (self.0 >> (8 * burst)) as u8
    }

    #[inline]
    pub fn bit(self, burst: usize, lane: usize) -> bool {
        (self.0 >> (burst * LANES + lane)) & 1 == 1
    }

    pub fn from_bursts(bursts: [u8; BURSTS]) -> Self {
        ChipWord(u64::from_le_bytes(bursts))
    }

    pub fn bursts(self) -> [u8; BURSTS] {
        self.0.to_le_bytes()
    }

    /// Clears every bit set in `mask`.
    #[inline]
    pub fn masked(self, mask: u64) -> Self {
        ChipWord(self.0 & !mask)
    }
}

impl fmt::Debug for ChipWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChipWord({:#018x})", self.0)
    }
}

impl fmt::Display for ChipWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#018x}", self.0)
    }
}

impl From<u64> for ChipWord {
    fn from(v: u64) -> Self {
        ChipWord(v)
    }
}

impl BitXor for ChipWord {
    type Output = ChipWord;
    #[inline]
    fn bitxor(self, rhs: ChipWord) -> ChipWord {
        ChipWord(self.0 ^ rhs.0)
    }
}

impl BitAnd for ChipWord {
    type Output = ChipWord;
    #[inline]
    fn bitand(self, rhs: ChipWord) -> ChipWord {
        ChipWord(self.0 & rhs.0)
    }
}

impl BitOr for ChipWord {
    type Output = ChipWord;
    #[inline]
    fn bitor(self, rhs: ChipWord) -> ChipWord {
        ChipWord(self.0 | rhs.0)
    }
}

impl Not for ChipWord {
    type Output = ChipWord;
    #[inline]
    fn not(self) -> ChipWord {
        ChipWord(!self.0)
    }
}

/// Hamming weight of a chip word.
#[inline]
pub fn popcount(w: ChipWord) -> u32 {
    w.popcount()
}

/// 64 bytes in memory order.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CacheLine(pub [u8; LINE_BYTES]);

impl Default for CacheLine {
    fn default() -> Self {
        CacheLine([0; LINE_BYTES])
    }
}

impl fmt::Debug for CacheLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CacheLine(")?;
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

impl CacheLine {
    /// Copies up to 64 bytes, zero-filling the remainder.
    pub fn from_prefix(bytes: &[u8]) -> Self {
        let mut line = [0u8; LINE_BYTES];
        let n = bytes.len().min(LINE_BYTES);
        line[..n].copy_from_slice(&bytes[..n]);
        CacheLine(line)
    }

    pub fn as_bytes(&self) -> &[u8; LINE_BYTES] {
        &self.0
    }

    pub fn split(&self) -> [ChipWord; CHIPS] {
        split_cache_line(self)
    }
}

/// Position of line byte `j` as `(chip, burst)`.
#[inline]
pub const fn byte_position(j: usize) -> (usize, usize) {
    (j % CHIPS, j / CHIPS)
}

pub fn split_cache_line(line: &CacheLine) -> [ChipWord; CHIPS] {
    let mut words = [0u64; CHIPS];
    for (j, &byte) in line.0.iter().enumerate() {
        let (chip, burst) = byte_position(j);
        words[chip] |= (byte as u64) << (8 * burst);
    }
    words.map(ChipWord)
}

pub fn merge_chip_words(words: &[ChipWord; CHIPS]) -> CacheLine {
    let mut line = [0u8; LINE_BYTES];
    for (j, byte) in line.iter_mut().enumerate() {
        let (chip, burst) = byte_position(j);
        *byte = words[chip].burst(burst);
    }
    CacheLine(line)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Truncation,
    Tolerance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BitMask {
    pub mask: u64,
    pub kind: MaskKind,
}

impl BitMask {
    pub fn empty(kind: MaskKind) -> Self {
        BitMask { mask: 0, kind }
    }

    pub fn count(&self) -> u32 {
        self.mask.count_ones()
    }
}

pub(crate) fn check_width(width: u32) -> Result<(), ConfigError> {
    match width {
        8 | 16 | 32 | 64 => Ok(()),
        w => Err(ConfigError::ValueWidth(w)),
    }
}

/// Mask over the chip word tiled by `value_width`-bit chunks starting at bit 0.
///
/// Truncation selects the `bits_per_value` LSBs of each chunk, tolerance the
/// `bits_per_value` MSBs.
pub fn build_mask(kind: MaskKind, value_width: u32, bits_per_value: u32) -> Result<BitMask, ConfigError> {
    check_width(value_width)?;
    if bits_per_value >= value_width {
        return Err(ConfigError::BitsPerValue {
            bits: bits_per_value,
            width: value_width,
        });
    }
    if bits_per_value == 0 {
        return Ok(BitMask::empty(kind));
    }
    let chunk = low_bits(bits_per_value);
    let chunk = match kind {
        MaskKind::Truncation => chunk,
        MaskKind::Tolerance => chunk << (value_width - bits_per_value),
    };
    let mut mask = 0u64;
    for start in (0..64).step_by(value_width as usize) {
        mask |= chunk << start;
    }
    Ok(BitMask { mask, kind })
}

#[inline]
fn low_bits(n: u32) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Distributes a per-value bit pattern (little-endian bytes, `value_bytes`
/// long) over every value slot of a cache line, then through the byte layout
/// onto the eight chip words.
pub fn layout_masks(value_pattern: u64, value_bytes: usize, kind: MaskKind) -> [BitMask; CHIPS] {
    debug_assert!(matches!(value_bytes, 1 | 2 | 4 | 8));
    let mut masks = [0u64; CHIPS];
    for j in 0..LINE_BYTES {
        let byte_mask = (value_pattern >> (8 * (j % value_bytes))) & 0xFF;
        let (chip, burst) = byte_position(j);
        masks[chip] |= byte_mask << (8 * burst);
    }
    masks.map(|mask| BitMask { mask, kind })
}

/// IEEE-754 sign bit plus the 8 exponent bits of every little-endian float32
/// in the line, mapped onto chips.
pub fn float32_tolerance_masks() -> [BitMask; CHIPS] {
    layout_masks(0xFF80_0000, 4, MaskKind::Tolerance)
}

/// The `mantissa_bits` least significant mantissa bits of every float32.
pub fn float32_truncation_masks(mantissa_bits: u32) -> Result<[BitMask; CHIPS], ConfigError> {
    if mantissa_bits > 23 {
        return Err(ConfigError::MaskOverlap {
            trunc: mantissa_bits,
            tol: 9,
            width: 32,
        });
    }
    Ok(layout_masks(low_bits(mantissa_bits), 4, MaskKind::Truncation))
}
