//! Encoders and decoders for the five bus schemes.
//!
//! | scheme   | table | zero path | DBI | skip |
//! |----------|-------|-----------|-----|------|
//! | ORG      |       |           |     |      |
//! | DBI      |       |           |  x  |      |
//! | BDE_ORG  |  x    |           |     |      |
//! | MBDC     |  x    |    x      |  x  |      |
//! | ZAC-DEST |  x    |    x      |  x  |  x   |
//!
//! One encoder/decoder pair runs per chip. Every frame an encoder emits must
//! be fed, in order, to the matching decoder; afterwards both tables are
//! identical.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::approx::ChipMasks;
use crate::error::{CodecError, ConfigError};
use crate::table::{DataTable, UpdatePolicy, DEFAULT_CAPACITY};
use crate::word::ChipWord;

/// Width of the binary slot index on the index line.
pub const INDEX_BITS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    Org,
    Dbi,
    BdeOrg,
    Mbdc,
    ZacDest,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Org, Scheme::Dbi, Scheme::BdeOrg, Scheme::Mbdc, Scheme::ZacDest];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Org => "ORG",
            Scheme::Dbi => "DBI",
            Scheme::BdeOrg => "BDE_ORG",
            Scheme::Mbdc => "MBDC",
            Scheme::ZacDest => "ZAC-DEST",
        }
    }

    /// Schemes whose receiver always reconstructs the (truncated) word exactly.
    pub fn is_exact(self) -> bool {
        self != Scheme::ZacDest
    }

    fn dedupe(self) -> bool {
        matches!(self, Scheme::Mbdc | Scheme::ZacDest)
    }

    fn has_zero_path(self) -> bool {
        matches!(self, Scheme::Mbdc | Scheme::ZacDest)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "ORG" => Ok(Scheme::Org),
            "DBI" => Ok(Scheme::Dbi),
            "BDEORG" => Ok(Scheme::BdeOrg),
            "MBDC" | "BDE" => Ok(Scheme::Mbdc),
            "ZACDEST" | "OHE" => Ok(Scheme::ZacDest),
            _ => Err(ConfigError::Parse {
                what: "scheme",
                input: s.to_string(),
            }),
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameType {
    Zero,
    OheSkip,
    XorEncoded,
    Raw,
}

impl FrameType {
    pub const ALL: [FrameType; 4] = [
        FrameType::Zero,
        FrameType::OheSkip,
        FrameType::XorEncoded,
        FrameType::Raw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FrameType::Zero => "ZERO",
            FrameType::OheSkip => "OHE_SKIP",
            FrameType::XorEncoded => "XOR_ENCODED",
            FrameType::Raw => "RAW",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        FrameType::ALL.get(code as usize).copied()
    }

    /// Two sideband bits: bit 0 flags an address on the data lines, bit 1 an
    /// XOR-encoded payload. ZERO and RAW share `00`; the receiver tells them
    /// apart because a RAW frame of a nonzero word never has an all-zero
    /// payload together with all-zero DBI flags.
    pub fn sideband(self) -> u8 {
        match self {
            FrameType::Zero | FrameType::Raw => 0b00,
            FrameType::OheSkip => 0b01,
            FrameType::XorEncoded => 0b10,
        }
    }

    /// Recovers the frame type from what is physically on the wire.
    pub fn from_wire(scheme: Scheme, sideband: u8, payload: ChipWord, dbi_flags: u8) -> Option<Self> {
        match sideband {
            0b00 if scheme.has_zero_path() && payload.is_zero() && dbi_flags == 0 => Some(FrameType::Zero),
            0b00 => Some(FrameType::Raw),
            0b01 => Some(FrameType::OheSkip),
            0b10 => Some(FrameType::XorEncoded),
            _ => None,
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FrameType {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FrameType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConfigError::Parse {
                what: "frame type",
                input: s.to_string(),
            })
    }
}

/// Everything one chip puts on its lines for one chip word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Frame {
    pub frame_type: FrameType,
    /// Data-line payload, after DBI where the scheme applies it.
    pub payload: ChipWord,
    /// One DBI flag per burst.
    pub dbi_flags: u8,
    /// Binary table slot carried on the index line.
    pub index: Option<u8>,
}

impl Frame {
    pub fn zero() -> Self {
        Frame {
            frame_type: FrameType::Zero,
            payload: ChipWord::ZERO,
            dbi_flags: 0,
            index: None,
        }
    }

    pub fn sideband(&self) -> u8 {
        self.frame_type.sideband()
    }

    /// Bits driven on the index line (zero when idle).
    pub fn index_bits(&self) -> u8 {
        self.index.unwrap_or(0)
    }
}

/// Per-byte bus inversion: any burst byte with more than four ones is sent
/// inverted and its flag set.
pub fn dbi_encode(w: ChipWord) -> (ChipWord, u8) {
    let mut bursts = w.bursts();
    let mut flags = 0u8;
    for (b, byte) in bursts.iter_mut().enumerate() {
        if byte.count_ones() > 4 {
            *byte = !*byte;
            flags |= 1 << b;
        }
    }
    (ChipWord::from_bursts(bursts), flags)
}

pub fn dbi_decode(payload: ChipWord, flags: u8) -> ChipWord {
    let mut bursts = payload.bursts();
    for (b, byte) in bursts.iter_mut().enumerate() {
        if flags >> b & 1 == 1 {
            *byte = !*byte;
        }
    }
    ChipWord::from_bursts(bursts)
}

pub fn ohe_encode(slot: usize) -> Result<ChipWord, CodecError> {
    if slot >= 64 {
        return Err(CodecError::SlotOutOfRange(slot));
    }
    Ok(ChipWord(1u64 << slot))
}

pub fn ohe_decode(w: ChipWord) -> Result<usize, CodecError> {
    if w.popcount() != 1 {
        return Err(CodecError::MalformedOneHot(w.0));
    }
    Ok(w.0.trailing_zeros() as usize)
}

/// Settings shared by the encoder and decoder of one chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoderConfig {
    pub capacity: usize,
    pub masks: ChipMasks,
    pub similarity_limit_bits: u32,
    pub approx_allowed: bool,
    pub update_policy: UpdatePolicy,
}

impl Default for CoderConfig {
    fn default() -> Self {
        CoderConfig::exact(DEFAULT_CAPACITY)
    }
}

impl CoderConfig {
    pub fn exact(capacity: usize) -> Self {
        CoderConfig {
            capacity,
            masks: ChipMasks::default(),
            similarity_limit_bits: 0,
            approx_allowed: false,
            update_policy: UpdatePolicy::RawOnly,
        }
    }

    pub fn approximate(capacity: usize, masks: ChipMasks, similarity_limit_bits: u32) -> Self {
        CoderConfig {
            capacity,
            masks,
            similarity_limit_bits,
            approx_allowed: true,
            update_policy: UpdatePolicy::RawOnly,
        }
    }

    pub fn with_update_policy(mut self, policy: UpdatePolicy) -> Self {
        self.update_policy = policy;
        self
    }

    fn trunc_mask(&self) -> u64 {
        if self.approx_allowed {
            self.masks.trunc
        } else {
            0
        }
    }
}

/// Sender side of one chip.
#[derive(Debug, Clone)]
pub struct Encoder {
    scheme: Scheme,
    table: DataTable,
    cfg: CoderConfig,
}

impl Encoder {
    pub fn new(scheme: Scheme, cfg: CoderConfig) -> Result<Self, ConfigError> {
        Ok(Encoder {
            scheme,
            table: DataTable::new(cfg.capacity, scheme.dedupe())?,
            cfg,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn table(&self) -> &DataTable {
        &self.table
    }

    pub fn config(&self) -> &CoderConfig {
        &self.cfg
    }

    pub fn encode(&mut self, w: ChipWord) -> Frame {
        match self.scheme {
            Scheme::Org => Frame {
                frame_type: FrameType::Raw,
                payload: w,
                dbi_flags: 0,
                index: None,
            },
            Scheme::Dbi => {
                let (payload, dbi_flags) = dbi_encode(w);
                Frame {
                    frame_type: FrameType::Raw,
                    payload,
                    dbi_flags,
                    index: None,
                }
            }
            Scheme::BdeOrg => self.bde_org_step(w),
            Scheme::Mbdc => self.mbdc_step(w),
            Scheme::ZacDest => self.zacdest_step(w),
        }
    }

    /// Original BD-Coder: XOR with the closest entry when that lowers the
    /// data weight; the index weight is not charged and DBI is not applied.
    fn bde_org_step(&mut self, w: ChipWord) -> Frame {
        if let Some(mse) = self.table.mse_search(w, 0) {
            let diff = w ^ mse.entry;
            if w.popcount() > diff.popcount() {
                if self.cfg.update_policy == UpdatePolicy::EveryAccess {
                    self.table.insert(w);
                }
                return Frame {
                    frame_type: FrameType::XorEncoded,
                    payload: diff,
                    dbi_flags: 0,
                    index: Some(mse.index as u8),
                };
            }
        }
        self.table.insert(w);
        Frame {
            frame_type: FrameType::Raw,
            payload: w,
            dbi_flags: 0,
            index: None,
        }
    }

    fn mbdc_step(&mut self, w: ChipWord) -> Frame {
        let trunc = self.cfg.trunc_mask();
        let wt = w.masked(trunc);
        if wt.is_zero() {
            return Frame::zero();
        }
        let mse = self.table.mse_search(wt, trunc);
        self.mbdc_emit(wt, mse.map(|m| (m.index, m.entry.masked(trunc))))
    }

    /// MBDC decision for an already-truncated nonzero word, given the
    /// truncated most-similar entry. Always writes `wt` to the table.
    fn mbdc_emit(&mut self, wt: ChipWord, mse: Option<(usize, ChipWord)>) -> Frame {
        let frame = match mse {
            Some((index, mset)) if wt.popcount() > (wt ^ mset).popcount() + (index as u32).count_ones() => {
                let (payload, dbi_flags) = dbi_encode(wt ^ mset);
                Frame {
                    frame_type: FrameType::XorEncoded,
                    payload,
                    dbi_flags,
                    index: Some(index as u8),
                }
            }
            _ => {
                let (payload, dbi_flags) = dbi_encode(wt);
                Frame {
                    frame_type: FrameType::Raw,
                    payload,
                    dbi_flags,
                    index: None,
                }
            }
        };
        self.table.insert(wt);
        frame
    }

    fn zacdest_step(&mut self, w: ChipWord) -> Frame {
        if !self.cfg.approx_allowed {
            return self.mbdc_step(w);
        }
        let trunc = self.cfg.masks.trunc;
        let wt = w.masked(trunc);
        if wt.is_zero() {
            return Frame::zero();
        }
        let Some(mse) = self.table.mse_search(wt, trunc) else {
            return self.mbdc_emit(wt, None);
        };
        let mset = mse.entry.masked(trunc);
        let diff = wt ^ mset;
        if mse.xor_weight <= self.cfg.similarity_limit_bits && diff.0 & self.cfg.masks.tol == 0 {
            return Frame {
                frame_type: FrameType::OheSkip,
                payload: ChipWord(1u64 << mse.index),
                dbi_flags: 0,
                index: None,
            };
        }
        self.mbdc_emit(wt, Some((mse.index, mset)))
    }
}

/// Receiver side of one chip.
#[derive(Debug, Clone)]
pub struct Decoder {
    scheme: Scheme,
    table: DataTable,
    cfg: CoderConfig,
}

impl Decoder {
    pub fn new(scheme: Scheme, cfg: CoderConfig) -> Result<Self, ConfigError> {
        Ok(Decoder {
            scheme,
            table: DataTable::new(cfg.capacity, scheme.dedupe())?,
            cfg,
        })
    }

    pub fn table(&self) -> &DataTable {
        &self.table
    }

    fn unexpected(&self, f: &Frame) -> CodecError {
        CodecError::UnexpectedFrame {
            scheme: self.scheme.name(),
            frame: f.frame_type.name(),
        }
    }

    fn lookup(&self, index: Option<u8>) -> Result<ChipWord, CodecError> {
        let index = index.ok_or(CodecError::MissingIndex)? as usize;
        self.table.get(index).ok_or(CodecError::Desync {
            index,
            occupancy: self.table.occupancy(),
        })
    }

    pub fn decode(&mut self, f: &Frame) -> Result<ChipWord, CodecError> {
        match (self.scheme, f.frame_type) {
            (Scheme::Org, FrameType::Raw) => Ok(f.payload),
            (Scheme::Dbi, FrameType::Raw) => Ok(dbi_decode(f.payload, f.dbi_flags)),
            (Scheme::BdeOrg, FrameType::XorEncoded) => {
                let w = f.payload ^ self.lookup(f.index)?;
                if self.cfg.update_policy == UpdatePolicy::EveryAccess {
                    self.table.insert(w);
                }
                Ok(w)
            }
            (Scheme::BdeOrg, FrameType::Raw) => {
                self.table.insert(f.payload);
                Ok(f.payload)
            }
            (Scheme::Mbdc | Scheme::ZacDest, FrameType::Zero) => Ok(ChipWord::ZERO),
            (Scheme::Mbdc | Scheme::ZacDest, FrameType::XorEncoded) => {
                let mset = self.lookup(f.index)?.masked(self.cfg.trunc_mask());
                let w = dbi_decode(f.payload, f.dbi_flags) ^ mset;
                self.table.insert(w);
                Ok(w)
            }
            (Scheme::Mbdc | Scheme::ZacDest, FrameType::Raw) => {
                let w = dbi_decode(f.payload, f.dbi_flags);
                self.table.insert(w);
                Ok(w)
            }
            (Scheme::ZacDest, FrameType::OheSkip) if self.cfg.approx_allowed => {
                let slot = ohe_decode(f.payload)?;
                let entry = self.table.get(slot).ok_or(CodecError::Desync {
                    index: slot,
                    occupancy: self.table.occupancy(),
                })?;
                Ok(entry.masked(self.cfg.masks.trunc))
            }
            _ => Err(self.unexpected(f)),
        }
    }
}
