//! Per-frame log of what each chip put on the bus.
//!
//! Binary layout: the 8-byte header `BEFL`, `u16` version, `u16` reserved,
//! then fixed 20-byte little-endian records:
//!
//! ```text
//! line u32 | chip u8 | frame_type u8 | dbi_flags u8 | index u8 | payload u64 | config_id u32
//! ```
//!
//! `index` is `0xFF` when the index line was idle. The JSON-lines form holds
//! one object per record with the frame type by name and the payload in hex.

use std::io::{self, BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::codec::{Frame, FrameType};
use crate::error::TraceError;
use crate::word::{ChipWord, CHIPS};

pub const LOG_MAGIC: [u8; 4] = *b"BEFL";
pub const LOG_VERSION: u16 = 1;
pub const RECORD_BYTES: usize = 20;
const NO_INDEX: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRecord {
    pub line: u32,
    pub chip: u8,
    pub frame: Frame,
    /// Identifies the run configuration within a sweep.
    pub config_id: u32,
}

impl FrameRecord {
    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut b = [0u8; RECORD_BYTES];
        b[0..4].copy_from_slice(&self.line.to_le_bytes());
        b[4] = self.chip;
        b[5] = self.frame.frame_type.code();
        b[6] = self.frame.dbi_flags;
        b[7] = self.frame.index.unwrap_or(NO_INDEX);
        b[8..16].copy_from_slice(&self.frame.payload.0.to_le_bytes());
        b[16..20].copy_from_slice(&self.config_id.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_BYTES]) -> Result<Self, String> {
        let frame_type = FrameType::from_code(b[5]).ok_or_else(|| format!("unknown frame type {}", b[5]))?;
        if b[4] as usize >= CHIPS {
            return Err(format!("chip {} out of range", b[4]));
        }
        let index = match b[7] {
            NO_INDEX => None,
            i if i < 64 => Some(i),
            i => return Err(format!("index {i} out of range")),
        };
        Ok(FrameRecord {
            line: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            chip: b[4],
            frame: Frame {
                frame_type,
                payload: ChipWord(u64::from_le_bytes(b[8..16].try_into().unwrap())),
                dbi_flags: b[6],
                index,
            },
            config_id: u32::from_le_bytes(b[16..20].try_into().unwrap()),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    line: u32,
    chip: u8,
    frame_type: String,
    payload: String,
    dbi_flags: u8,
    index: Option<u8>,
    config_id: u32,
}

impl From<&FrameRecord> for JsonRecord {
    fn from(r: &FrameRecord) -> Self {
        JsonRecord {
            line: r.line,
            chip: r.chip,
            frame_type: r.frame.frame_type.name().to_string(),
            payload: format!("{:#018x}", r.frame.payload.0),
            dbi_flags: r.frame.dbi_flags,
            index: r.frame.index,
            config_id: r.config_id,
        }
    }
}

impl TryFrom<JsonRecord> for FrameRecord {
    type Error = String;
    fn try_from(j: JsonRecord) -> Result<Self, String> {
        let frame_type: FrameType = j.frame_type.parse().map_err(|e| format!("{e}"))?;
        let hex = j.payload.trim_start_matches("0x");
        let payload = u64::from_str_radix(hex, 16).map_err(|e| format!("payload {:?}: {e}", j.payload))?;
        if j.chip as usize >= CHIPS {
            return Err(format!("chip {} out of range", j.chip));
        }
        Ok(FrameRecord {
            line: j.line,
            chip: j.chip,
            frame: Frame {
                frame_type,
                payload: ChipWord(payload),
                dbi_flags: j.dbi_flags,
                index: j.index,
            },
            config_id: j.config_id,
        })
    }
}

pub fn write_frame_log<W: Write>(mut w: W, records: &[FrameRecord]) -> io::Result<()> {
    w.write_all(&LOG_MAGIC)?;
    w.write_all(&LOG_VERSION.to_le_bytes())?;
    w.write_all(&[0, 0])?;
    for r in records {
        w.write_all(&r.to_bytes())?;
    }
    w.flush()
}

pub fn read_frame_log<R: Read>(mut r: R) -> Result<Vec<FrameRecord>, TraceError> {
    let mut header = [0u8; 8];
    r.read_exact(&mut header)
        .map_err(|_| TraceError::format("offset 0", "truncated frame-log header"))?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != LOG_MAGIC {
        return Err(TraceError::BadMagic(magic));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != LOG_VERSION {
        return Err(TraceError::Version(version));
    }
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % RECORD_BYTES != 0 {
        return Err(TraceError::format(
            format!("offset {}", 8 + body.len() / RECORD_BYTES * RECORD_BYTES),
            format!("trailing {} bytes do not form a record", body.len() % RECORD_BYTES),
        ));
    }
    body.chunks_exact(RECORD_BYTES)
        .enumerate()
        .map(|(i, c)| {
            FrameRecord::from_bytes(c.try_into().unwrap())
                .map_err(|m| TraceError::format(format!("offset {}", 8 + i * RECORD_BYTES), m))
        })
        .collect()
}

pub fn write_frame_log_jsonl<W: Write>(mut w: W, records: &[FrameRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &JsonRecord::from(r))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_frame_log_jsonl<R: BufRead>(r: R) -> Result<Vec<FrameRecord>, TraceError> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = || format!("line {}", n + 1);
        let j: JsonRecord = serde_json::from_str(&line)
            .map_err(|e| TraceError::format(format!("line {}, column {}", n + 1, e.column()), e.to_string()))?;
        out.push(FrameRecord::try_from(j).map_err(|m| TraceError::format(loc(), m))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<FrameRecord> {
        let mk = |line, chip, frame_type, payload, index| FrameRecord {
            line,
            chip,
            frame: Frame {
                frame_type,
                payload: ChipWord(payload),
                dbi_flags: 0b1010_0001,
                index,
            },
            config_id: 7,
        };
        vec![
            mk(0, 0, FrameType::Raw, 0xDEAD_BEEF_0000_0001, None),
            mk(0, 7, FrameType::XorEncoded, 0x10, Some(63)),
            mk(u32::MAX, 3, FrameType::OheSkip, 1 << 63, None),
            mk(2, 1, FrameType::Zero, 0, None),
        ]
    }

    #[test]
    fn binary_round_trip() {
        let mut buf = Vec::new();
        write_frame_log(&mut buf, &sample()).unwrap();
        assert_eq!(buf.len(), 8 + 4 * RECORD_BYTES);
        assert_eq!(read_frame_log(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn binary_record_layout() {
        let b = sample()[1].to_bytes();
        assert_eq!(b[4..8], [7, FrameType::XorEncoded.code(), 0b1010_0001, 63]);
        assert_eq!(b[8], 0x10);
        assert_eq!(sample()[0].to_bytes()[7], 0xFF);
    }

    #[test]
    fn binary_rejects_damage() {
        let mut buf = Vec::new();
        write_frame_log(&mut buf, &sample()).unwrap();
        let mut bad = buf.clone();
        bad[8 + 5] = 9;
        assert!(matches!(read_frame_log(&bad[..]), Err(TraceError::Format { .. })));
        assert!(read_frame_log(&buf[..buf.len() - 3]).is_err());
        assert!(matches!(
            read_frame_log(&b"XXXX\x01\x00\x00\x00"[..]),
            Err(TraceError::BadMagic(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut buf = Vec::new();
        write_frame_log_jsonl(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().contains("\"frame_type\":\"RAW\""));
        assert_eq!(read_frame_log_jsonl(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn jsonl_reports_line() {
        let err = read_frame_log_jsonl(&b"\n{\"line\":1}\n"[..]).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
