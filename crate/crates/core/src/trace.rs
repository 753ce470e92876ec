//! Cache-line traces: ingest images, float32 tensors and raw bytes, rebuild
//! them from received lines, and store them on disk.
//!
//! On-disk format (all integers little-endian):
//!
//! ```text
//! offset size field
//!      0    4 magic "BETR"
//!      4    2 version (1)
//!      6    1 kind (0 raw, 1 image, 2 tensor_f32)
//!      7    1 approx_allowed (0/1)
//!      8    2 element width in bits
//!     10    2 channels
//!     12    4 width
//!     16    4 height
//!     20    4 pad length in bytes
//!     24    8 line count
//!     32      line_count * 64 bytes of cache lines
//! ```
//!
//! The hex text form carries the same header as `# key=value` comments
//! followed by one 128-character hex line per cache line.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::word::{CacheLine, LINE_BYTES};

pub const TRACE_MAGIC: [u8; 4] = *b"BETR";
pub const TRACE_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Raw,
    Image,
    TensorF32,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Raw => "raw",
            TraceKind::Image => "image",
            TraceKind::TensorF32 => "tensor_f32",
        }
    }

    fn code(self) -> u8 {
        match self {
            TraceKind::Raw => 0,
            TraceKind::Image => 1,
            TraceKind::TensorF32 => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(TraceKind::Raw),
            1 => Some(TraceKind::Image),
            2 => Some(TraceKind::TensorF32),
            _ => None,
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [TraceKind::Raw, TraceKind::Image, TraceKind::TensorF32]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub kind: TraceKind,
    /// Pixels per row, float count, or byte count depending on `kind`.
    pub width: u32,
    pub height: u32,
    pub channels: u16,
    pub element_width: u16,
    pub pad_len: u32,
}

impl TraceMeta {
    pub fn payload_len(&self) -> usize {
        match self.kind {
            TraceKind::Image => self.width as usize * self.height as usize * self.channels as usize,
            TraceKind::TensorF32 => self.width as usize * 4,
            TraceKind::Raw => self.width as usize,
        }
    }
}

/// A stream of cache lines plus what is needed to invert the serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStream {
    pub lines: Vec<CacheLine>,
    pub meta: TraceMeta,
    pub approx_allowed: bool,
}

impl TraceStream {
    fn from_bytes(bytes: &[u8], meta: TraceMeta, approx_allowed: bool) -> Self {
        let lines: Vec<CacheLine> = bytes.chunks(LINE_BYTES).map(CacheLine::from_prefix).collect();
        let pad_len = (lines.len() * LINE_BYTES - bytes.len()) as u32;
        TraceStream {
            lines,
            meta: TraceMeta { pad_len, ..meta },
            approx_allowed,
        }
    }

    /// Same metadata, different (e.g. received) lines.
    pub fn with_lines(&self, lines: Vec<CacheLine>) -> Self {
        TraceStream {
            lines,
            meta: self.meta,
            approx_allowed: self.approx_allowed,
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Serialized bytes with the tail padding stripped.
    pub fn payload(&self) -> Result<Vec<u8>, TraceError> {
        let total = self.lines.len() * LINE_BYTES;
        let expected = self.meta.payload_len();
        if total < self.meta.pad_len as usize || total - self.meta.pad_len as usize != expected {
            return Err(TraceError::ByteCount {
                expected,
                actual: total.saturating_sub(self.meta.pad_len as usize),
            });
        }
        let mut out = Vec::with_capacity(total);
        for line in &self.lines {
            out.extend_from_slice(line.as_bytes());
        }
        out.truncate(expected);
        Ok(out)
    }
}

/// 8-bit raster, row-major, channels interleaved (R, G, B per pixel).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, TraceError> {
        if channels != 1 && channels != 3 {
            return Err(TraceError::UnsupportedImage(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(TraceError::ByteCount {
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn gray(width: usize, height: usize, data: Vec<u8>) -> Result<Self, TraceError> {
        Raster::new(width, height, 1, data)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    /// Reads PGM, PPM or PNG with 8-bit channels. Alpha is dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        use image::DynamicImage;
        let img = image::open(path.as_ref()).map_err(|e| match e {
            image::ImageError::IoError(io) => TraceError::Io(io),
            other => TraceError::Image(other.to_string()),
        })?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageLuma8(b) => Raster::gray(w, h, b.into_raw()),
            DynamicImage::ImageLumaA8(_) => Raster::gray(w, h, img.to_luma8().into_raw()),
            DynamicImage::ImageRgb8(b) => Raster::new(w, h, 3, b.into_raw()),
            DynamicImage::ImageRgba8(_) => Raster::new(w, h, 3, img.to_rgb8().into_raw()),
            other => Err(TraceError::UnsupportedImage(format!(
                "{:?} (only 8-bit channels are supported)",
                other.color()
            ))),
        }
    }

    /// Writes binary PGM (gray) or PPM (RGB).
    pub fn write_pnm<W: Write>(&self, mut w: W) -> io::Result<()> {
        let tag = if self.channels == 1 { "P5" } else { "P6" };
        write!(w, "{tag}\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.data)
    }

    pub fn save_pnm(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut f = BufWriter::new(fs::File::create(path)?);
        self.write_pnm(&mut f)?;
        f.flush()
    }

    /// Conventional extension for [`Raster::save_pnm`].
    pub fn pnm_extension(&self) -> &'static str {
        if self.channels == 1 {
            "pgm"
        } else {
            "ppm"
        }
    }
}

pub fn image_to_cache_lines(img: &Raster) -> TraceStream {
    let meta = TraceMeta {
        kind: TraceKind::Image,
        width: img.width as u32,
        height: img.height as u32,
        channels: img.channels as u16,
        element_width: 8,
        pad_len: 0,
    };
    TraceStream::from_bytes(&img.data, meta, true)
}

pub fn cache_lines_to_image(s: &TraceStream) -> Result<Raster, TraceError> {
    if s.meta.kind != TraceKind::Image {
        return Err(TraceError::WrongKind(s.meta.kind.name()));
    }
    let data = s.payload()?;
    Raster::new(
        s.meta.width as usize,
        s.meta.height as usize,
        s.meta.channels as usize,
        data,
    )
}

pub fn tensor_f32_to_cache_lines(values: &[f32]) -> TraceStream {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let meta = TraceMeta {
        kind: TraceKind::TensorF32,
        width: values.len() as u32,
        height: 1,
        channels: 1,
        element_width: 32,
        pad_len: 0,
    };
    TraceStream::from_bytes(&bytes, meta, true)
}

pub fn cache_lines_to_tensor(s: &TraceStream) -> Result<Vec<f32>, TraceError> {
    if s.meta.kind != TraceKind::TensorF32 {
        return Err(TraceError::WrongKind(s.meta.kind.name()));
    }
    Ok(s.payload()?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn bytes_to_cache_lines(bytes: &[u8]) -> TraceStream {
    let meta = TraceMeta {
        kind: TraceKind::Raw,
        width: bytes.len() as u32,
        height: 1,
        channels: 1,
        element_width: 8,
        pad_len: 0,
    };
    // raw binaries carry no error-resilience annotation
    TraceStream::from_bytes(bytes, meta, false)
}

pub fn raw_to_cache_lines(path: impl AsRef<Path>) -> Result<TraceStream, TraceError> {
    Ok(bytes_to_cache_lines(&fs::read(path)?))
}

/// Reads a little-endian float32 file.
pub fn read_f32_file(path: impl AsRef<Path>) -> Result<Vec<f32>, TraceError> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(TraceError::format(
            format!("offset {}", bytes.len() - bytes.len() % 4),
            "float32 file length is not a multiple of 4",
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_f32_file(path: impl AsRef<Path>, values: &[f32]) -> io::Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)
}

pub fn write_trace<W: Write>(mut w: W, s: &TraceStream) -> io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&TRACE_MAGIC);
    header[4..6].copy_from_slice(&TRACE_VERSION.to_le_bytes());
    header[6] = s.meta.kind.code();
    header[7] = s.approx_allowed as u8;
    header[8..10].copy_from_slice(&s.meta.element_width.to_le_bytes());
    header[10..12].copy_from_slice(&s.meta.channels.to_le_bytes());
    header[12..16].copy_from_slice(&s.meta.width.to_le_bytes());
    header[16..20].copy_from_slice(&s.meta.height.to_le_bytes());
    header[20..24].copy_from_slice(&s.meta.pad_len.to_le_bytes());
    header[24..32].copy_from_slice(&(s.lines.len() as u64).to_le_bytes());
    w.write_all(&header)?;
    for line in &s.lines {
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> Result<TraceStream, TraceError> {
    let mut header = [0u8; HEADER_LEN];
    read_exact_at(&mut r, &mut header, 0)?;
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != TRACE_MAGIC {
        return Err(TraceError::BadMagic(magic));
    }
    let u16_at = |o: usize| u16::from_le_bytes([header[o], header[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != TRACE_VERSION {
        return Err(TraceError::Version(version));
    }
    let kind = TraceKind::from_code(header[6])
        .ok_or_else(|| TraceError::format("offset 6", format!("unknown kind code {}", header[6])))?;
    let approx_allowed = match header[7] {
        0 => false,
        1 => true,
        v => return Err(TraceError::format("offset 7", format!("approx flag {v} is not 0/1"))),
    };
    let meta = TraceMeta {
        kind,
        element_width: u16_at(8),
        channels: u16_at(10),
        width: u32_at(12),
        height: u32_at(16),
        pad_len: u32_at(20),
    };
    let count = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
    let mut lines = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let mut buf = [0u8; LINE_BYTES];
        read_exact_at(&mut r, &mut buf, HEADER_LEN + i * LINE_BYTES)?;
        lines.push(CacheLine(buf));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(TraceError::format(
            format!("offset {}", HEADER_LEN + count * LINE_BYTES),
            "trailing bytes after last cache line",
        ));
    }
    let stream = TraceStream {
        lines,
        meta,
        approx_allowed,
    };
    check_meta(&stream)?;
    Ok(stream)
}

fn read_exact_at<R: Read>(r: &mut R, buf: &mut [u8], offset: usize) -> Result<(), TraceError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => TraceError::format(format!("offset {offset}"), "truncated trace"),
        _ => TraceError::Io(e),
    })
}

fn check_meta(s: &TraceStream) -> Result<(), TraceError> {
    let total = s.lines.len() * LINE_BYTES;
    let pad = s.meta.pad_len as usize;
    if pad >= LINE_BYTES || pad > total {
        return Err(TraceError::format("header", format!("pad length {pad} is invalid")));
    }
    if total - pad != s.meta.payload_len() {
        return Err(TraceError::ByteCount {
            expected: s.meta.payload_len(),
            actual: total - pad,
        });
    }
    Ok(())
}

pub fn write_hex_trace<W: Write>(mut w: W, s: &TraceStream) -> io::Result<()> {
    writeln!(w, "# busenc trace v{TRACE_VERSION}")?;
    writeln!(
        w,
        "# kind={} width={} height={} channels={} element_width={} approx_allowed={} pad={} lines={}",
        s.meta.kind,
        s.meta.width,
        s.meta.height,
        s.meta.channels,
        s.meta.element_width,
        s.approx_allowed as u8,
        s.meta.pad_len,
        s.lines.len()
    )?;
    for line in &s.lines {
        let mut text = String::with_capacity(LINE_BYTES * 2);
        for b in line.as_bytes() {
            text.push_str(&format!("{b:02x}"));
        }
        writeln!(w, "{text}")?;
    }
    Ok(())
}

pub fn read_hex_trace<R: BufRead>(r: R) -> Result<TraceStream, TraceError> {
    let mut fields: Vec<(String, String)> = Vec::new();
    let mut lines = Vec::new();
    let mut declared_lines = None;
    for (n, text) in r.lines().enumerate() {
        let text = text?;
        let lineno = n + 1;
        let loc = || format!("line {lineno}");
        let t = text.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(comment) = t.strip_prefix('#') {
            for tok in comment.split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    if k == "lines" {
                        declared_lines = Some(
                            v.parse::<usize>()
                                .map_err(|_| TraceError::format(loc(), format!("bad line count {v:?}")))?,
                        );
                    } else {
                        fields.push((k.to_string(), v.to_string()));
                    }
                }
            }
            continue;
        }
        if t.len() != LINE_BYTES * 2 {
            return Err(TraceError::format(
                loc(),
                format!("expected {} hex digits, found {}", LINE_BYTES * 2, t.len()),
            ));
        }
        let mut buf = [0u8; LINE_BYTES];
        for (i, b) in buf.iter_mut().enumerate() {
            let pair = &t[2 * i..2 * i + 2];
            *b = u8::from_str_radix(pair, 16).map_err(|_| {
                TraceError::format(
                    format!("line {lineno}, column {}", 2 * i + 1),
                    format!("bad hex {pair:?}"),
                )
            })?;
        }
        lines.push(CacheLine(buf));
    }
    let get = |k: &str| {
        fields
            .iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| TraceError::format("header", format!("missing {k}")))
    };
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, TraceError> {
        v.parse()
            .map_err(|_| TraceError::format("header", format!("bad {k} value {v:?}")))
    }
    let kind_name = get("kind")?;
    let kind = TraceKind::from_name(kind_name)
        .ok_or_else(|| TraceError::format("header", format!("unknown kind {kind_name:?}")))?;
    let meta = TraceMeta {
        kind,
        width: num("width", get("width")?)?,
        height: num("height", get("height")?)?,
        channels: num("channels", get("channels")?)?,
        element_width: num("element_width", get("element_width")?)?,
        pad_len: num("pad", get("pad")?)?,
    };
    let approx_allowed = num::<u8>("approx_allowed", get("approx_allowed")?)? != 0;
    if let Some(n) = declared_lines {
        if n != lines.len() {
            return Err(TraceError::format(
                "header",
                format!("declares {n} lines but {} present", lines.len()),
            ));
        }
    }
    let stream = TraceStream {
        lines,
        meta,
        approx_allowed,
    };
    check_meta(&stream)?;
    Ok(stream)
}

pub fn save_trace(path: impl AsRef<Path>, s: &TraceStream, hex: bool) -> io::Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    if hex {
        write_hex_trace(&mut f, s)?;
    } else {
        write_trace(&mut f, s)?;
    }
    f.flush()
}

/// Loads either trace form, telling them apart by the first byte.
pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceStream, TraceError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let first = r.fill_buf()?.first().copied();
    match first {
        Some(b'#') => read_hex_trace(r),
        _ => read_trace(r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize, c: usize) -> Raster {
        let data = (0..w * h * c).map(|i| (i * 7 % 256) as u8).collect();
        Raster::new(w, h, c, data).unwrap()
    }

    #[test]
    fn image_line_counts() {
        assert_eq!(image_to_cache_lines(&gradient(8, 8, 1)).len(), 1);
        assert_eq!(image_to_cache_lines(&gradient(16, 16, 1)).len(), 4);
        let s = image_to_cache_lines(&gradient(3, 3, 3));
        assert_eq!((s.len(), s.meta.pad_len), (1, 37));
        assert_eq!(&s.lines[0].0[27..], &[0u8; 37]);
    }

    #[test]
    fn image_round_trip() {
        for img in [gradient(8, 8, 1), gradient(3, 3, 3), gradient(17, 5, 3)] {
            let s = image_to_cache_lines(&img);
            assert_eq!(cache_lines_to_image(&s).unwrap(), img);
        }
    }

    #[test]
    fn image_byte_mismatch_rejected() {
        let mut s = image_to_cache_lines(&gradient(16, 16, 1));
        s.lines.pop();
        assert!(matches!(cache_lines_to_image(&s), Err(TraceError::ByteCount { .. })));
    }

    #[test]
    fn tensor_layout() {
        let s = tensor_f32_to_cache_lines(&[0.5f32; 16]);
        assert_eq!((s.len(), s.meta.pad_len), (1, 0));
        let s = tensor_f32_to_cache_lines(&[0.0, 1.0]);
        assert_eq!(&s.lines[0].0[4..8], &[0x00, 0x00, 0x80, 0x3F]);
        assert_eq!(cache_lines_to_tensor(&s).unwrap(), vec![0.0, 1.0]);
        assert!(cache_lines_to_image(&s).is_err());
    }

    #[test]
    fn raw_chunking() {
        assert_eq!(bytes_to_cache_lines(&[1u8; 128]).len(), 2);
        assert!(bytes_to_cache_lines(&[]).is_empty());
        let s = bytes_to_cache_lines(&[9u8; 65]);
        assert_eq!((s.len(), s.meta.pad_len), (2, 63));
        assert!(!s.approx_allowed);
        assert_eq!(s.payload().unwrap(), vec![9u8; 65]);
    }

    #[test]
    fn binary_trace_round_trip() {
        let s = image_to_cache_lines(&gradient(5, 7, 3));
        let mut buf = Vec::new();
        write_trace(&mut buf, &s).unwrap();
        assert_eq!(buf.len(), 32 + 64 * s.len());
        assert_eq!(read_trace(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn hex_trace_round_trip() {
        let s = tensor_f32_to_cache_lines(&[1.5, -2.0, 3.25]);
        let mut buf = Vec::new();
        write_hex_trace(&mut buf, &s).unwrap();
        assert_eq!(read_hex_trace(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn binary_trace_errors() {
        let s = bytes_to_cache_lines(&[1, 2, 3]);
        let mut buf = Vec::new();
        write_trace(&mut buf, &s).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_trace(bad.as_slice()), Err(TraceError::BadMagic(_))));
        let truncated = &buf[..40];
        match read_trace(truncated) {
            Err(TraceError::Format { location, .. }) => assert_eq!(location, "offset 32"),
            other => panic!("{other:?}"),
        }
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_trace(extra.as_slice()).is_err());
    }

    #[test]
    fn hex_trace_reports_line() {
        let s = bytes_to_cache_lines(&[1, 2, 3]);
        let mut buf = Vec::new();
        write_hex_trace(&mut buf, &s).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text = text.replacen("010203", "01zz03", 1);
        match read_hex_trace(text.as_bytes()) {
            Err(TraceError::Format { location, .. }) => assert!(location.starts_with("line 3"), "{location}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pnm_round_trip_via_image_reader() {
        let dir = tempfile::tempdir().unwrap();
        for img in [gradient(9, 4, 1), gradient(6, 5, 3)] {
            let path = dir.path().join(format!("t.{}", img.pnm_extension()));
            img.save_pnm(&path).unwrap();
            assert_eq!(Raster::open(&path).unwrap(), img);
        }
    }
}
