//! Output-quality metrics and frame-type statistics.

use serde::{Deserialize, Serialize};

use crate::codec::FrameType;
use crate::error::QualityError;
use crate::framelog::FrameRecord;
use crate::trace::Raster;
use crate::word::CHIPS;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

fn same_dims(a: &Raster, b: &Raster) -> Result<(), QualityError> {
    if a.dims() != b.dims() {
        return Err(QualityError::Dimensions(a.dims(), b.dims()));
    }
    if a.data.is_empty() {
        return Err(QualityError::EmptyImage);
    }
    Ok(())
}

pub fn mse(a: &Raster, b: &Raster) -> Result<f64, QualityError> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// Peak signal-to-noise ratio in dB over all samples; `+inf` for identical
/// images.
pub fn psnr(a: &Raster, b: &Raster) -> Result<f64, QualityError> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / e).log10())
}

/// BT.601 luminance; gray rasters pass through.
pub fn luma(r: &Raster) -> Vec<f64> {
    match r.channels {
        1 => r.data.iter().map(|&v| v as f64).collect(),
        _ => r
            .data
            .chunks_exact(r.channels)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect(),
    }
}

/// Mean SSIM over all 11×11 Gaussian windows (σ = 1.5) fully inside the
/// image. Images smaller than the window are scored with one global window.
pub fn ssim(a: &Raster, b: &Raster) -> Result<f64, QualityError> {
    same_dims(a, b)?;
    Ok(ssim_luma(&luma(a), &luma(b), a.width, a.height))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

fn ssim_constants() -> (f64, f64) {
    ((SSIM_K1 * PEAK).powi(2), (SSIM_K2 * PEAK).powi(2))
}

fn ssim_from_moments(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    let (c1, c2) = ssim_constants();
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

pub fn ssim_luma(x: &[f64], y: &[f64], width: usize, height: usize) -> f64 {
    if width < SSIM_WINDOW || height < SSIM_WINDOW {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
        for (&a, &b) in x.iter().zip(y) {
            vx += (a - mx) * (a - mx);
            vy += (b - my) * (b - my);
            cxy += (a - mx) * (b - my);
        }
        return ssim_from_moments(mx, my, vx / n, vy / n, cxy / n);
    }

    let k = gaussian_kernel();
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    // moments: x, y, x², y², xy
    let source = |m: usize, i: usize| -> f64 {
        match m {
            0 => x[i],
            1 => y[i],
            2 => x[i] * x[i],
            3 => y[i] * y[i],
            _ => x[i] * y[i],
        }
    };
    let mut filtered: Vec<Vec<f64>> = Vec::with_capacity(5);
    for m in 0..5 {
        let mut horiz = vec![0.0; height * ow];
        for r in 0..height {
            for c in 0..ow {
                let base = r * width + c;
                horiz[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * source(m, base + t)).sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for r in 0..oh {
            for c in 0..ow {
                out[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * horiz[(r + t) * ow + c]).sum();
            }
        }
        filtered.push(out);
    }
    let mut total = 0.0;
    #[allow(clippy::needless_range_loop)]
    for i in 0..oh * ow {
        let (mx, my) = (filtered[0][i], filtered[1][i]);
        let vx = filtered[2][i] - mx * mx;
        let vy = filtered[3][i] - my * my;
        let cxy = filtered[4][i] - mx * my;
        total += ssim_from_moments(mx, my, vx, vy, cxy);
    }
    total / (oh * ow) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameCounts {
    pub zero: u64,
    pub ohe_skip: u64,
    pub xor_encoded: u64,
    pub raw: u64,
}

impl FrameCounts {
    pub fn record(&mut self, t: FrameType) {
        match t {
            FrameType::Zero => self.zero += 1,
            FrameType::OheSkip => self.ohe_skip += 1,
            FrameType::XorEncoded => self.xor_encoded += 1,
            FrameType::Raw => self.raw += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.zero + self.ohe_skip + self.xor_encoded + self.raw
    }

    pub fn merge(&mut self, o: &FrameCounts) {
        self.zero += o.zero;
        self.ohe_skip += o.ohe_skip;
        self.xor_encoded += o.xor_encoded;
        self.raw += o.raw;
    }

    /// `[zero, ohe_skip, xor_encoded, raw]`, or all zeros when empty.
    pub fn fractions(&self) -> [f64; 4] {
        let n = self.total();
        if n == 0 {
            return [0.0; 4];
        }
        let n = n as f64;
        [
            self.zero as f64 / n,
            self.ohe_skip as f64 / n,
            self.xor_encoded as f64 / n,
            self.raw as f64 / n,
        ]
    }
}

/// How often each frame type occurred, per chip and overall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameMix {
    pub per_chip: [FrameCounts; CHIPS],
}

impl FrameMix {
    pub fn aggregate(&self) -> FrameCounts {
        let mut all = FrameCounts::default();
        for c in &self.per_chip {
            all.merge(c);
        }
        all
    }

    pub fn fractions(&self) -> [f64; 4] {
        self.aggregate().fractions()
    }
}

pub fn frame_stats(log: &[FrameRecord]) -> Result<FrameMix, QualityError> {
    if log.is_empty() {
        return Err(QualityError::EmptyLog);
    }
    let mut mix = FrameMix::default();
    for r in log {
        mix.per_chip[r.chip as usize % CHIPS].record(r.frame.frame_type);
    }
    Ok(mix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Frame;
    use crate::word::ChipWord;

    fn constant(v: u8, w: usize, h: usize) -> Raster {
        Raster::gray(w, h, vec![v; w * h]).unwrap()
    }

    fn texture(w: usize, h: usize) -> Raster {
        let data = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as f64, (i / w) as f64);
                (128.0 + 60.0 * (x * 0.3).sin() + 50.0 * (y * 0.17).cos() + ((i * 37) % 11) as f64) as u8
            })
            .collect();
        Raster::gray(w, h, data).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = texture(32, 32);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let a = constant(100, 8, 8);
        let b = constant(116, 8, 8);
        let expected = 20.0 * (255.0f64 / 16.0).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 24.0484).abs() < 1e-3);
        assert_eq!(psnr(&constant(0, 4, 4), &constant(255, 4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn psnr_dimension_mismatch() {
        assert!(matches!(
            psnr(&constant(0, 4, 4), &constant(0, 4, 5)),
            Err(QualityError::Dimensions(..))
        ));
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = texture(40, 30);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut b = a.clone();
        for v in b.data.iter_mut().step_by(3) {
            *v = v.wrapping_add(9);
        }
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 1.0);
    }

    #[test]
    fn ssim_of_negative_is_negative() {
        let a = texture(48, 48);
        let neg = Raster::gray(48, 48, a.data.iter().map(|v| 255 - v).collect()).unwrap();
        assert!(ssim(&a, &neg).unwrap() < 0.0);
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let a = texture(14, 13);
        let mut b = a.clone();
        for (i, v) in b.data.iter_mut().enumerate() {
            *v = v.saturating_add((i % 7) as u8 * 3);
        }
        // direct 2D weighted moments for every valid window
        let k = gaussian_kernel();
        let (x, y) = (luma(&a), luma(&b));
        let mut total = 0.0;
        let mut n = 0;
        for r in 0..=13 - SSIM_WINDOW {
            for c in 0..=14 - SSIM_WINDOW {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..SSIM_WINDOW {
                    for j in 0..SSIM_WINDOW {
                        let wgt = k[i] * k[j];
                        let p = (r + i) * 14 + c + j;
                        mx += wgt * x[p];
                        my += wgt * y[p];
                        xx += wgt * x[p] * x[p];
                        yy += wgt * y[p] * y[p];
                        xy += wgt * x[p] * y[p];
                    }
                }
                total += ssim_from_moments(mx, my, xx - mx * mx, yy - my * my, xy - mx * my);
                n += 1;
            }
        }
        assert!((ssim(&a, &b).unwrap() - total / n as f64).abs() < 1e-9);
    }

    #[test]
    fn ssim_constant_images_luminance_only() {
        let (c1, _) = ssim_constants();
        let (m1, m2) = (40.0f64, 200.0f64);
        let expected = (2.0 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
        for (w, h) in [(16, 16), (5, 5)] {
            let s = ssim(&constant(40, w, h), &constant(200, w, h)).unwrap();
            assert!((s - expected).abs() < 1e-9, "{s} vs {expected}");
        }
    }

    #[test]
    fn frame_stats_fractions() {
        let rec = |chip, t| FrameRecord {
            line: 0,
            chip,
            frame: Frame {
                frame_type: t,
                payload: ChipWord(1),
                dbi_flags: 0,
                index: None,
            },
            config_id: 0,
        };
        let log: Vec<_> = (0..8).map(|c| rec(c, FrameType::OheSkip)).collect();
        assert_eq!(frame_stats(&log).unwrap().fractions(), [0.0, 1.0, 0.0, 0.0]);
        let log = vec![rec(0, FrameType::Raw), rec(1, FrameType::Zero)];
        let mix = frame_stats(&log).unwrap();
        assert_eq!(mix.per_chip[0].raw, 1);
        assert_eq!(mix.fractions(), [0.5, 0.0, 0.0, 0.5]);
        assert_eq!(frame_stats(&[]), Err(QualityError::EmptyLog));
    }
}
