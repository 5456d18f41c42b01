//! Similarity metrics against a target and a source image: windowed SSIM
//! (RGB or luma), quaternion SSIM, and PSNR.
//!
//! Windows are 11×11 Gaussian (σ = 1.5), applied only where they fit
//! entirely inside the image, with `C1 = (0.01·L)²` and `C2 = (0.03·L)²`.
//! For SSIM `L = 255`. For QSSIM the pixel is the pure quaternion
//! `r·i + g·j + b·k` whose magnitude spans `L = 255·√3`.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::image::Rgb8Image;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;
pub const MAX_VALUE: f64 = 255.0;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut taps = [0.0; WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

fn check_pair(a: &Rgb8Image, b: &Rgb8Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Dimension(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.width() < WINDOW || a.height() < WINDOW {
        return Err(Error::Dimension(format!(
            "images must be at least {WINDOW}x{WINDOW} for windowed metrics, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    Ok(())
}

/// A single-channel plane with its dimensions.
struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn channel(img: &Rgb8Image, c: usize) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            data: img.data().chunks_exact(3).map(|p| p[c] as f64).collect(),
        }
    }

    fn luma(img: &Rgb8Image) -> Self {
        Self {
            w: img.width(),
            h: img.height(),
            data: img
                .data()
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .collect(),
        }
    }

    fn product(&self, other: &Plane) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        }
    }

    /// Separable Gaussian filter over valid positions only.
    fn filter(&self, taps: &[f64; WINDOW]) -> Vec<f64> {
        let ow = self.w - WINDOW + 1;
        let oh = self.h - WINDOW + 1;
        let mut horiz = vec![0.0; ow * self.h];
        for y in 0..self.h {
            let row = &self.data[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    acc += t * row[x + k];
                }
                horiz[y * ow + x] = acc;
            }
        }
        let mut out = vec![0.0; ow * oh];
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    acc += t * horiz[(y + k) * ow + x];
                }
                out[y * ow + x] = acc;
            }
        }
        out
    }
}

fn constants(range: f64) -> (f64, f64) {
    ((K1 * range).powi(2), (K2 * range).powi(2))
}

/// Per-window SSIM map of one channel pair.
fn ssim_map(a: &Plane, b: &Plane) -> Vec<f64> {
    let taps = gaussian_taps();
    let (c1, c2) = constants(MAX_VALUE);
    let mu_a = a.filter(&taps);
    let mu_b = b.filter(&taps);
    let e_aa = a.product(a).filter(&taps);
    let e_bb = b.product(b).filter(&taps);
    let e_ab = a.product(b).filter(&taps);
    (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = (e_aa[i] - ma * ma).max(0.0);
            let vb = (e_bb[i] - mb * mb).max(0.0);
            // Cauchy-Schwarz bound, also keeps ssim(x, x) exactly 1
            let bound = (va * vb).sqrt();
            let cov = (e_ab[i] - ma * mb).clamp(-bound, bound);
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean SSIM. RGB mode averages the three channel maps; grayscale mode
/// compares luma `0.299R + 0.587G + 0.114B`.
pub fn ssim(a: &Rgb8Image, b: &Rgb8Image, grayscale: bool) -> Result<f64> {
    check_pair(a, b)?;
    if grayscale {
        return Ok(mean(&ssim_map(&Plane::luma(a), &Plane::luma(b))));
    }
    let maps: Vec<Vec<f64>> = (0..3)
        .map(|c| ssim_map(&Plane::channel(a, c), &Plane::channel(b, c)))
        .collect();
    let combined: Vec<f64> = (0..maps[0].len())
        .map(|i| (maps[0][i] + maps[1][i] + maps[2][i]) / 3.0)
        .collect();
    Ok(mean(&combined))
}

/// Quaternion SSIM: colour channels coupled through pure-quaternion
/// statistics, covariance taken as the magnitude of the mean of
/// `(q_a - μ_a)·conj(q_b - μ_b)`.
pub fn qssim(a: &Rgb8Image, b: &Rgb8Image) -> Result<f64> {
    check_pair(a, b)?;
    let taps = gaussian_taps();
    let (c1, c2) = constants(MAX_VALUE * 3f64.sqrt());
    let pa: Vec<Plane> = (0..3).map(|c| Plane::channel(a, c)).collect();
    let pb: Vec<Plane> = (0..3).map(|c| Plane::channel(b, c)).collect();
    let mu_a: Vec<Vec<f64>> = pa.iter().map(|p| p.filter(&taps)).collect();
    let mu_b: Vec<Vec<f64>> = pb.iter().map(|p| p.filter(&taps)).collect();
    let e_aa: Vec<Vec<f64>> = pa.iter().map(|p| p.product(p).filter(&taps)).collect();
    let e_bb: Vec<Vec<f64>> = pb.iter().map(|p| p.product(p).filter(&taps)).collect();
    // e_ab[i][j] = E[a_i b_j]
    let e_ab: Vec<Vec<Vec<f64>>> = pa
        .iter()
        .map(|x| pb.iter().map(|y| x.product(y).filter(&taps)).collect())
        .collect();

    let n = mu_a[0].len();
    let mut total = 0.0;
    for i in 0..n {
        let ma = [mu_a[0][i], mu_a[1][i], mu_a[2][i]];
        let mb = [mu_b[0][i], mu_b[1][i], mu_b[2][i]];
        let mut va = 0.0;
        let mut vb = 0.0;
        let mut re = 0.0;
        for c in 0..3 {
            va += e_aa[c][i] - ma[c] * ma[c];
            vb += e_bb[c][i] - mb[c] * mb[c];
            re += e_ab[c][c][i] - ma[c] * mb[c];
        }
        let va = va.max(0.0);
        let vb = vb.max(0.0);
        // vector part of the centred product: E[a × b] - μa × μb
        let cross = |j: usize, k: usize| (e_ab[j][k][i] - e_ab[k][j][i]) - (ma[j] * mb[k] - ma[k] * mb[j]);
        let v = [cross(1, 2), cross(2, 0), cross(0, 1)];
        let magnitude = (re * re + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let cov = magnitude.min((va * vb).sqrt());
        let ma2 = ma[0] * ma[0] + ma[1] * ma[1] + ma[2] * ma[2];
        let mb2 = mb[0] * mb[0] + mb[1] * mb[1] + mb[2] * mb[2];
        let s = ((2.0 * (ma2 * mb2).sqrt() + c1) * (2.0 * cov + c2)) / ((ma2 + mb2 + c1) * (va + vb + c2));
        total += s;
    }
    Ok(total / n as f64)
}

/// PSNR in dB, with identical images flagged rather than reported as `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn value(&self) -> f64 {
        match self {
            Psnr::Finite(v) => *v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Psnr::Infinite)
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.3}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Psnr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Psnr::Finite(v) => s.serialize_f64(*v),
            Psnr::Infinite => s.serialize_str("inf"),
        }
    }
}

pub fn psnr(a: &Rgb8Image, b: &Rgb8Image) -> Result<Psnr> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Dimension(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sq: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    if sq == 0 {
        return Ok(Psnr::Infinite);
    }
    let mse = sq as f64 / a.data().len() as f64;
    Ok(Psnr::Finite(10.0 * (MAX_VALUE * MAX_VALUE / mse).log10()))
}

/// Mean and sample standard deviation (divisor N−1; 0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

/// PSNR aggregate: infinite as soon as one image pair is identical, in which
/// case no spread is reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsnrSummary {
    pub mean: Psnr,
    pub std: Option<f64>,
}

impl PsnrSummary {
    pub fn of(values: &[Psnr]) -> Self {
        if values.iter().any(Psnr::is_infinite) {
            return Self { mean: Psnr::Infinite, std: None };
        }
        let s = Summary::of(&values.iter().map(Psnr::value).collect::<Vec<_>>());
        Self { mean: Psnr::Finite(s.mean), std: Some(s.std) }
    }
}

impl std::fmt::Display for PsnrSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.mean, self.std) {
            (Psnr::Finite(m), Some(s)) => write!(f, "{m:.3}±{s:.3}"),
            _ => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub qssim_target: f64,
    pub ssim_target: f64,
    pub psnr_target: Psnr,
    pub ssim_source: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_image: Vec<ImageMetrics>,
    pub qssim_target: Summary,
    pub ssim_target: Summary,
    pub psnr_target: PsnrSummary,
    pub ssim_source: Summary,
}

impl MetricReport {
    pub fn from_images(per_image: Vec<ImageMetrics>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let col = |f: fn(&ImageMetrics) -> f64| per_image.iter().map(f).collect::<Vec<_>>();
        Ok(Self {
            qssim_target: Summary::of(&col(|m| m.qssim_target)),
            ssim_target: Summary::of(&col(|m| m.ssim_target)),
            psnr_target: PsnrSummary::of(&per_image.iter().map(|m| m.psnr_target).collect::<Vec<_>>()),
            ssim_source: Summary::of(&col(|m| m.ssim_source)),
            per_image,
        })
    }
}

pub fn image_metrics(normalized: &Rgb8Image, target: &Rgb8Image, source: &Rgb8Image) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        qssim_target: qssim(normalized, target)?,
        ssim_target: ssim(normalized, target, false)?,
        psnr_target: psnr(normalized, target)?,
        ssim_source: ssim(normalized, source, true)?,
    })
}

pub fn evaluate_set(
    normalized: &[Rgb8Image],
    targets: &[Rgb8Image],
    sources: &[Rgb8Image],
) -> Result<MetricReport> {
    if normalized.len() != targets.len() || normalized.len() != sources.len() {
        return Err(Error::Dimension(format!(
            "set sizes differ: {} normalized, {} targets, {} sources",
            normalized.len(),
            targets.len(),
            sources.len()
        )));
    }
    let per_image = normalized
        .iter()
        .zip(targets)
        .zip(sources)
        .map(|((n, t), s)| image_metrics(n, t, s))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_images(per_image)
}
