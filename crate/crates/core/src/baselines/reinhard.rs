use serde::{Deserialize, Serialize};

use crate::image::PixelImage;

/// RGB → LMS cone response matrix from the original Reinhard color-transfer method.
pub const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

const DEGENERATE_STD: f64 = 1e-12;

/// Per-channel lαβ statistics. `std` is the population standard deviation;
/// a channel whose spread is at rounding level is reported as exactly 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReinhardStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ReinhardStats {
    pub fn degenerate(&self) -> [bool; 3] {
        self.std.map(|s| s <= 0.0)
    }
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    inv
}

fn mul(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

/// Converts one pixel (values in `[-1, 1]`) to lαβ.
///
/// Channels are taken on the 0..255 scale and LMS responses are
/// log-compressed as `log10(LMS + 1)`, which stays finite on black pixels
/// and inverts exactly.
pub fn rgb_to_lab(px: [f64; 3]) -> [f64; 3] {
    let rgb = px.map(|x| (x + 1.0) * 127.5);
    let lms = mul(&RGB_TO_LMS, rgb).map(|v| (v.max(0.0) + 1.0).log10());
    let s = lms[0] + lms[1] + lms[2];
    [
        s / 3f64.sqrt(),
        (lms[0] + lms[1] - 2.0 * lms[2]) / 6f64.sqrt(),
        (lms[0] - lms[1]) / 2f64.sqrt(),
    ]
}

/// Inverse of [`rgb_to_lab`], without clamping.
pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let l = lab[0] / 3f64.sqrt();
    let a = lab[1] / 6f64.sqrt();
    let b = lab[2] / 2f64.sqrt();
    let log_lms = [l + a + b, l + a - b, l - 2.0 * a];
    let lms = log_lms.map(|v| 10f64.powf(v) - 1.0);
    let rgb = mul(&invert3(&RGB_TO_LMS), lms);
    rgb.map(|v| v / 127.5 - 1.0)
}

pub fn reinhard_fit(img: &PixelImage) -> ReinhardStats {
    // Row partial sums reduced in row order.
    let labs: Vec<[f64; 3]> = img
        .pixels()
        .map(|p| rgb_to_lab([p[0] as f64, p[1] as f64, p[2] as f64]))
        .collect();
    let n = labs.len() as f64;
    let mut sum = [0.0f64; 3];
    for chunk in labs.chunks(img.width()) {
        let mut part = [0.0f64; 3];
        for v in chunk {
            for c in 0..3 {
                part[c] += v[c];
            }
        }
        for c in 0..3 {
            sum[c] += part[c];
        }
    }
    let mean = sum.map(|s| s / n);
    let mut sq = [0.0f64; 3];
    for chunk in labs.chunks(img.width()) {
        let mut part = [0.0f64; 3];
        for v in chunk {
            for c in 0..3 {
                part[c] += (v[c] - mean[c]).powi(2);
            }
        }
        for c in 0..3 {
            sq[c] += part[c];
        }
    }
    let std = [0, 1, 2].map(|c| {
        let s = (sq[c] / n).sqrt();
        if s <= DEGENERATE_STD * mean[c].abs().max(1.0) {
            0.0
        } else {
            s
        }
    });
    ReinhardStats { mean, std }
}

/// Statistics transfer for one lαβ value, before conversion back to RGB.
/// Degenerate source channels use a scale of 1.
pub fn reinhard_transform_lab(lab: [f64; 3], src: &ReinhardStats, tgt: &ReinhardStats) -> [f64; 3] {
    [0, 1, 2].map(|c| {
        let scale = if src.std[c] > 0.0 { tgt.std[c] / src.std[c] } else { 1.0 };
        (lab[c] - src.mean[c]) * scale + tgt.mean[c]
    })
}

pub fn reinhard_apply(img: &PixelImage, src: &ReinhardStats, tgt: &ReinhardStats) -> PixelImage {
    let data = img
        .pixels()
        .flat_map(|p| {
            let lab = rgb_to_lab([p[0] as f64, p[1] as f64, p[2] as f64]);
            lab_to_rgb(reinhard_transform_lab(lab, src, tgt)).map(|v| v.clamp(-1.0, 1.0) as f32)
        })
        .collect();
    PixelImage::from_raw_parts(img.width(), img.height(), data)
}
