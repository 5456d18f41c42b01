use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::PixelImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacenkoConfig {
    /// Pixels with any channel OD below this are treated as background.
    pub beta: f64,
    /// Percentile (in percent) of the in-plane angle used for the extreme stains.
    pub alpha_pct: f64,
    /// Transmitted (background) intensity on the 0..255 scale.
    pub io: f64,
}

impl Default for MacenkoConfig {
    fn default() -> Self {
        Self { beta: 0.15, alpha_pct: 1.0, io: 255.0 }
    }
}

/// Stain vectors as unit OD-space columns (hematoxylin, eosin) and their
/// 99th-percentile concentrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StainBasis {
    pub stain_matrix: [[f64; 2]; 3],
    pub max_conc: [f64; 2],
}

impl StainBasis {
    pub fn column(&self, k: usize) -> [f64; 3] {
        [self.stain_matrix[0][k], self.stain_matrix[1][k], self.stain_matrix[2][k]]
    }

    pub fn hematoxylin(&self) -> [f64; 3] {
        self.column(0)
    }

    pub fn eosin(&self) -> [f64; 3] {
        self.column(1)
    }

    /// Least-squares concentrations of one OD vector.
    fn concentrations(&self, od: [f64; 3]) -> [f64; 2] {
        let (h, e) = (self.hematoxylin(), self.eosin());
        let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let (hh, he, ee) = (dot(h, h), dot(h, e), dot(e, e));
        let (ho, eo) = (dot(h, od), dot(e, od));
        let det = hh * ee - he * he;
        [(ee * ho - he * eo) / det, (hh * eo - he * ho) / det]
    }

    fn od(&self, c: [f64; 2]) -> [f64; 3] {
        [0, 1, 2].map(|r| self.stain_matrix[r][0] * c[0] + self.stain_matrix[r][1] * c[1])
    }
}

fn pixel_od(px: [f32; 3], io: f64) -> [f64; 3] {
    px.map(|x| {
        let u = (x as f64 + 1.0) * 127.5;
        -((u + 1.0) / io).log10()
    })
}

/// Linear-interpolated percentile (`pct` in percent) of unsorted values.
pub fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&sorted, pct)
}

fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let rank = (pct / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Robust extreme angles: the `pct` and `100 - pct` percentiles.
pub fn percentile_angles(angles: &[f64], pct: f64) -> (f64, f64) {
    let mut sorted = angles.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    (percentile_sorted(&sorted, pct), percentile_sorted(&sorted, 100.0 - pct))
}

const MIN_RANK_RATIO: f64 = 1e-4;

pub fn macenko_fit(img: &PixelImage) -> Result<StainBasis> {
    macenko_fit_with(img, &MacenkoConfig::default())
}

pub fn macenko_fit_with(img: &PixelImage, cfg: &MacenkoConfig) -> Result<StainBasis> {
    let all_od: Vec<[f64; 3]> = img.pixels().map(|p| pixel_od(p, cfg.io)).collect();
    let tissue: Vec<Vector3<f64>> = all_od
        .iter()
        .filter(|od| od.iter().all(|&v| v >= cfg.beta))
        .map(|od| Vector3::from(*od))
        .collect();
    if tissue.len() < 2 {
        return Err(Error::Degenerate(format!(
            "only {} pixels exceed the OD threshold {}",
            tissue.len(),
            cfg.beta
        )));
    }

    let n = tissue.len() as f64;
    let mean = tissue.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for v in &tissue {
        let d = v - mean;
        cov += d * d.transpose();
    }
    cov /= n - 1.0;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l1 > 0.0) || l2 <= MIN_RANK_RATIO * l1 {
        return Err(Error::Rank(format!(
            "OD cloud is effectively one-dimensional (eigenvalues {l1:.3e}, {l2:.3e})"
        )));
    }
    let orient = |v: Vector3<f64>| if v.sum() < 0.0 { -v } else { v };
    let e1 = orient(eig.eigenvectors.column(order[0]).into_owned());
    let e2 = orient(eig.eigenvectors.column(order[1]).into_owned());

    let angles: Vec<f64> = tissue.iter().map(|v| v.dot(&e2).atan2(v.dot(&e1))).collect();
    let (min_phi, max_phi) = percentile_angles(&angles, cfg.alpha_pct);
    let direction = |phi: f64| -> Result<Vector3<f64>> {
        let v = orient(e1 * phi.cos() + e2 * phi.sin()).map(|x| x.max(0.0));
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::Degenerate("stain direction has no positive component".into()));
        }
        Ok(v / norm)
    };
    let (a, b) = (direction(min_phi)?, direction(max_phi)?);
    let (h, e) = if a[2] >= b[2] { (a, b) } else { (b, a) };
    if h.cross(&e).norm() < 1e-9 {
        return Err(Error::Rank("extreme stain directions coincide".into()));
    }

    let mut basis = StainBasis {
        stain_matrix: [[h[0], e[0]], [h[1], e[1]], [h[2], e[2]]],
        max_conc: [0.0; 2],
    };
    let (ch, ce): (Vec<f64>, Vec<f64>) = all_od.iter().map(|&od| {
        let c = basis.concentrations(od);
        (c[0], c[1])
    }).unzip();
    basis.max_conc = [percentile(&ch, 99.0), percentile(&ce, 99.0)];
    if basis.max_conc.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Degenerate(format!(
            "non-positive 99th-percentile concentration {:?}",
            basis.max_conc
        )));
    }
    Ok(basis)
}

/// Re-expresses one source OD vector in the target basis.
fn transfer_od(od: [f64; 3], src: &StainBasis, tgt: &StainBasis) -> [f64; 3] {
    let c = src.concentrations(od);
    tgt.od([
        c[0] * tgt.max_conc[0] / src.max_conc[0],
        c[1] * tgt.max_conc[1] / src.max_conc[1],
    ])
}

pub fn macenko_apply(img: &PixelImage, src: &StainBasis, tgt: &StainBasis) -> PixelImage {
    macenko_apply_with(img, src, tgt, MacenkoConfig::default().io)
}

pub fn macenko_apply_with(img: &PixelImage, src: &StainBasis, tgt: &StainBasis, io: f64) -> PixelImage {
    let data = img
        .pixels()
        .flat_map(|p| {
            let od = transfer_od(pixel_od(p, io), src, tgt);
            od.map(|v| {
                let u = (io * 10f64.powf(-v) - 1.0).clamp(0.0, 255.0);
                (u / 127.5 - 1.0) as f32
            })
        })
        .collect();
    PixelImage::from_raw_parts(img.width(), img.height(), data)
}
