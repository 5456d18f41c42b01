use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, PixelImage};

pub const MIN_SCALE: f64 = 0.5;
pub const MAX_SCALE: f64 = 1.0;

/// Bilinear resize by `factor` to `(round(factor·W), round(factor·H))`.
pub fn scale_by(img: &PixelImage, factor: f64) -> Result<PixelImage> {
    let w = ((img.width() as f64 * factor).round() as usize).max(1);
    let h = ((img.height() as f64 * factor).round() as usize).max(1);
    resize_bilinear(img, w, h)
}

/// Resolution augmentation with a factor drawn uniformly from `[0.5, 1.0]`.
/// Returns the resized image and the factor used.
pub fn random_scale(img: &PixelImage, seed: u64) -> Result<(PixelImage, f64)> {
    if img.width() < 2 || img.height() < 2 {
        return Err(Error::Dimension(format!(
            "random scaling needs at least 2x2, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let factor = ChaCha8Rng::seed_from_u64(seed).random_range(MIN_SCALE..=MAX_SCALE);
    Ok((scale_by(img, factor)?, factor))
}
