use crate::error::{Error, Result};
use crate::image::PixelImage;

/// Discriminator outputs for one batch, in any layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap(Vec<f64>);

impl ScoreMap {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Dimension("score map is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("score map contains non-finite values".into()));
        }
        Ok(Self(values))
    }

    pub fn filled(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `E[D(real)²] + E[(1 - D(fake))²]`, with the labels exactly as the
/// framework's objective writes them: real scores pulled to 0, fake to 1.
pub fn adv_loss(real: &ScoreMap, fake: &ScoreMap) -> f64 {
    let n_real = real.0.len() as f64;
    let n_fake = fake.0.len() as f64;
    real.0.iter().map(|v| v * v).sum::<f64>() / n_real
        + fake.0.iter().map(|v| (1.0 - v).powi(2)).sum::<f64>() / n_fake
}

pub fn mean_abs_error(a: &PixelImage, b: &PixelImage) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::Dimension(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Reconstruction after a round trip through both domains.
pub fn cycle_loss(s: &PixelImage, s_rec: &PixelImage, t: &PixelImage, t_rec: &PixelImage) -> Result<f64> {
    Ok(mean_abs_error(s, s_rec)? + mean_abs_error(t, t_rec)?)
}

/// How much each texture module changes its generator's output.
pub fn domain_loss(
    g_a_out: &PixelImage,
    t_a_out: &PixelImage,
    g_b_out: &PixelImage,
    t_b_out: &PixelImage,
) -> Result<f64> {
    Ok(mean_abs_error(g_a_out, t_a_out)? + mean_abs_error(g_b_out, t_b_out)?)
}

/// Generator and texture identity terms: `s` through the B-side networks,
/// `t` through the A-side networks.
pub fn identity_loss(
    s: &PixelImage,
    g_b_s: &PixelImage,
    t_b_s: &PixelImage,
    t: &PixelImage,
    g_a_t: &PixelImage,
    t_a_t: &PixelImage,
) -> Result<f64> {
    let generators = mean_abs_error(s, g_b_s)? + mean_abs_error(t, g_a_t)?;
    let textures = mean_abs_error(s, t_b_s)? + mean_abs_error(t, t_a_t)?;
    Ok(generators + textures)
}
