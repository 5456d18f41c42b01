use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::optim::{adam_step, lr_at, AdamState, LrSchedule};
use crate::error::{Error, Result};
use crate::image::PixelImage;
use crate::mapper::{hidden_pre, map_pixel, pack_params, unpack_params, MapperParams, HIDDEN, PARAM_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPair {
    pub source: [f64; 3],
    pub target: [f64; 3],
}

/// Pairs co-located pixels of aligned source and target images.
pub fn pairs_from_images(source: &PixelImage, target: &PixelImage) -> Result<Vec<PixelPair>> {
    if !source.same_dims(target) {
        return Err(Error::Dimension(format!(
            "aligned images differ in size: {}x{} vs {}x{}",
            source.width(),
            source.height(),
            target.width(),
            target.height()
        )));
    }
    Ok(source
        .pixels()
        .zip(target.pixels())
        .map(|(s, t)| PixelPair { source: s.map(f64::from), target: t.map(f64::from) })
        .collect())
}

/// Per-pixel loss: mean over the three channels of the squared error.
fn pixel_loss(y: [f64; 3], t: [f64; 3]) -> f64 {
    ((y[0] - t[0]).powi(2) + (y[1] - t[1]).powi(2) + (y[2] - t[2]).powi(2)) / 3.0
}

/// Loss and exact gradient of the batch-mean squared error with respect to
/// the packed parameters. The ReLU subgradient at 0 is 0.
fn loss_and_grads(params: &MapperParams, batch: &[PixelPair]) -> ([f64; PARAM_COUNT], f64) {
    let mut gw1 = [[0.0f64; 3]; HIDDEN];
    let mut gb1 = [0.0f64; HIDDEN];
    let mut gw2 = [[0.0f64; HIDDEN]; 3];
    let mut gb2 = [0.0f64; 3];
    let mut loss = 0.0;
    let scale = 2.0 / (3.0 * batch.len() as f64);
    for pair in batch {
        let x = pair.source;
        let z1 = hidden_pre(x, params);
        let h = z1.map(|v| v.max(0.0));
        let mut y = [0.0; 3];
        let mut dz2 = [0.0; 3];
        for c in 0..3 {
            let mut acc = params.b2[c];
            for j in 0..HIDDEN {
                acc += params.w2[c][j] * h[j];
            }
            y[c] = acc.tanh();
            dz2[c] = scale * (y[c] - pair.target[c]) * (1.0 - y[c] * y[c]);
        }
        loss += pixel_loss(y, pair.target);
        for c in 0..3 {
            gb2[c] += dz2[c];
            for j in 0..HIDDEN {
                gw2[c][j] += dz2[c] * h[j];
            }
        }
        for j in 0..HIDDEN {
            if z1[j] > 0.0 {
                let dz1 = dz2[0] * params.w2[0][j] + dz2[1] * params.w2[1][j] + dz2[2] * params.w2[2][j];
                gb1[j] += dz1;
                for k in 0..3 {
                    gw1[j][k] += dz1 * x[k];
                }
            }
        }
    }
    let grads = MapperParams { w1: gw1, b1: gb1, w2: gw2, b2: gb2 };
    (pack_params(&grads), loss / batch.len() as f64)
}

/// Gradient of the batch-mean squared error, packed in the 59-vector layout.
pub fn mapper_grads(params: &MapperParams, batch: &[PixelPair]) -> Result<[f64; PARAM_COUNT]> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(loss_and_grads(params, batch).0)
}

pub fn dataset_mse(params: &MapperParams, pairs: &[PixelPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for p in pairs {
        total += pixel_loss(map_pixel(p.source, params)?, p.target);
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub batch_size: usize,
    /// Initial parameters are uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    pub log_every: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { batch_size: 4096, init_range: 0.5, log_every: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub iter: u64,
    pub lr: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: MapperParams,
    /// Minibatch MSE every `log_every` iterations, then the full-data MSE
    /// of the final parameters at `total_iters`.
    pub curve: Vec<CurvePoint>,
    pub final_mse: f64,
}

impl FitResult {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("iter,lr,mse\n");
        for p in &self.curve {
            out.push_str(&format!("{},{:e},{:e}\n", p.iter, p.lr, p.mse));
        }
        out
    }
}

pub const MIN_PAIRS: usize = 100;

pub fn fit_mapper(pairs: &[PixelPair], sched: &LrSchedule, seed: u64) -> Result<FitResult> {
    fit_mapper_with(pairs, sched, seed, &FitConfig::default())
}

pub fn fit_mapper_with(pairs: &[PixelPair], sched: &LrSchedule, seed: u64, cfg: &FitConfig) -> Result<FitResult> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if pairs.len() < MIN_PAIRS {
        return Err(Error::Dimension(format!(
            "need at least {MIN_PAIRS} pixel pairs, got {}",
            pairs.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut packed: Vec<f64> = (0..PARAM_COUNT)
        .map(|_| rng.random_range(-cfg.init_range..=cfg.init_range))
        .collect();
    let mut state = AdamState::new(PARAM_COUNT);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut curve = Vec::new();

    for iter in 0..sched.total_iters {
        let lr = lr_at(sched, iter)?;
        batch.clear();
        batch.extend((0..cfg.batch_size).map(|_| pairs[rng.random_range(0..pairs.len())]));
        let params = unpack_params(&packed)?;
        let (grads, mse) = loss_and_grads(&params, &batch);
        if iter % cfg.log_every == 0 {
            curve.push(CurvePoint { iter, lr, mse });
        }
        adam_step(&mut packed, &grads, &mut state, lr)?;
    }

    let params = unpack_params(&packed)?;
    let final_mse = dataset_mse(&params, pairs)?;
    curve.push(CurvePoint {
        iter: sched.total_iters,
        lr: lr_at(sched, sched.total_iters)?,
        mse: final_mse,
    });
    Ok(FitResult { params, curve, final_mse })
}
