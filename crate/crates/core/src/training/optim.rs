use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Linear warmup from 0 to `peak` over `warmup_iters`, then linear decay to
/// 0 at `total_iters`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub peak: f64,
    pub warmup_iters: u64,
    pub total_iters: u64,
}

impl LrSchedule {
    pub fn new(peak: f64, warmup_iters: u64, total_iters: u64) -> Result<Self> {
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::OutOfRange(format!("peak learning rate {peak} must be > 0")));
        }
        if warmup_iters == 0 || warmup_iters >= total_iters {
            return Err(Error::OutOfRange(format!(
                "warmup ({warmup_iters}) must be positive and below total ({total_iters})"
            )));
        }
        Ok(Self { peak, warmup_iters, total_iters })
    }

    /// Peak 2e-4 after 1000 warmup iterations.
    pub fn standard(total_iters: u64) -> Result<Self> {
        Self::new(2e-4, 1000, total_iters)
    }

    /// Schedule for supervised mapper fitting. A 59-parameter mapper needs a
    /// far larger step than the full adversarial model to converge in a few
    /// thousand iterations: peak 1e-2, 500 warmup iterations (shortened if
    /// `total_iters` is small).
    pub fn supervised(total_iters: u64) -> Result<Self> {
        Self::new(1e-2, 500.min(total_iters / 10).max(1), total_iters)
    }
}

pub fn lr_at(sched: &LrSchedule, iter: u64) -> Result<f64> {
    if iter > sched.total_iters {
        return Err(Error::OutOfRange(format!(
            "iteration {iter} beyond schedule end {}",
            sched.total_iters
        )));
    }
    Ok(if iter <= sched.warmup_iters {
        sched.peak * iter as f64 / sched.warmup_iters as f64
    } else {
        sched.peak * (sched.total_iters - iter) as f64 / (sched.total_iters - sched.warmup_iters) as f64
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Dimension(format!(
            "adam sizes differ: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
    Ok(())
}
