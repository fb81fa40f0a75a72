//! Adam with bias correction, and the two learning-rate schedules used for
//! training: reciprocal decay and cosine annealing with warm restarts.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update. The state carries its own step counter,
/// so each parameter array owns one state.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let c1 = 1.0 - BETA1.powi(state.step as i32);
    let c2 = 1.0 - BETA2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = BETA1 * state.m[i] + (1.0 - BETA1) * g;
        state.v[i] = BETA2 * state.v[i] + (1.0 - BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

#[derive(Debug, Clone)]
pub enum LrSchedule {
    /// base / (epoch + 1)
    Reciprocal { base: f64 },
    /// Cosine annealing from base to min within each segment; segments
    /// start at epoch 0 and at each restart epoch, and a segment's final
    /// epoch lands exactly on min. A zero-length segment stays at base.
    CosineWarmRestarts { base: f64, min: f64, restarts: Vec<usize>, total_epochs: usize },
}

impl LrSchedule {
    pub fn reciprocal(base: f64) -> Result<Self> {
        if !(base > 0.0) {
            return Err(Error::invalid("base lr must be positive"));
        }
        Ok(LrSchedule::Reciprocal { base })
    }

    pub fn cosine_warm_restarts(
        base: f64,
        min: f64,
        restarts: Vec<usize>,
        total_epochs: usize,
    ) -> Result<Self> {
        if !(base > min && min >= 0.0) {
            return Err(Error::invalid("need base lr > min lr >= 0"));
        }
        if total_epochs == 0 {
            return Err(Error::invalid("schedule needs at least one epoch"));
        }
        let ascending = restarts.windows(2).all(|w| w[0] < w[1]);
        if !ascending || restarts.iter().any(|&r| r == 0 || r >= total_epochs) {
            return Err(Error::invalid(
                "restart epochs must be strictly ascending within (0, total_epochs)",
            ));
        }
        Ok(LrSchedule::CosineWarmRestarts { base, min, restarts, total_epochs })
    }
}

pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    match schedule {
        LrSchedule::Reciprocal { base } => base / (epoch + 1) as f64,
        LrSchedule::CosineWarmRestarts { base, min, restarts, total_epochs } => {
            let mut start = 0;
            let mut end = total_epochs - 1;
            for &r in restarts {
                if epoch >= r {
                    start = r;
                } else {
                    end = r - 1;
                    break;
                }
            }
            let span = end - start;
            if span == 0 {
                return *base;
            }
            let t = (epoch.min(end) - start) as f64 / span as f64;
            min + 0.5 * (base - min) * (1.0 + (PI * t).cos())
        }
    }
}
