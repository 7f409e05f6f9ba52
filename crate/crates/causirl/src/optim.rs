//! Adam with L2 weight decay and a cosine-annealing learning-rate schedule.
//!
//! Weight decay is applied as an L2 term folded into the gradient before the
//! moment updates (g <- g + wd * theta), matching the non-decoupled Adam the
//! training recipes were written for. The cosine schedule anneals to exactly
//! zero and is stepped per epoch.

use crate::diffnet::{GradientSet, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// Single cosine anneal from lr down to 0 over `total` epochs.
    Cosine { total: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
}

impl OptimConfig {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            schedule: Schedule::Constant,
        }
    }

    pub fn with_cosine(mut self, total_epochs: usize) -> Self {
        self.schedule = Schedule::Cosine { total: total_epochs };
        self
    }

    /// Learning rate for a given epoch; the flag reports a schedule overrun.
    pub fn lr_at_epoch(&self, epoch: usize) -> (f64, bool) {
        match self.schedule {
            Schedule::Constant => (self.lr, false),
            Schedule::Cosine { total } => cosine_lr(self.lr, epoch, total),
        }
    }
}

/// lr(t) = lr0 * (1 + cos(pi t / T)) / 2. Steps past T clamp to 0 and flag an
/// overrun.
pub fn cosine_lr(lr0: f64, t: usize, total: usize) -> (f64, bool) {
    assert!(total >= 1, "cosine schedule needs T >= 1");
    if t > total {
        return (0.0, true);
    }
    let lr = lr0 * (1.0 + (std::f64::consts::PI * t as f64 / total as f64).cos()) / 2.0;
    (lr.max(0.0), false)
}

/// Per-parameter Adam moments.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradientSet,
    v: GradientSet,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        Self {
            m: GradientSet::zeros_like(model),
            v: GradientSet::zeros_like(model),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction. `lr` is the already-scheduled rate.
/// Rejects non-finite gradients before touching any state.
pub fn adam_step(
    model: &mut MlpModel,
    grads: &GradientSet,
    state: &mut AdamState,
    cfg: &OptimConfig,
    lr: f64,
) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient in adam_step".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let grad_slices = grads.slices();
    let mut m_slices = state.m.slices_mut();
    let mut v_slices = state.v.slices_mut();
    let mut param_slices = model.param_slices_mut();
    assert_eq!(grad_slices.len(), param_slices.len(), "shape mismatch");
    for si in 0..grad_slices.len() {
        let params = &mut param_slices[si];
        let gs = grad_slices[si];
        let ms = &mut m_slices[si];
        let vs = &mut v_slices[si];
        assert_eq!(params.len(), gs.len(), "shape mismatch");
        for i in 0..params.len() {
            let g = gs[i] + cfg.weight_decay * params[i];
            ms[i] = cfg.beta1 * ms[i] + (1.0 - cfg.beta1) * g;
            vs[i] = cfg.beta2 * vs[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = ms[i] / bc1;
            let v_hat = vs[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
