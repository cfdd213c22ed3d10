use serde::{Deserialize, Serialize};

/// Learning-rate schedule: an optional linear warmup followed by either a
/// cosine decay over iterations or epoch-based halving.
///
/// The emitted rate is a pure function of `(iteration, epoch)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LrSchedule {
    pub kind: ScheduleKind,
    /// Iterations spent ramping linearly from `warmup_start_lr` to `peak_lr`.
    pub warmup_iters: u64,
    pub warmup_start_lr: f64,
    pub peak_lr: f64,
    /// Cosine floor; ignored by step halving.
    pub min_lr: f64,
    /// Step-halving period in epochs; ignored by cosine.
    pub halve_every_epochs: u64,
    /// Iteration at which cosine decay reaches `min_lr`; ignored by halving.
    pub total_iters: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    CosineWithWarmup,
    StepHalving,
}

impl LrSchedule {
    pub fn cosine_with_warmup(
        warmup_iters: u64,
        warmup_start_lr: f64,
        peak_lr: f64,
        min_lr: f64,
        total_iters: u64,
    ) -> Self {
        Self {
            kind: ScheduleKind::CosineWithWarmup,
            warmup_iters,
            warmup_start_lr,
            peak_lr,
            min_lr,
            halve_every_epochs: 0,
            total_iters,
        }
    }

    pub fn step_halving(initial_lr: f64, halve_every_epochs: u64) -> Self {
        Self {
            kind: ScheduleKind::StepHalving,
            warmup_iters: 0,
            warmup_start_lr: initial_lr,
            peak_lr: initial_lr,
            min_lr: 0.0,
            halve_every_epochs,
            total_iters: 0,
        }
    }

    /// Step halving preceded by a linear iteration warmup, used when the
    /// whole network is optimized jointly.
    pub fn step_halving_with_warmup(
        warmup_iters: u64,
        warmup_start_lr: f64,
        peak_lr: f64,
        halve_every_epochs: u64,
    ) -> Self {
        Self {
            kind: ScheduleKind::StepHalving,
            warmup_iters,
            warmup_start_lr,
            peak_lr,
            min_lr: 0.0,
            halve_every_epochs,
            total_iters: 0,
        }
    }

    /// Default schedule for representation learning: 500 warmup iterations
    /// from 1e-7 up to the 1e-3 peak, cosine down to 1e-9.
    pub fn srl_default(total_iters: u64) -> Self {
        Self::cosine_with_warmup(500, 1e-7, 1e-3, 1e-9, total_iters)
    }

    /// Rate at a given 0-based global iteration and 0-based epoch.
    pub fn lr_at(&self, iteration: u64, epoch: u64) -> f64 {
        if self.warmup_iters > 0 && iteration < self.warmup_iters {
            let frac = iteration as f64 / self.warmup_iters as f64;
            return self.warmup_start_lr + (self.peak_lr - self.warmup_start_lr) * frac;
        }
        match self.kind {
            ScheduleKind::CosineWithWarmup => {
                if iteration >= self.total_iters {
                    return self.min_lr;
                }
                let span = (self.total_iters - self.warmup_iters).max(1) as f64;
                let progress = (iteration - self.warmup_iters) as f64 / span;
                self.min_lr
                    + 0.5 * (self.peak_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
            ScheduleKind::StepHalving => {
                let halvings = if self.halve_every_epochs == 0 {
                    0
                } else {
                    epoch / self.halve_every_epochs
                };
                self.peak_lr * 0.5f64.powi(halvings as i32)
            }
        }
    }
}
