//! Learning-rate schedule: linear warmup into cosine annealing with
//! periodic restarts.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: u64,
    pub period_steps: u64,
}

impl LrSchedule {
    /// Warmup over the first 5% of steps, one cosine period over the rest,
    /// annealing to zero.
    pub fn for_total_steps(base_lr: f64, total_steps: u64) -> LrSchedule {
        let warmup_steps = total_steps / 20;
        LrSchedule {
            base_lr,
            min_lr: 0.0,
            warmup_steps,
            period_steps: (total_steps - warmup_steps).max(1),
        }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        if self.period_steps == 0 {
            return self.base_lr;
        }
        let t = (step - self.warmup_steps) % self.period_steps;
        let frac = t as f64 / self.period_steps as f64;
        self.min_lr + 0.5 * (self.base_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}
