//! MSE training with AdamW under a one-cycle learning-rate schedule, keeping
//! the parameters with the lowest validation loss.

mod optim;
mod run;
mod schedule;

pub use optim::{adamw_step, OptState};
pub use run::{evaluate_loss, predict, train, EpochLog, TaskData, TrainReport};
pub use schedule::{onecycle_lr, OneCycle};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub onecycle: OneCycle,
    /// Seeds the mini-batch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 3e-4,
            weight_decay: 0.01,
            batch_size: 32,
            epochs: 100,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            onecycle: OneCycle::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Reduced-budget settings for quick local runs: 30 epochs, otherwise unchanged.
    pub fn desk_scale() -> Self {
        Self {
            epochs: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let oc = &self.onecycle;
        let checks = [
            (self.lr_max > 0.0 && self.lr_max.is_finite(), "lr_max must be positive"),
            (self.weight_decay >= 0.0, "weight_decay must be non-negative"),
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (self.epochs >= 1, "epochs must be at least 1"),
            ((0.0..1.0).contains(&self.beta1), "beta1 must lie in [0, 1)"),
            ((0.0..1.0).contains(&self.beta2), "beta2 must lie in [0, 1)"),
            (self.adam_eps > 0.0, "adam_eps must be positive"),
            (oc.warmup_frac > 0.0 && oc.warmup_frac < 1.0, "warmup_frac must lie in (0, 1)"),
            (oc.div_factor >= 1.0, "div_factor must be at least 1"),
            (oc.final_div_factor >= 1.0, "final_div_factor must be at least 1"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config((*msg).into())),
            None => Ok(()),
        }
    }
}
