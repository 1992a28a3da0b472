use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OneCycle {
    pub warmup_frac: f64,
    pub div_factor: f64,
    pub final_div_factor: f64,
}

impl Default for OneCycle {
    fn default() -> Self {
        Self {
            warmup_frac: 0.3,
            div_factor: 25.0,
            final_div_factor: 1e4,
        }
    }
}

/// Learning rate at `step` of `total_steps`: linear warmup from
/// `lr_max / div_factor` to `lr_max` at step `round(warmup_frac·(total−1))`,
/// then cosine annealing to `lr_max / final_div_factor` at the last step.
pub fn onecycle_lr(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if step >= total_steps {
        return Err(Error::Config(format!("step {step} outside schedule of {total_steps} steps")));
    }
    let max = cfg.lr_max;
    if total_steps == 1 {
        return Ok(max);
    }
    let oc = &cfg.onecycle;
    let init = max / oc.div_factor;
    let last = total_steps - 1;
    let peak = ((oc.warmup_frac * last as f64).round() as usize).min(last);
    if step <= peak {
        if peak == 0 {
            return Ok(max);
        }
        let t = step as f64 / peak as f64;
        return Ok(max * t + init * (1.0 - t));
    }
    let end = max / oc.final_div_factor;
    let t = (step - peak) as f64 / (last - peak) as f64;
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
    Ok(end + (max - end) * cos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let cfg = TrainConfig::default();
        let total = 1000;
        assert!((onecycle_lr(0, total, &cfg).unwrap() - 1.2e-5).abs() < 1e-18);
        let peak = (0.3f64 * 999.0).round() as usize;
        assert_eq!(onecycle_lr(peak, total, &cfg).unwrap(), 3e-4);
        assert!((onecycle_lr(total - 1, total, &cfg).unwrap() - 3e-8).abs() < 1e-20);
        assert!(onecycle_lr(total, total, &cfg).is_err());
        assert_eq!(onecycle_lr(0, 1, &cfg).unwrap(), 3e-4);
    }

    #[test]
    fn single_peak() {
        let cfg = TrainConfig::default();
        for total in [2, 3, 7, 60, 1875] {
            let trace: Vec<f64> = (0..total).map(|s| onecycle_lr(s, total, &cfg).unwrap()).collect();
            let at_max = trace.iter().filter(|&&v| v == cfg.lr_max).count();
            assert_eq!(at_max, 1, "total {total}");
            let peak = trace.iter().position(|&v| v == cfg.lr_max).unwrap();
            assert!(trace[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(trace[peak..].windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
