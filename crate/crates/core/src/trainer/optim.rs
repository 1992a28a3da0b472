use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

use super::TrainConfig;

/// AdamW moments, one pair per parameter tensor, kept in f64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptState {
    pub fn new<T: Scalar>(params: &[Tensor<T>]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One AdamW update. Decay `θ ← θ·(1 − lr·wd)` is applied only where
/// `decay[i]` is set, separately from the bias-corrected adaptive step.
/// A non-finite gradient aborts before anything is modified.
pub fn adamw_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    decay: &[bool],
    state: &mut OptState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != params.len() || decay.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::shape(
            "adamw_step",
            &[params.len()],
            &[grads.len(), decay.len(), state.m.len()],
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.numel() {
            return Err(Error::shape("adamw_step", p.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let shrink = if decay[i] { 1.0 - lr * cfg.weight_decay } else { 1.0 };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (theta, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gj = gj.to_f64();
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let step = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.adam_eps);
            *theta = T::from_f64(theta.to_f64() * shrink - step);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(wd: f64) -> TrainConfig {
        TrainConfig {
            weight_decay: wd,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![Tensor::<f64>::full(&[3], 2.0)];
        let g = vec![Tensor::full(&[3], 1.0)];
        let mut st = OptState::new(&p);
        adamw_step(&mut p, &g, &[true], &mut st, 0.1, &cfg(0.0)).unwrap();
        for &v in p[0].data() {
            assert!((v - (2.0 - 0.1)).abs() < 1e-8);
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn decay_only_step_is_exact() {
        let init = vec![0.5f32, -1.25, 3.0];
        let mut p = vec![Tensor::new(&[3], init.clone()).unwrap(), Tensor::new(&[3], init.clone()).unwrap()];
        let g = vec![Tensor::zeros(&[3]), Tensor::zeros(&[3])];
        let mut st = OptState::new(&p);
        adamw_step(&mut p, &g, &[true, false], &mut st, 0.1, &cfg(0.01)).unwrap();
        for (a, b) in p[0].data().iter().zip(&init) {
            assert_eq!(*a, (*b as f64 * (1.0 - 0.001)) as f32);
        }
        assert_eq!(p[1].data(), &init[..]);
    }

    #[test]
    fn descends_on_square() {
        let c = cfg(0.0);
        let mut p = vec![Tensor::<f64>::scalar(1.0)];
        let mut st = OptState::new(&p);
        for _ in 0..100 {
            let g = vec![p[0].map(|t| 2.0 * t)];
            adamw_step(&mut p, &g, &[false], &mut st, 0.1, &c).unwrap();
        }
        assert!(p[0].item().abs() < 0.5);
    }

    #[test]
    fn non_finite_gradient_leaves_state_untouched() {
        let mut p = vec![Tensor::<f32>::full(&[2], 1.0)];
        let mut st = OptState::new(&p);
        let before = (p.clone(), st.clone());
        let g = vec![Tensor::new(&[2], vec![0.1, f32::NAN]).unwrap()];
        assert!(adamw_step(&mut p, &g, &[true], &mut st, 0.1, &cfg(0.01)).is_err());
        assert_eq!((p, st), before);
        let mut p = vec![Tensor::<f32>::full(&[2], 1.0)];
        let mut st = OptState::new(&p);
        assert!(adamw_step(&mut p, &[Tensor::zeros(&[3])], &[true], &mut st, 0.1, &cfg(0.01)).is_err());
    }
}
