use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

use super::{Mixer, ModelConfig};

/// Role of a parameter array; decides initialization and weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight { fan_in: usize, fan_out: usize },
    Bias,
    Gamma,
    Beta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

impl ParamSpec {
    /// Only weight matrices are decayed.
    pub fn decays(&self) -> bool {
        matches!(self.kind, ParamKind::Weight { .. })
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

fn linear(out: &mut Vec<ParamSpec>, name: &str, fan_in: usize, fan_out: usize) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![fan_in, fan_out],
        kind: ParamKind::Weight { fan_in, fan_out },
    });
    out.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![fan_out],
        kind: ParamKind::Bias,
    });
}

fn norm(out: &mut Vec<ParamSpec>, name: &str, d: usize) {
    out.push(ParamSpec {
        name: format!("{name}.gamma"),
        shape: vec![d],
        kind: ParamKind::Gamma,
    });
    out.push(ParamSpec {
        name: format!("{name}.beta"),
        shape: vec![d],
        kind: ParamKind::Beta,
    });
}

/// Parameter arrays in declaration order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let d = cfg.d_model;
    let mut out = Vec::new();
    linear(&mut out, "embed", cfg.d_in, d);
    for i in 0..cfg.depth {
        let b = format!("blocks.{i}");
        match cfg.mixer {
            Mixer::Mlp => {
                linear(&mut out, &format!("{b}.mixer.fc1"), cfg.t_past, 2 * cfg.t_past);
                linear(&mut out, &format!("{b}.mixer.fc2"), 2 * cfg.t_past, cfg.t_past);
            }
            Mixer::Attention => {
                for proj in ["q", "k", "v", "o"] {
                    linear(&mut out, &format!("{b}.mixer.{proj}"), d, d);
                }
            }
        }
        norm(&mut out, &format!("{b}.ln1"), d);
        linear(&mut out, &format!("{b}.ff.fc1"), d, cfg.ff_hidden);
        linear(&mut out, &format!("{b}.ff.fc2"), cfg.ff_hidden, d);
        norm(&mut out, &format!("{b}.ln2"), d);
    }
    linear(&mut out, "temporal", cfg.t_past, cfg.t_future);
    linear(&mut out, "head", d, cfg.d_out);
    out
}

/// Per-section parameter totals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    pub embed: usize,
    pub per_block: usize,
    pub blocks: usize,
    pub temporal: usize,
    pub head: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.embed + self.blocks + self.temporal + self.head
    }
}

/// Closed-form parameter count.
pub fn count_params(cfg: &ModelConfig) -> ParamCount {
    let (d, tp, tf, ff) = (cfg.d_model, cfg.t_past, cfg.t_future, cfg.ff_hidden);
    let mixer = match cfg.mixer {
        Mixer::Mlp => 4 * tp * tp + 3 * tp,
        Mixer::Attention => 4 * d * d + 4 * d,
    };
    let per_block = mixer + 2 * d * ff + ff + 5 * d;
    ParamCount {
        embed: cfg.d_in * d + d,
        per_block,
        blocks: cfg.depth * per_block,
        temporal: tp * tf + tf,
        head: d * cfg.d_out + cfg.d_out,
    }
}

/// All learnable arrays of one model, aligned with [`param_specs`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-uniform weights, zero biases, unit gammas, zero betas.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let tensors = param_specs(cfg)
            .iter()
            .map(|spec| match spec.kind {
                ParamKind::Weight { fan_in, fan_out } => {
                    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let data = (0..spec.numel()).map(|_| T::from_f64(rng.random_range(-s..s))).collect();
                    Tensor::new(&spec.shape, data)
                }
                ParamKind::Gamma => Ok(Tensor::ones(&spec.shape)),
                ParamKind::Bias | ParamKind::Beta => Ok(Tensor::zeros(&spec.shape)),
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: cfg.clone(),
            tensors,
        })
    }

    /// Wraps externally produced arrays after checking them against the config.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        if specs.len() != tensors.len() {
            return Err(Error::Format(format!(
                "expected {} parameter arrays, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        for (spec, t) in specs.iter().zip(&tensors) {
            if t.shape() != spec.shape {
                return Err(Error::shape("model params", &spec.shape, t.shape()));
            }
        }
        Ok(Self { config, tensors })
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        param_specs(&self.config)
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_with_stated_rules() {
        let cfg = ModelConfig {
            depth: 2,
            d_model: 16,
            ff_hidden: 32,
            ..Default::default()
        };
        let a = ModelParams::<f32>::init(&cfg).unwrap();
        assert_eq!(a, ModelParams::<f32>::init(&cfg).unwrap());
        let other = ModelParams::<f32>::init(&ModelConfig { init_seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(a, other);
        for (spec, t) in a.specs().iter().zip(&a.tensors) {
            match spec.kind {
                ParamKind::Bias | ParamKind::Beta => assert!(t.data().iter().all(|&v| v == 0.0)),
                ParamKind::Gamma => assert!(t.data().iter().all(|&v| v == 1.0)),
                ParamKind::Weight { fan_in, fan_out } => {
                    let s = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                    assert!(t.data().iter().all(|&v| v.abs() <= s));
                    assert!(t.data().iter().any(|&v| v != 0.0));
                }
            }
        }
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let cfg = ModelConfig {
            depth: 1,
            d_model: 8,
            ff_hidden: 16,
            ..Default::default()
        };
        let p = ModelParams::<f64>::init(&cfg).unwrap();
        assert!(ModelParams::from_tensors(cfg.clone(), p.tensors.clone()).is_ok());
        let mut short = p.tensors.clone();
        short.pop();
        assert!(ModelParams::from_tensors(cfg.clone(), short).is_err());
        let mut wrong = p.tensors;
        wrong[0] = Tensor::zeros(&[3, 3]);
        assert!(ModelParams::from_tensors(cfg, wrong).is_err());
    }
}
