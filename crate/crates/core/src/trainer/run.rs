use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channelgen::CsiTensor;
use crate::dataio::{make_task_sample, stack_batch, Split, TaskSample, TaskSpec};
use crate::error::{Error, Result};
use crate::extrapolator::{forward_on_tape, load_params, save_checkpoint, ModelConfig, ModelParams};
use crate::metrics::{accuracy, Accuracy};
use crate::numerics::{Tape, Tensor};

use super::{adamw_step, onecycle_lr, OptState, TrainConfig};

/// Task samples for one dataset, already split.
#[derive(Clone, Debug)]
pub struct TaskData {
    pub spec: TaskSpec,
    /// Grid `[frames, subcarriers, n_tx, n_rx]` the samples were cut from.
    pub dims: [usize; 4],
    pub train: Vec<TaskSample>,
    pub val: Vec<TaskSample>,
    pub test: Vec<TaskSample>,
}

impl TaskData {
    pub fn from_split(csi: &[CsiTensor], split: &Split, spec: &TaskSpec) -> Result<Self> {
        let dims = csi
            .first()
            .ok_or_else(|| Error::Config("empty dataset".into()))?
            .dims();
        let cut = |idx: &[usize]| -> Result<Vec<TaskSample>> {
            idx.iter()
                .map(|&i| {
                    let c = csi.get(i).ok_or_else(|| Error::Config(format!("split index {i} out of range")))?;
                    if c.dims() != dims {
                        return Err(Error::shape("dataset", &dims, &c.dims()));
                    }
                    make_task_sample(c, spec)
                })
                .collect()
        };
        Ok(Self {
            spec: spec.clone(),
            dims,
            train: cut(&split.train)?,
            val: cut(&split.val)?,
            test: cut(&split.test)?,
        })
    }

    fn check_model(&self, cfg: &ModelConfig) -> Result<()> {
        let d_in = self.spec.d_in(self.dims[3]);
        let d_out = TaskSpec::d_out(self.dims);
        let want = [self.spec.t_past, self.spec.t_future, d_in, d_out];
        let got = [cfg.t_past, cfg.t_future, cfg.d_in, cfg.d_out];
        if want != got {
            return Err(Error::shape("model vs task (t_past, t_future, d_in, d_out)", &got, &want));
        }
        if self.train.is_empty() || self.val.is_empty() {
            return Err(Error::Config("training and validation sets must be non-empty".into()));
        }
        Ok(())
    }
}

/// Progress record emitted after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_config: TrainConfig,
    pub model_config: ModelConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub steps: usize,
    /// Mean mini-batch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Full validation MSE after each epoch.
    pub val_loss: Vec<f64>,
    /// Learning rate used at every optimizer step.
    pub lr_trace: Vec<f64>,
    /// Zero-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_clock_s: f64,
    /// Accuracy of the best parameters on the test split, when it is non-empty.
    pub test: Option<Accuracy>,
}

/// Batched inference over `samples`; returns stacked `(prediction, target)`.
pub fn predict(params: &ModelParams<f32>, samples: &[TaskSample], batch_size: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let (_, target) = stack_batch(samples, &idx)?;
    let mut out = Vec::with_capacity(target.numel());
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, _) = stack_batch(samples, chunk)?;
        out.extend_from_slice(params.forward(&x)?.data());
    }
    Ok((Tensor::new(target.shape(), out)?, target))
}

/// Mean squared error over every output element of `samples`.
pub fn evaluate_loss(params: &ModelParams<f32>, samples: &[TaskSample], batch_size: usize) -> Result<f64> {
    let (pred, target) = predict(params, samples, batch_size)?;
    let sq: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum();
    Ok(sq / pred.numel() as f64)
}

/// Trains from `ModelParams::init(model_cfg)` and returns the parameters with
/// the lowest validation loss. When `checkpoint` is given, every new best is
/// written there atomically.
pub fn train(
    model_cfg: &ModelConfig,
    data: &TaskData,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
    progress: &mut dyn FnMut(&EpochLog),
) -> Result<(ModelParams<f32>, TrainReport)> {
    cfg.validate()?;
    model_cfg.validate()?;
    data.check_model(model_cfg)?;
    let start = Instant::now();

    let mut params = ModelParams::<f32>::init(model_cfg)?;
    let decay: Vec<bool> = params.specs().iter().map(|s| s.decays()).collect();
    let mut state = OptState::new(&params.tensors);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n = data.train.len();
    let per_epoch = n.div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    let mut lr_trace = Vec::with_capacity(total);
    let (mut train_loss, mut val_loss) = (Vec::new(), Vec::new());
    let mut best: Option<(usize, f64, ModelParams<f32>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let step = lr_trace.len();
            let lr = onecycle_lr(step, total, cfg)?;
            let (x, y) = stack_batch(&data.train, batch)?;
            let mut tape = Tape::new();
            let vars = load_params(&mut tape, &params);
            let xv = tape.constant(x);
            let yv = tape.constant(y);
            let pred = forward_on_tape(&mut tape, model_cfg, &vars, xv)?;
            let loss = tape.mse_loss(pred, yv)?;
            let value = tape.value(loss).item() as f64;
            if !value.is_finite() {
                return Err(Error::NanLoss { step, value });
            }
            let mut grads = tape.backward(loss)?;
            let grads: Vec<Tensor<f32>> = vars.iter().map(|&v| grads.take(v)).collect();
            adamw_step(&mut params.tensors, &grads, &decay, &mut state, lr, cfg)?;
            lr_trace.push(lr);
            acc += value;
        }
        let tl = acc / per_epoch as f64;
        let vl = evaluate_loss(&params, &data.val, cfg.batch_size)?;
        if !vl.is_finite() {
            return Err(Error::NanLoss {
                step: lr_trace.len(),
                value: vl,
            });
        }
        train_loss.push(tl);
        val_loss.push(vl);
        if best.as_ref().is_none_or(|(_, b, _)| vl < *b) {
            if let Some(path) = checkpoint {
                save_checkpoint(&params, path)?;
            }
            best = Some((epoch, vl, params.clone()));
        }
        progress(&EpochLog {
            epoch,
            train_loss: tl,
            val_loss: vl,
            lr: *lr_trace.last().expect("at least one step per epoch"),
        });
    }

    let (best_epoch, best_val_loss, best_params) = best.expect("at least one epoch");
    let test = if data.test.is_empty() {
        None
    } else {
        let (pred, target) = predict(&best_params, &data.test, cfg.batch_size)?;
        Some(accuracy(&pred, &target, data.dims[1])?)
    };
    let report = TrainReport {
        train_config: cfg.clone(),
        model_config: model_cfg.clone(),
        n_train: n,
        n_val: data.val.len(),
        n_test: data.test.len(),
        steps: lr_trace.len(),
        train_loss,
        val_loss,
        lr_trace,
        best_epoch,
        best_val_loss,
        wall_clock_s: start.elapsed().as_secs_f64(),
        test,
    };
    Ok((best_params, report))
}
