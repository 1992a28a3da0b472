//! Masked multi-domain extrapolation tasks.
//!
//! Inputs are always the first `t_past` frames restricted to the observed
//! subcarriers and tx antennas; targets are the next `t_future` frames over
//! the full grid. Complex entries become interleaved (re, im) features,
//! ordered `[f][p][q][re|im]` within a frame.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channelgen::CsiTensor;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Which dimensions beyond time are extrapolated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskDomain {
    #[serde(rename = "T-D")]
    Time,
    #[serde(rename = "TF-D")]
    TimeFrequency,
    #[serde(rename = "TS-D")]
    TimeSpace,
    #[serde(rename = "TFS-D")]
    TimeFrequencySpace,
}

impl TaskDomain {
    pub const ALL: [TaskDomain; 4] = [
        TaskDomain::Time,
        TaskDomain::TimeFrequency,
        TaskDomain::TimeSpace,
        TaskDomain::TimeFrequencySpace,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TaskDomain::Time => "T-D",
            TaskDomain::TimeFrequency => "TF-D",
            TaskDomain::TimeSpace => "TS-D",
            TaskDomain::TimeFrequencySpace => "TFS-D",
        }
    }

    pub fn masks_frequency(self) -> bool {
        matches!(self, TaskDomain::TimeFrequency | TaskDomain::TimeFrequencySpace)
    }

    pub fn masks_space(self) -> bool {
        matches!(self, TaskDomain::TimeSpace | TaskDomain::TimeFrequencySpace)
    }
}

impl fmt::Display for TaskDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TaskDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskDomain::ALL
            .into_iter()
            .find(|d| d.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown task domain {s:?} (expected T-D, TF-D, TS-D or TFS-D)")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub domain: TaskDomain,
    pub t_past: usize,
    pub t_future: usize,
    pub observed_subcarriers: Vec<usize>,
    pub observed_tx: Vec<usize>,
}

/// One grid position `(frame, subcarrier, tx, rx)`.
pub type Cell = (usize, usize, usize, usize);

impl TaskSpec {
    /// Standard mask for `domain`: masked dimensions observe their first half.
    pub fn new(domain: TaskDomain, t_past: usize, t_future: usize, n_subcarriers: usize, n_tx: usize) -> Self {
        let half = |n: usize| (0..(n / 2).max(1)).collect::<Vec<_>>();
        Self {
            domain,
            t_past,
            t_future,
            observed_subcarriers: if domain.masks_frequency() {
                half(n_subcarriers)
            } else {
                (0..n_subcarriers).collect()
            },
            observed_tx: if domain.masks_space() { half(n_tx) } else { (0..n_tx).collect() },
        }
    }

    /// Checks the spec against a `[frames, subcarriers, tx, rx]` grid.
    pub fn validate(&self, dims: [usize; 4]) -> Result<()> {
        let [nt, nf, np, _] = dims;
        if self.t_past == 0 || self.t_future == 0 || self.t_past + self.t_future != nt {
            return Err(Error::Config(format!(
                "t_past ({}) + t_future ({}) must equal n_frames ({nt}), both positive",
                self.t_past, self.t_future
            )));
        }
        let check = |set: &[usize], n: usize, what: &str| {
            let sorted_unique = set.windows(2).all(|w| w[0] < w[1]);
            if set.is_empty() || !sorted_unique || set.iter().any(|&i| i >= n) {
                Err(Error::Config(format!(
                    "observed {what} {set:?} must be a nonempty increasing subset of 0..{n}"
                )))
            } else {
                Ok(())
            }
        };
        check(&self.observed_subcarriers, nf, "subcarriers")?;
        check(&self.observed_tx, np, "tx antennas")
    }

    pub fn d_in(&self, n_rx: usize) -> usize {
        self.observed_subcarriers.len() * self.observed_tx.len() * n_rx * 2
    }

    pub fn d_out(dims: [usize; 4]) -> usize {
        dims[1] * dims[2] * dims[3] * 2
    }

    /// Grid cells feeding the input, one per complex feature pair, in feature order.
    pub fn input_cells(&self, n_rx: usize) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.t_past * self.d_in(n_rx) / 2);
        for t in 0..self.t_past {
            for &f in &self.observed_subcarriers {
                for &p in &self.observed_tx {
                    for q in 0..n_rx {
                        cells.push((t, f, p, q));
                    }
                }
            }
        }
        cells
    }

    /// Grid cells of the target, in feature order.
    pub fn target_cells(&self, dims: [usize; 4]) -> Vec<Cell> {
        let [_, nf, np, nq] = dims;
        let mut cells = Vec::with_capacity(self.t_future * nf * np * nq);
        for t in self.t_past..self.t_past + self.t_future {
            for f in 0..nf {
                for p in 0..np {
                    for q in 0..nq {
                        cells.push((t, f, p, q));
                    }
                }
            }
        }
        cells
    }
}

/// One supervised pair: `x` is `[t_past, d_in]`, `y` is `[t_future, d_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSample {
    pub x: Tensor<f32>,
    pub y: Tensor<f32>,
}

fn interleave(csi: &CsiTensor, cells: &[Cell]) -> Vec<f32> {
    let mut out = Vec::with_capacity(cells.len() * 2);
    for &(t, f, p, q) in cells {
        let h = csi.get(t, f, p, q);
        out.push(h.re as f32);
        out.push(h.im as f32);
    }
    out
}

pub fn make_task_sample(csi: &CsiTensor, spec: &TaskSpec) -> Result<TaskSample> {
    let dims = csi.dims();
    spec.validate(dims)?;
    let n_rx = dims[3];
    let x = Tensor::new(&[spec.t_past, spec.d_in(n_rx)], interleave(csi, &spec.input_cells(n_rx)))?;
    let y = Tensor::new(
        &[spec.t_future, TaskSpec::d_out(dims)],
        interleave(csi, &spec.target_cells(dims)),
    )?;
    Ok(TaskSample { x, y })
}

/// Stacks the selected samples into `([B, t_past, d_in], [B, t_future, d_out])`.
pub fn stack_batch(samples: &[TaskSample], indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = indices
        .first()
        .map(|&i| &samples[i])
        .ok_or_else(|| Error::Config("empty batch".into()))?;
    let (xs, ys) = (first.x.shape().to_vec(), first.y.shape().to_vec());
    let mut xd = Vec::with_capacity(indices.len() * first.x.numel());
    let mut yd = Vec::with_capacity(indices.len() * first.y.numel());
    for &i in indices {
        let s = &samples[i];
        if s.x.shape() != xs || s.y.shape() != ys {
            return Err(Error::shape("stack_batch", &xs, s.x.shape()));
        }
        xd.extend_from_slice(s.x.data());
        yd.extend_from_slice(s.y.data());
    }
    let b = indices.len();
    Ok((
        Tensor::new(&[b, xs[0], xs[1]], xd)?,
        Tensor::new(&[b, ys[0], ys[1]], yd)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelgen::{generate_dataset, ChannelConfig};

    const DIMS: [usize; 4] = [12, 16, 4, 2];

    #[test]
    fn feature_widths_per_domain() {
        let td = TaskSpec::new(TaskDomain::Time, 8, 4, 16, 4);
        assert_eq!((td.d_in(2), TaskSpec::d_out(DIMS)), (256, 256));
        let tf = TaskSpec::new(TaskDomain::TimeFrequency, 8, 4, 16, 4);
        assert_eq!(tf.observed_subcarriers, (0..8).collect::<Vec<_>>());
        assert_eq!(tf.d_in(2), 128);
        let ts = TaskSpec::new(TaskDomain::TimeSpace, 8, 4, 16, 4);
        assert_eq!(ts.d_in(2), 128);
        let tfs = TaskSpec::new(TaskDomain::TimeFrequencySpace, 8, 4, 16, 4);
        assert_eq!(tfs.observed_tx, vec![0, 1]);
        assert_eq!(tfs.d_in(2), 64);
    }

    #[test]
    fn domain_labels_parse() {
        for d in TaskDomain::ALL {
            assert_eq!(d.label().parse::<TaskDomain>().unwrap(), d);
            assert_eq!(serde_json::to_string(&d).unwrap(), format!("\"{}\"", d.label()));
        }
        assert!("TD".parse::<TaskDomain>().is_err());
    }

    #[test]
    fn sample_layout_and_errors() {
        let cfg = ChannelConfig::default();
        let csi = &generate_dataset(&cfg, 1, 5).unwrap()[0];
        let spec = TaskSpec::new(TaskDomain::TimeFrequencySpace, 8, 4, 16, 4);
        let s = make_task_sample(csi, &spec).unwrap();
        assert_eq!(s.x.shape(), &[8, 64]);
        assert_eq!(s.y.shape(), &[4, 256]);
        // x[frame 2, feature pair for (f=1, p=1, q=0)] with 2 observed tx, 2 rx
        let (f, p, q) = (1, 1, 0);
        let pair = (f * 2 + p) * 2 + q;
        assert_eq!(s.x.data()[2 * 64 + 2 * pair], csi.get(2, 1, 1, 0).re as f32);
        assert_eq!(s.x.data()[2 * 64 + 2 * pair + 1], csi.get(2, 1, 1, 0).im as f32);
        assert_eq!(s.y.data()[0], csi.get(8, 0, 0, 0).re as f32);

        let bad = TaskSpec { t_past: 7, ..spec.clone() };
        assert!(make_task_sample(csi, &bad).is_err());
        let bad = TaskSpec { observed_tx: vec![4], ..spec.clone() };
        assert!(make_task_sample(csi, &bad).is_err());
        let bad = TaskSpec { observed_subcarriers: vec![3, 1], ..spec };
        assert!(make_task_sample(csi, &bad).is_err());
    }

    #[test]
    fn batches_stack_in_order() {
        let cfg = ChannelConfig::default();
        let spec = TaskSpec::new(TaskDomain::Time, 8, 4, 16, 4);
        let samples: Vec<TaskSample> = generate_dataset(&cfg, 3, 2)
            .unwrap()
            .iter()
            .map(|c| make_task_sample(c, &spec).unwrap())
            .collect();
        let (x, y) = stack_batch(&samples, &[2, 0]).unwrap();
        assert_eq!(x.shape(), &[2, 8, 256]);
        assert_eq!(&x.data()[..2048], samples[2].x.data());
        assert_eq!(&y.data()[1024..], samples[0].y.data());
        assert!(stack_batch(&samples, &[]).is_err());
    }
}
