//! Extrapolation accuracy (SGCS, NMSE), the repeat-last-frame baseline, and
//! inference throughput.

mod bench;
mod report;

pub use bench::{bench_inference, hardware_string, BenchOptions, BenchResult};
pub use report::{append_csv, table_csv, EvalReport, EvalRow, CSV_HEADER, REPORT_SCHEMA_VERSION};

use num_complex::Complex64;

use crate::dataio::TaskSpec;
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Complex CSI region `[samples, frames, subcarriers, antenna pairs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiBatch {
    dims: [usize; 4],
    data: Vec<Complex64>,
}

impl CsiBatch {
    pub fn new(dims: [usize; 4], data: Vec<Complex64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() || dims.contains(&0) {
            return Err(Error::shape("csi batch", &dims, &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    /// Reads `[B, frames, subcarriers·antennas·2]` interleaved (re, im) features.
    pub fn from_interleaved<T: Scalar>(t: &Tensor<T>, n_subcarriers: usize) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || n_subcarriers == 0 || !s[2].is_multiple_of(2 * n_subcarriers) {
            return Err(Error::shape("from_interleaved", s, &[n_subcarriers]));
        }
        let data = t
            .data()
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0].to_f64(), c[1].to_f64()))
            .collect();
        Self::new([s[0], s[1], n_subcarriers, s[2] / (2 * n_subcarriers)], data)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    fn check_pair(pred: &Self, truth: &Self, op: &'static str) -> Result<()> {
        if pred.dims != truth.dims {
            return Err(Error::shape(op, &pred.dims, &truth.dims));
        }
        Ok(())
    }
}

/// Mean over (sample, frame, subcarrier) of `|⟨h, ĥ⟩|² / (‖h‖²·‖ĥ‖²)` on
/// antenna vectors. Units where either vector is zero contribute 0.
pub fn sgcs(pred: &CsiBatch, truth: &CsiBatch) -> Result<f64> {
    CsiBatch::check_pair(pred, truth, "sgcs")?;
    if truth.data.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::Config("sgcs of an all-zero ground truth is undefined".into()));
    }
    let n_ant = truth.dims[3];
    let units = truth.data.len() / n_ant;
    let total: f64 = pred
        .data
        .chunks_exact(n_ant)
        .zip(truth.data.chunks_exact(n_ant))
        .map(|(p, h)| {
            let mut inner = Complex64::new(0.0, 0.0);
            let (mut np, mut nh) = (0.0, 0.0);
            for (a, b) in h.iter().zip(p) {
                inner += a.conj() * b;
                nh += a.norm_sqr();
                np += b.norm_sqr();
            }
            let denom = nh * np;
            if denom > 0.0 {
                inner.norm_sqr() / denom
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / units as f64)
}

/// Per-sample `10·log10(Σ|Ĥ−H|² / Σ|H|²)`, averaged over samples in dB.
/// A sample predicted exactly yields `-inf`, which propagates to the mean.
pub fn nmse_db(pred: &CsiBatch, truth: &CsiBatch) -> Result<f64> {
    CsiBatch::check_pair(pred, truth, "nmse_db")?;
    let per_sample = truth.dims[1..].iter().product::<usize>();
    let mut acc = 0.0;
    for (p, h) in pred.data.chunks_exact(per_sample).zip(truth.data.chunks_exact(per_sample)) {
        let power: f64 = h.iter().map(|c| c.norm_sqr()).sum();
        if power == 0.0 {
            return Err(Error::Config("nmse of a zero-norm ground truth sample is undefined".into()));
        }
        let err: f64 = p.iter().zip(h).map(|(a, b)| (a - b).norm_sqr()).sum();
        acc += 10.0 * (err / power).log10();
    }
    Ok(acc / truth.dims[0] as f64)
}

/// SGCS and NMSE of one prediction set.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Accuracy {
    pub sgcs: f64,
    #[serde(with = "report::db")]
    pub nmse_db: f64,
}

/// Scores interleaved `[B, t_future, d_out]` predictions against targets.
pub fn accuracy(pred: &Tensor<f32>, truth: &Tensor<f32>, n_subcarriers: usize) -> Result<Accuracy> {
    let p = CsiBatch::from_interleaved(pred, n_subcarriers)?;
    let h = CsiBatch::from_interleaved(truth, n_subcarriers)?;
    Ok(Accuracy {
        sgcs: sgcs(&p, &h)?,
        nmse_db: nmse_db(&p, &h)?,
    })
}

/// Predicts every future frame as the last observed frame; entries outside
/// the observed region are zero. `x` is `[B, t_past, d_in]`, the result is
/// `[B, t_future, d_out]` for the grid `dims`.
pub fn baseline_repeat_last(x: &Tensor<f32>, spec: &TaskSpec, dims: [usize; 4]) -> Result<Tensor<f32>> {
    spec.validate(dims)?;
    let [_, nf, np, nq] = dims;
    let d_in = spec.d_in(nq);
    let d_out = TaskSpec::d_out(dims);
    let s = x.shape();
    if s.len() != 3 || s[1] != spec.t_past || s[2] != d_in {
        return Err(Error::shape("baseline_repeat_last", s, &[0, spec.t_past, d_in]));
    }
    // Output complex slot -> input complex slot within one frame.
    let mut source = vec![None; nf * np * nq];
    let mut slot = 0;
    for &f in &spec.observed_subcarriers {
        for &p in &spec.observed_tx {
            for q in 0..nq {
                source[(f * np + p) * nq + q] = Some(slot);
                slot += 1;
            }
        }
    }
    let mut frame = vec![0.0f32; d_out];
    let mut out = Vec::with_capacity(s[0] * spec.t_future * d_out);
    for sample in x.data().chunks_exact(spec.t_past * d_in) {
        let last = &sample[(spec.t_past - 1) * d_in..];
        for (o, src) in source.iter().enumerate() {
            let (re, im) = src.map_or((0.0, 0.0), |i| (last[2 * i], last[2 * i + 1]));
            frame[2 * o] = re;
            frame[2 * o + 1] = im;
        }
        for _ in 0..spec.t_future {
            out.extend_from_slice(&frame);
        }
    }
    Tensor::new(&[s[0], spec.t_future, d_out], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(dims: [usize; 4], f: impl Fn(usize) -> Complex64) -> CsiBatch {
        CsiBatch::new(dims, (0..dims.iter().product()).map(f).collect()).unwrap()
    }

    fn wavy(i: usize) -> Complex64 {
        Complex64::new((i as f64 * 0.37).sin() + 0.1, (i as f64 * 0.91).cos())
    }

    const DIMS: [usize; 4] = [2, 3, 4, 8];

    #[test]
    fn sgcs_identities() {
        let h = batch(DIMS, wavy);
        assert!((sgcs(&h, &h).unwrap() - 1.0).abs() < 1e-12);
        let c = Complex64::new(0.3, -2.0);
        let scaled = batch(DIMS, |i| c * wavy(i));
        assert!((sgcs(&scaled, &h).unwrap() - 1.0).abs() < 1e-12);

        let e1 = CsiBatch::new([1, 1, 1, 2], vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        let e2 = CsiBatch::new([1, 1, 1, 2], vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]).unwrap();
        assert_eq!(sgcs(&e2, &e1).unwrap(), 0.0);

        let zero = batch(DIMS, |_| Complex64::new(0.0, 0.0));
        assert_eq!(sgcs(&zero, &h).unwrap(), 0.0);
        assert!(sgcs(&h, &zero).is_err());
        assert!(sgcs(&h, &batch([2, 3, 8, 4], wavy)).is_err());
    }

    #[test]
    fn nmse_identities() {
        let h = batch(DIMS, wavy);
        let zero = batch(DIMS, |_| Complex64::new(0.0, 0.0));
        assert!(nmse_db(&zero, &h).unwrap().abs() < 1e-12);
        let twice = batch(DIMS, |i| 2.0 * wavy(i));
        assert!(nmse_db(&twice, &h).unwrap().abs() < 1e-12);
        assert_eq!(nmse_db(&h, &h).unwrap(), f64::NEG_INFINITY);
        assert!(nmse_db(&h, &zero).is_err());
    }

    #[test]
    fn interleaved_layout() {
        let t = Tensor::<f32>::new(&[1, 1, 8], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let b = CsiBatch::from_interleaved(&t, 2).unwrap();
        assert_eq!(b.dims(), [1, 1, 2, 2]);
        assert_eq!(b.data()[2], Complex64::new(5.0, 6.0));
        assert!(CsiBatch::from_interleaved(&t, 3).is_err());
    }
}
