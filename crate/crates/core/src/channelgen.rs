//! Synthetic CSI from a simplified cluster-delay-line model.
//!
//! Each sample is a sum of single-ray clusters observed on an OFDM grid
//! with half-wavelength uniform linear arrays at both ends:
//!
//! `H[t,f,p,q] = Σ_k a_k · e^{j2π(ν_k·t·Δt − τ_k·f·Δf)} · e^{jπ·p·sin φ_k} · e^{jπ·q·sin θ_k}`

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation parameters for one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// Hz.
    pub carrier_freq: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Hz.
    pub subcarrier_spacing: f64,
    pub n_subcarriers: usize,
    pub n_frames: usize,
    /// Seconds between consecutive frames.
    pub frame_interval: f64,
    /// Seconds, `[min, max]`.
    pub delay_spread_range: [f64; 2],
    /// Hz.
    pub max_doppler: f64,
    pub n_clusters: usize,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self::dataset_a()
    }
}

impl ChannelConfig {
    /// In-distribution settings (1400 Hz maximum Doppler).
    pub fn dataset_a() -> Self {
        Self {
            carrier_freq: 2.8e10,
            n_tx: 4,
            n_rx: 2,
            subcarrier_spacing: 1.5e4,
            n_subcarriers: 16,
            n_frames: 12,
            frame_interval: 1e-4,
            delay_spread_range: [50e-9, 300e-9],
            max_doppler: 1400.0,
            n_clusters: 12,
            seed: 0xA,
        }
    }

    /// Out-of-distribution settings: identical to A except Doppler and seed.
    pub fn dataset_b() -> Self {
        Self {
            max_doppler: 1500.0,
            seed: 0xB,
            ..Self::dataset_a()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_tx == 0 || self.n_rx == 0 || self.n_subcarriers == 0 || self.n_clusters == 0 {
            return fail(format!(
                "n_tx, n_rx, n_subcarriers and n_clusters must be >= 1 (got {}, {}, {}, {})",
                self.n_tx, self.n_rx, self.n_subcarriers, self.n_clusters
            ));
        }
        if self.n_frames < 2 {
            return fail(format!("n_frames must be >= 2, got {}", self.n_frames));
        }
        let [lo, hi] = self.delay_spread_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return fail(format!("delay_spread_range must satisfy 0 < min <= max, got [{lo}, {hi}]"));
        }
        if !(self.max_doppler >= 0.0 && self.max_doppler.is_finite()) {
            return fail(format!("max_doppler must be >= 0, got {}", self.max_doppler));
        }
        if !(self.frame_interval > 0.0 && self.subcarrier_spacing > 0.0 && self.carrier_freq > 0.0) {
            return fail("frame_interval, subcarrier_spacing and carrier_freq must be positive".into());
        }
        Ok(())
    }

    /// `[n_frames, n_subcarriers, n_tx, n_rx]`.
    pub fn grid(&self) -> [usize; 4] {
        [self.n_frames, self.n_subcarriers, self.n_tx, self.n_rx]
    }
}

/// The two simulated datasets: A trains and tests in-distribution, B is
/// held out for out-of-distribution evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    A,
    B,
}

impl DatasetId {
    pub fn label(self) -> &'static str {
        match self {
            DatasetId::A => "A",
            DatasetId::B => "B",
        }
    }

    pub fn distribution(self) -> &'static str {
        match self {
            DatasetId::A => "in-distribution",
            DatasetId::B => "out-of-distribution",
        }
    }
}

impl std::fmt::Display for DatasetId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(DatasetId::A),
            "B" | "b" => Ok(DatasetId::B),
            _ => Err(Error::Config(format!("unknown dataset {s:?} (expected A or B)"))),
        }
    }
}

/// One propagation cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Seconds.
    pub delay: f64,
    /// Hz.
    pub doppler: f64,
    /// Departure angle, radians.
    pub aod: f64,
    /// Arrival angle, radians.
    pub aoa: f64,
    pub gain: Complex64,
}

/// Latent parameters of one channel realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSet {
    pub delay_spread: f64,
    pub clusters: Vec<Cluster>,
}

impl ClusterSet {
    pub fn total_power(&self) -> f64 {
        self.clusters.iter().map(|c| c.gain.norm_sqr()).sum()
    }
}

/// Complex channel coefficients over `[frame, subcarrier, tx, rx]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiTensor {
    dims: [usize; 4],
    data: Vec<Complex64>,
}

impl CsiTensor {
    pub fn new(dims: [usize; 4], data: Vec<Complex64>) -> Result<Self> {
        if dims.iter().product::<usize>() != data.len() || dims.contains(&0) {
            return Err(Error::shape("csi", &dims, &[data.len()]));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("csi tensor".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn offset(&self, t: usize, f: usize, p: usize, q: usize) -> usize {
        let [_, nf, np, nq] = self.dims;
        ((t * nf + f) * np + p) * nq + q
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize, p: usize, q: usize) -> Complex64 {
        self.data[self.offset(t, f, p, q)]
    }

    /// Mean of |H|² over the whole grid.
    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }
}

/// Draws one cluster realization.
///
/// The delay spread is uniform over the configured range; delays are
/// exponential with that mean, sorted, with the first cluster at zero
/// delay; powers follow an exponential delay profile.
pub fn sample_clusters<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> ClusterSet {
    let [lo, hi] = cfg.delay_spread_range;
    let spread = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let exp = Exp::new(1.0 / spread).expect("positive delay spread");

    let mut delays = Vec::with_capacity(cfg.n_clusters);
    delays.push(0.0);
    delays.extend((1..cfg.n_clusters).map(|_| exp.sample(rng)));
    delays.sort_by(f64::total_cmp);

    let powers: Vec<f64> = delays.iter().map(|&d| (-d / spread).exp()).collect();
    let total: f64 = powers.iter().sum();

    let clusters = delays
        .iter()
        .zip(&powers)
        .map(|(&delay, &power)| {
            let phase = rng.random_range(0.0..2.0 * PI);
            let psi = rng.random_range(0.0..2.0 * PI);
            let aod = rng.random_range(0.0..2.0 * PI);
            let aoa = rng.random_range(0.0..2.0 * PI);
            Cluster {
                delay,
                doppler: cfg.max_doppler * psi.cos(),
                aod,
                aoa,
                gain: Complex64::from_polar((power / total).sqrt(), phase),
            }
        })
        .collect();
    ClusterSet {
        delay_spread: spread,
        clusters,
    }
}

fn phasors(n: usize, step: f64) -> impl Iterator<Item = Complex64> {
    (0..n).map(move |i| Complex64::from_polar(1.0, step * i as f64))
}

/// Evaluates the cluster sum on the configured grid.
pub fn synthesize_csi(clusters: &ClusterSet, cfg: &ChannelConfig) -> CsiTensor {
    let dims = cfg.grid();
    let [nt, nf, np, nq] = dims;
    let mut data = vec![Complex64::new(0.0, 0.0); dims.iter().product()];
    let mut sp = vec![Complex64::new(0.0, 0.0); np * nq];
    for c in &clusters.clusters {
        let time: Vec<Complex64> = phasors(nt, 2.0 * PI * c.doppler * cfg.frame_interval).collect();
        let freq: Vec<Complex64> = phasors(nf, -2.0 * PI * c.delay * cfg.subcarrier_spacing).collect();
        let tx: Vec<Complex64> = phasors(np, PI * c.aod.sin()).collect();
        let rx: Vec<Complex64> = phasors(nq, PI * c.aoa.sin()).collect();
        for (p, &a) in tx.iter().enumerate() {
            for (q, &b) in rx.iter().enumerate() {
                sp[p * nq + q] = c.gain * a * b;
            }
        }
        let mut out = data.chunks_exact_mut(np * nq);
        for &et in &time {
            for &ef in &freq {
                let tf = et * ef;
                let block = out.next().expect("grid sized from cfg");
                block.iter_mut().zip(&sp).for_each(|(h, &s)| *h += tf * s);
            }
        }
    }
    CsiTensor { dims, data }
}

/// Generator stream for sample `index` of a dataset seeded with `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `n_samples` independent realizations; identical bytes for identical inputs
/// regardless of worker count.
pub fn generate_dataset(cfg: &ChannelConfig, n_samples: usize, seed: u64) -> Result<Vec<CsiTensor>> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    Ok((0..n_samples)
        .into_par_iter()
        .map(|i| {
            let clusters = sample_clusters(cfg, &mut sample_rng(seed, i));
            synthesize_csi(&clusters, cfg)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(cluster: Cluster) -> ClusterSet {
        ClusterSet {
            delay_spread: 1e-7,
            clusters: vec![cluster],
        }
    }

    #[test]
    fn presets_differ_only_in_doppler_and_seed() {
        let (a, b) = (ChannelConfig::dataset_a(), ChannelConfig::dataset_b());
        assert_eq!((a.max_doppler, b.max_doppler), (1400.0, 1500.0));
        assert_eq!(
            ChannelConfig {
                max_doppler: a.max_doppler,
                seed: a.seed,
                ..b
            },
            a
        );
    }

    #[test]
    fn validation_rejects_bad_ranges() {
        let bad = [
            ChannelConfig { n_frames: 1, ..Default::default() },
            ChannelConfig { n_tx: 0, ..Default::default() },
            ChannelConfig { delay_spread_range: [3e-7, 1e-7], ..Default::default() },
            ChannelConfig { delay_spread_range: [0.0, 1e-7], ..Default::default() },
            ChannelConfig { max_doppler: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        ChannelConfig::default().validate().unwrap();
    }

    #[test]
    fn one_cluster_has_zero_delay_and_unit_power() {
        let cfg = ChannelConfig { n_clusters: 1, ..Default::default() };
        let set = sample_clusters(&cfg, &mut sample_rng(3, 0));
        assert_eq!(set.clusters[0].delay, 0.0);
        assert!((set.total_power() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn draws_are_normalized_and_bounded() {
        let cfg = ChannelConfig::default();
        for i in 0..200 {
            let set = sample_clusters(&cfg, &mut sample_rng(9, i));
            assert!((set.total_power() - 1.0).abs() < 1e-12);
            assert!(set.clusters.windows(2).all(|w| w[0].delay <= w[1].delay));
            assert_eq!(set.clusters[0].delay, 0.0);
            for c in &set.clusters {
                assert!(c.doppler.abs() <= cfg.max_doppler && c.delay >= 0.0);
            }
            let [lo, hi] = cfg.delay_spread_range;
            assert!(set.delay_spread >= lo && set.delay_spread <= hi);
        }
    }

    #[test]
    fn static_unit_cluster_gives_all_ones() {
        let cfg = ChannelConfig::default();
        let h = synthesize_csi(
            &single(Cluster {
                delay: 0.0,
                doppler: 0.0,
                aod: 0.0,
                aoa: 0.0,
                gain: Complex64::new(1.0, 0.0),
            }),
            &cfg,
        );
        assert!(h.data().iter().all(|&v| v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn single_doppler_gives_constant_frame_ratio() {
        let cfg = ChannelConfig { frame_interval: 1e-3, ..Default::default() };
        let h = synthesize_csi(
            &single(Cluster {
                delay: 120e-9,
                doppler: 100.0,
                aod: 0.4,
                aoa: 1.3,
                gain: Complex64::from_polar(1.0, 0.3),
            }),
            &cfg,
        );
        let expected = Complex64::from_polar(1.0, 2.0 * PI * 0.1);
        for t in 0..cfg.n_frames - 1 {
            let ratio = h.get(t + 1, 5, 2, 1) / h.get(t, 5, 2, 1);
            assert!((ratio - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic_and_rejects_empty() {
        let cfg = ChannelConfig::default();
        let a = generate_dataset(&cfg, 5, 77).unwrap();
        let b = generate_dataset(&cfg, 5, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(&cfg, 5, 78).unwrap());
        assert!(generate_dataset(&cfg, 0, 77).is_err());
    }
}
