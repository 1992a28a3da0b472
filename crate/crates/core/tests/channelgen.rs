use std::f64::consts::PI;

use chanex_core::channelgen::{
    generate_dataset, sample_clusters, sample_rng, synthesize_csi, ChannelConfig, ClusterSet,
};
use chanex_core::dataio::encode_dataset;
use num_complex::Complex64;
use rustfft::FftPlanner;

fn brute_force(set: &ClusterSet, cfg: &ChannelConfig) -> Vec<Complex64> {
    let [nt, nf, np, nq] = cfg.grid();
    let mut out = Vec::new();
    for t in 0..nt {
        for f in 0..nf {
            for p in 0..np {
                for q in 0..nq {
                    let mut h = Complex64::new(0.0, 0.0);
                    for c in &set.clusters {
                        let phase = 2.0 * PI * c.doppler * t as f64 * cfg.frame_interval
                            - 2.0 * PI * c.delay * f as f64 * cfg.subcarrier_spacing
                            + PI * p as f64 * c.aod.sin()
                            + PI * q as f64 * c.aoa.sin();
                        h += c.gain * Complex64::from_polar(1.0, phase);
                    }
                    out.push(h);
                }
            }
        }
    }
    out
}

#[test]
fn synthesis_matches_direct_cluster_sum() {
    for cfg in [ChannelConfig::dataset_a(), ChannelConfig::dataset_b()] {
        for i in 0..5 {
            let set = sample_clusters(&cfg, &mut sample_rng(cfg.seed, i));
            let fast = synthesize_csi(&set, &cfg);
            let slow = brute_force(&set, &cfg);
            let err = fast.data().iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "max deviation {err}");
        }
    }
}

/// Asymptotic Kolmogorov survival function.
fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

#[test]
fn doppler_follows_the_arcsine_law() {
    let cfg = ChannelConfig::dataset_a();
    let fd = cfg.max_doppler;
    let mut nu: Vec<f64> = (0..10_000 / cfg.n_clusters + 1)
        .flat_map(|i| sample_clusters(&cfg, &mut sample_rng(77, i)).clusters)
        .map(|c| c.doppler)
        .take(10_000)
        .collect();
    assert!(nu.iter().all(|v| v.abs() <= fd));
    nu.sort_by(f64::total_cmp);
    let n = nu.len();
    let cdf = |v: f64| 0.5 + (v / fd).clamp(-1.0, 1.0).asin() / PI;
    let d = nu
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    let p = kolmogorov_p(d, n);
    assert!(p > 0.01, "KS D={d}, p={p}");

    // The same test rejects a uniform law on [-fd, fd].
    let d_uniform = nu
        .iter()
        .enumerate()
        .map(|(i, &v)| ((v / fd + 1.0) / 2.0 - i as f64 / n as f64).abs())
        .fold(0.0, f64::max);
    assert!(kolmogorov_p(d_uniform, n) < 1e-6);
}

#[test]
fn cluster_powers_normalize_and_mean_power_is_unity() {
    let cfg = ChannelConfig::dataset_a();
    for i in 0..200 {
        let set = sample_clusters(&cfg, &mut sample_rng(3, i));
        assert!((set.total_power() - 1.0).abs() < 1e-12);
        assert_eq!(set.clusters[0].delay, 0.0);
        assert!(set.clusters.windows(2).all(|w| w[0].delay <= w[1].delay));
    }
    let data = generate_dataset(&cfg, 1000, 4).unwrap();
    let mean = data.iter().map(|h| h.mean_power()).sum::<f64>() / data.len() as f64;
    assert!((mean - 1.0).abs() < 0.05, "mean |H|^2 = {mean}");
}

#[test]
fn temporal_spectrum_is_bandlimited_by_max_doppler() {
    // The stored grid has only 12 frames, so the same cluster draws are
    // re-evaluated on a long, finely sampled time axis.
    let cfg = ChannelConfig::dataset_a();
    let n = 1024;
    let fs = 4.0 * cfg.max_doppler;
    let fine = ChannelConfig {
        n_frames: n,
        frame_interval: 1.0 / fs,
        n_subcarriers: 1,
        n_tx: 1,
        n_rx: 1,
        ..cfg.clone()
    };
    let fft = FftPlanner::new().plan_fft_forward(n);
    let hann: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let bin = fs / n as f64;
    let limit = cfg.max_doppler + 2.0 * bin;
    let (mut inside, mut total) = (0.0, 0.0);
    for i in 0..1000 {
        let set = sample_clusters(&cfg, &mut sample_rng(cfg.seed, i));
        let h = synthesize_csi(&set, &fine);
        let mut buf: Vec<Complex64> = h.data().iter().zip(&hann).map(|(x, w)| x * w).collect();
        fft.process(&mut buf);
        for (k, x) in buf.iter().enumerate() {
            let freq = if k < n / 2 { k as f64 } else { k as f64 - n as f64 } * bin;
            let e = x.norm_sqr();
            total += e;
            if freq.abs() <= limit {
                inside += e;
            }
        }
    }
    let frac = inside / total;
    assert!(frac >= 0.99, "spectral mass within +-{limit} Hz: {frac}");
}

#[test]
fn larger_delay_spread_decorrelates_subcarriers() {
    let cfg = ChannelConfig::dataset_a();
    let lag = cfg.n_subcarriers - 1;
    for seed in [1, 2, 3] {
        let mut rows: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let set = sample_clusters(&cfg, &mut sample_rng(seed, i));
                let h = synthesize_csi(&set, &cfg);
                let [nt, _, np, nq] = h.dims();
                let (mut corr, mut power) = (Complex64::new(0.0, 0.0), 0.0);
                for t in 0..nt {
                    for p in 0..np {
                        for q in 0..nq {
                            let a = h.get(t, 0, p, q);
                            let b = h.get(t, lag, p, q);
                            corr += a * b.conj();
                            power += 0.5 * (a.norm_sqr() + b.norm_sqr());
                        }
                    }
                }
                (set.delay_spread, corr.norm() / power)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let means: Vec<f64> = rows
            .chunks(rows.len().div_ceil(3))
            .map(|c| c.iter().map(|r| r.1).sum::<f64>() / c.len() as f64)
            .collect();
        assert!(means.windows(2).all(|w| w[0] > w[1]), "seed {seed}: {means:?}");
    }
}

#[test]
fn generation_is_bit_identical_across_runs_and_thread_counts() {
    let cfg = ChannelConfig::dataset_a();
    let a = encode_dataset(&generate_dataset(&cfg, 64, 11).unwrap()).unwrap();
    let b = encode_dataset(&generate_dataset(&cfg, 64, 11).unwrap()).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let c = pool.install(|| encode_dataset(&generate_dataset(&cfg, 64, 11).unwrap()).unwrap());
    assert_eq!(a, c);
    let other = encode_dataset(&generate_dataset(&cfg, 64, 12).unwrap()).unwrap();
    assert_ne!(a, other);
    let b_data = generate_dataset(&ChannelConfig::dataset_b(), 64, 11).unwrap();
    assert_ne!(a, encode_dataset(&b_data).unwrap());
    assert!(generate_dataset(&cfg, 0, 1).is_err());
}
