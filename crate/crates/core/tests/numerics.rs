use chanex_core::extrapolator::{forward_on_tape, Mixer, ModelConfig, ModelParams};
use chanex_core::numerics::{grad_check, grad_check_multi, Tape, Tensor, Var};
use chanex_core::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces `v` to a scalar through fixed random weights so no gradient vanishes by symmetry.
fn probe(tape: &mut Tape<f64>, v: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = random(&mut rng, tape.shape(v));
    let w = tape.constant(w);
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn shape_for(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(1..5), rng.random_range(2..6), rng.random_range(2..7))
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&mut rng, &[5, 7]);
    let b = random(&mut rng, &[7, 3]);
    let mut tape = Tape::new();
    let (av, bv) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let c = tape.matmul(av, bv).unwrap();
    for i in 0..5 {
        for j in 0..3 {
            let mut s = 0.0;
            for l in 0..7 {
                s += a.data()[i * 7 + l] * b.data()[l * 3 + j];
            }
            assert!((tape.value(c).data()[i * 3 + j] - s).abs() < 1e-12);
        }
    }
}

#[test]
fn bmm_matches_per_batch_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&mut rng, &[3, 4, 5]);
    let b = random(&mut rng, &[3, 5, 2]);
    let mut tape = Tape::new();
    let (av, bv) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let c = tape.bmm(av, bv).unwrap();
    for n in 0..3 {
        for i in 0..4 {
            for j in 0..2 {
                let s: f64 = (0..5).map(|l| a.data()[n * 20 + i * 5 + l] * b.data()[n * 10 + l * 2 + j]).sum();
                assert!((tape.value(c).data()[n * 8 + i * 2 + j] - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn mse_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random(&mut rng, &[4, 9]);
    let t = random(&mut rng, &[4, 9]);
    let mut naive = 0.0;
    for i in 0..36 {
        naive += (p.data()[i] - t.data()[i]).powi(2);
    }
    naive /= 36.0;
    let mut tape = Tape::new();
    let (pv, tv) = (tape.constant(p), tape.constant(t));
    let l = tape.mse_loss(pv, tv).unwrap();
    assert!((tape.value(l).item() - naive).abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for axis in 0..3 {
        let x = random(&mut rng, &[3, 4, 5]).map(|v| v * 20.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let y = tape.softmax(xv, axis).unwrap();
        let v = tape.value(y).data();
        let shape = [3, 4, 5];
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        for o in 0..outer {
            for i in 0..stride {
                let s: f64 = (0..shape[axis]).map(|j| v[o * shape[axis] * stride + j * stride + i]).sum();
                assert!((s - 1.0).abs() < 1e-12, "{s}");
            }
        }
    }
}

#[test]
fn layer_norm_output_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, &[6, 32]).map(|v| 3.0 * v + 1.5);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let g = tape.constant(Tensor::ones(&[32]));
    let b = tape.constant(Tensor::zeros(&[32]));
    let y = tape.layer_norm(xv, g, b, 1e-5).unwrap();
    for row in tape.value(y).data().chunks(32) {
        let mean = row.iter().sum::<f64>() / 32.0;
        let std = (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0).sqrt();
        assert!(mean.abs() < 1e-6);
        assert!((std - 1.0).abs() < 1e-3, "{std}");
    }
}

#[test]
fn elementwise_and_view_gradients() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, m, n) = shape_for(&mut rng);
        let x = random(&mut rng, &[b, m, n]);
        let y = random(&mut rng, &[b, m, n]);
        let row = random(&mut rng, &[n]);
        let k = random(&mut rng, &[n, 3]);

        let checks: Vec<(&str, f64)> = vec![
            (
                "add/mul",
                grad_check_multi(
                    |t, v| {
                        let s = t.add(v[0], v[1])?;
                        let p = t.mul(s, v[0])?;
                        probe(t, p, seed)
                    },
                    &[x.clone(), y.clone()],
                    H,
                )
                .unwrap(),
            ),
            (
                "add_broadcast/scale",
                grad_check_multi(
                    |t, v| {
                        let s = t.add_broadcast(v[0], v[1])?;
                        let s = t.scale(s, -1.7);
                        probe(t, s, seed)
                    },
                    &[x.clone(), row.clone()],
                    H,
                )
                .unwrap(),
            ),
            (
                "gelu",
                grad_check(|t, v| {
                    let g = t.gelu(v);
                    probe(t, g, seed)
                }, &x.map(|v| 3.0 * v), H)
                .unwrap(),
            ),
            (
                "softmax",
                grad_check(
                    |t, v| {
                        let s = t.softmax(v, 1)?;
                        probe(t, s, seed)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "permute/reshape",
                grad_check(
                    |t, v| {
                        let p = t.permute(v, &[2, 0, 1])?;
                        let r = t.reshape(p, &[n * b, m])?;
                        let r = t.transpose(r)?;
                        probe(t, r, seed)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "slice/concat",
                grad_check(
                    |t, v| {
                        let a = t.slice(v, 2, 1, n - 1)?;
                        let c = t.slice(v, 2, 0, 1)?;
                        let j = t.concat(&[a, c, a], 2)?;
                        probe(t, j, seed)
                    },
                    &x,
                    H,
                )
                .unwrap(),
            ),
            (
                "matmul",
                grad_check_multi(
                    |t, v| {
                        let flat = t.reshape(v[0], &[b * m, n])?;
                        let p = t.matmul(flat, v[1])?;
                        probe(t, p, seed)
                    },
                    &[x.clone(), k.clone()],
                    H,
                )
                .unwrap(),
            ),
            (
                "bmm",
                grad_check_multi(
                    |t, v| {
                        let yt = t.transpose(v[1])?;
                        let p = t.bmm(v[0], yt)?;
                        probe(t, p, seed)
                    },
                    &[x.clone(), y.clone()],
                    H,
                )
                .unwrap(),
            ),
            (
                "mse",
                grad_check_multi(|t, v| t.mse_loss(v[0], v[1]), &[x.clone(), y.clone()], H).unwrap(),
            ),
        ];
        for (name, err) in checks {
            assert!(err < TOL, "{name} seed {seed}: {err}");
        }
    }
}

#[test]
fn layer_norm_composed_with_matmul_gradient() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random(&mut rng, &[4, 5]);
        let w = random(&mut rng, &[5, 6]);
        let g = random(&mut rng, &[6]);
        let b = random(&mut rng, &[6]);
        let err = grad_check_multi(
            |t, v| {
                let z = t.matmul(v[0], v[1])?;
                let n = t.layer_norm(z, v[2], v[3], 1e-5)?;
                probe(t, n, seed)
            },
            &[x, w, g, b],
            H,
        )
        .unwrap();
        assert!(err < TOL, "seed {seed}: {err}");
    }
}

#[test]
fn reused_parameter_accumulates_both_paths() {
    // f(w) = sum(w·x) + sum(gelu(w)) uses w twice.
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let x = random(&mut rng, &[3, 3]);
        let w = random(&mut rng, &[3, 3]);
        let f = |t: &mut Tape<f64>, w: Var| {
            let xv = t.constant(x.clone());
            let a = t.matmul(w, xv)?;
            let a = probe(t, a, seed)?;
            let g = t.gelu(w);
            let g = probe(t, g, seed + 1)?;
            let both = t.concat(&[a, g], 0)?;
            Ok(t.sum(both))
        };
        assert!(grad_check(f, &w, H).unwrap() < TOL);
    }
}

fn tiny_config(mixer: Mixer, pe: bool, seed: u64) -> ModelConfig {
    ModelConfig {
        depth: 2,
        d_model: 8,
        ff_hidden: 32,
        mixer,
        n_heads: 2,
        use_positional_encoding: pe,
        t_past: 4,
        t_future: 2,
        d_in: 6,
        d_out: 6,
        init_seed: seed,
        domain: None,
    }
}

#[test]
fn full_model_gradient_matches_central_differences() {
    for seed in 0..10u64 {
        for (mixer, pe) in [(Mixer::Mlp, false), (Mixer::Attention, true)] {
            let cfg = tiny_config(mixer, pe, seed);
            let params = ModelParams::<f64>::init(&cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let x = random(&mut rng, &[2, 4, 6]);
            let y = random(&mut rng, &[2, 2, 6]);
            let mut inputs = params.tensors.clone();
            inputs.push(x);
            let err = grad_check_multi(
                |t, v| {
                    let (p, x) = v.split_at(v.len() - 1);
                    let out = forward_on_tape(t, &cfg, p, x[0])?;
                    let target = t.constant(y.clone());
                    t.mse_loss(out, target)
                },
                &inputs,
                H,
            )
            .unwrap();
            assert!(err < TOL, "{mixer:?} pe={pe} seed {seed}: {err}");
        }
    }
}

proptest! {
    #[test]
    fn transpose_is_an_involution(b in 1usize..4, m in 1usize..6, n in 1usize..6, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[b, m, n]);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let t1 = tape.transpose(xv).unwrap();
        let t2 = tape.transpose(t1).unwrap();
        prop_assert_eq!(tape.value(t2), &x);
    }

    #[test]
    fn ops_are_deterministic(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[3, 4]);
        let w = random(&mut rng, &[4, 4]);
        let run = || {
            let mut tape = Tape::new();
            let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
            let z = tape.matmul(xv, wv).unwrap();
            let z = tape.gelu(z);
            let z = tape.softmax(z, 1).unwrap();
            tape.value(z).clone()
        };
        prop_assert_eq!(run(), run());
    }
}
