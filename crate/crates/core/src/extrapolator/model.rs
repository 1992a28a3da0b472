//! Forward pass of the encoder-only extrapolator.
//!
//! Frames are tokens. Each block is post-norm:
//! `u = LN(h + mix(h)); h' = LN(u + FF(u))`. After the stack a linear map
//! across the token axis turns `t_past` tokens into `t_future` tokens and a
//! per-token head projects back to the CSI feature width.

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Tape, Tensor, Var, LN_EPS};

use super::{Mixer, ModelConfig, ModelParams};

/// Sinusoidal encoding, `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(..)`.
pub fn positional_encoding<T: Scalar>(t_past: usize, d_model: usize) -> Result<Tensor<T>> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::Config(format!("positional encoding needs an even d_model, got {d_model}")));
    }
    let mut data = Vec::with_capacity(t_past * d_model);
    for pos in 0..t_past {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf((2 * i) as f64 / d_model as f64);
            data.push(T::from_f64(angle.sin()));
            data.push(T::from_f64(angle.cos()));
        }
    }
    Tensor::new(&[t_past, d_model], data)
}

/// `x · w + b` over the last axis of a tensor of any rank.
fn linear<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let d_in = *shape.last().expect("rank >= 1");
    let rows = shape.iter().product::<usize>() / d_in;
    let flat = tape.reshape(x, &[rows, d_in])?;
    let y = tape.matmul(flat, w)?;
    let y = tape.add_broadcast(y, b)?;
    let mut out_shape = shape;
    *out_shape.last_mut().expect("rank >= 1") = tape.shape(w)[1];
    tape.reshape(y, &out_shape)
}

/// Applies `f` along the token axis of `[B, T, d]` by working on `[B, d, T]`.
fn along_tokens<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    f: impl FnOnce(&mut Tape<T>, Var) -> Result<Var>,
) -> Result<Var> {
    let ht = tape.transpose(h)?;
    let mixed = f(tape, ht)?;
    tape.transpose(mixed)
}

/// MLP across the frame axis of `[B, t_past, d_model]`
/// (`t_past → 2·t_past → t_past`, GELU between), before the residual add.
pub fn token_mix_mlp<T: Scalar>(tape: &mut Tape<T>, h: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let t = tape.shape(h).get(1).copied().unwrap_or(0);
    if tape.shape(h).len() != 3 || tape.shape(w1)[0] != t || tape.shape(w2)[1] != t {
        return Err(Error::shape("token_mix_mlp", tape.shape(h), tape.shape(w1)));
    }
    along_tokens(tape, h, |tape, ht| {
        let z = linear(tape, ht, w1, b1)?;
        let z = tape.gelu(z);
        linear(tape, z, w2, b2)
    })
}

/// Projections for one attention mixer: `[wq, bq, wk, bk, wv, bv, wo, bo]`.
pub struct AttentionVars<'a>(pub &'a [Var]);

/// Unmasked multi-head self-attention over `[B, T, d_model]`.
///
/// Returns the output (before the residual add) and the attention weights
/// `[B·n_heads, T, T]`.
pub fn multi_head_attention<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    proj: AttentionVars<'_>,
    n_heads: usize,
) -> Result<(Var, Var)> {
    let shape = tape.shape(h).to_vec();
    if shape.len() != 3 || proj.0.len() != 8 {
        return Err(Error::shape("multi_head_attention", &shape, &[proj.0.len()]));
    }
    let (b, t, d) = (shape[0], shape[1], shape[2]);
    if n_heads == 0 || d % n_heads != 0 {
        return Err(Error::Config(format!("d_model ({d}) must be divisible by n_heads ({n_heads})")));
    }
    let dh = d / n_heads;
    let p = proj.0;
    let heads = |tape: &mut Tape<T>, w: Var, bias: Var| -> Result<Var> {
        let z = linear(tape, h, w, bias)?;
        let z = tape.reshape(z, &[b, t, n_heads, dh])?;
        let z = tape.permute(z, &[0, 2, 1, 3])?;
        tape.reshape(z, &[b * n_heads, t, dh])
    };
    let q = heads(tape, p[0], p[1])?;
    let k = heads(tape, p[2], p[3])?;
    let v = heads(tape, p[4], p[5])?;
    let kt = tape.transpose(k)?;
    let scores = tape.bmm(q, kt)?;
    let scores = tape.scale(scores, T::from_f64(1.0 / (dh as f64).sqrt()));
    let weights = tape.softmax(scores, 2)?;
    let ctx = tape.bmm(weights, v)?;
    let ctx = tape.reshape(ctx, &[b, n_heads, t, dh])?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &[b, t, d])?;
    Ok((linear(tape, ctx, p[6], p[7])?, weights))
}

/// Records every parameter as a trainable leaf, in declaration order.
pub fn load_params<T: Scalar>(tape: &mut Tape<T>, params: &ModelParams<T>) -> Vec<Var> {
    params.tensors.iter().map(|t| tape.param(t.clone())).collect()
}

/// Records the forward pass of `x: [B, t_past, d_in]`, returning `[B, t_future, d_out]`.
pub fn forward_on_tape<T: Scalar>(tape: &mut Tape<T>, cfg: &ModelConfig, params: &[Var], x: Var) -> Result<Var> {
    let xs = tape.shape(x);
    if xs.len() != 3 || xs[1] != cfg.t_past || xs[2] != cfg.d_in {
        return Err(Error::shape("forward", xs, &[0, cfg.t_past, cfg.d_in]));
    }
    let mut next = params.iter().copied();
    let mut take = |n: usize| -> Result<Vec<Var>> {
        let vars: Vec<Var> = next.by_ref().take(n).collect();
        if vars.len() == n {
            Ok(vars)
        } else {
            Err(Error::Format("parameter list shorter than the model config".into()))
        }
    };

    let e = take(2)?;
    let mut h = linear(tape, x, e[0], e[1])?;
    if cfg.use_positional_encoding {
        let pe = tape.constant(positional_encoding(cfg.t_past, cfg.d_model)?);
        h = tape.add_broadcast(h, pe)?;
    }
    for _ in 0..cfg.depth {
        let mixed = match cfg.mixer {
            Mixer::Mlp => {
                let m = take(4)?;
                token_mix_mlp(tape, h, m[0], m[1], m[2], m[3])?
            }
            Mixer::Attention => multi_head_attention(tape, h, AttentionVars(&take(8)?), cfg.n_heads)?.0,
        };
        let ln1 = take(2)?;
        let res = tape.add(h, mixed)?;
        let u = tape.layer_norm(res, ln1[0], ln1[1], LN_EPS)?;
        let ff = take(4)?;
        let z = linear(tape, u, ff[0], ff[1])?;
        let z = tape.gelu(z);
        let z = linear(tape, z, ff[2], ff[3])?;
        let ln2 = take(2)?;
        let res = tape.add(u, z)?;
        h = tape.layer_norm(res, ln2[0], ln2[1], LN_EPS)?;
    }
    let tp = take(2)?;
    let h = along_tokens(tape, h, |tape, ht| linear(tape, ht, tp[0], tp[1]))?;
    let hd = take(2)?;
    linear(tape, h, hd[0], hd[1])
}

impl<T: Scalar> ModelParams<T> {
    /// Inference-only forward of `x: [B, t_past, d_in]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.tensors.iter().map(|t| tape.constant(t.clone())).collect();
        let xv = tape.constant(x.clone());
        let out = forward_on_tape(&mut tape, &self.config, &vars, xv)?;
        let out = tape.value(out).clone();
        out.check_finite("forward output")?;
        Ok(out)
    }
}
