//! Encoder-only channel extrapolator and its ablation variants.

mod checkpoint;
mod config;
mod model;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{Mixer, ModelConfig, Variant};
pub use model::{forward_on_tape, load_params, multi_head_attention, positional_encoding, token_mix_mlp, AttentionVars};
pub use params::{count_params, param_specs, ModelParams, ParamCount, ParamKind, ParamSpec};
