//! Multi-domain MIMO channel extrapolation.
//!
//! Synthesizes cluster-based CSI datasets, trains an encoder-only model whose
//! token mixer is an MLP across frames (no positional encoding), and scores
//! predictions with SGCS and NMSE against a repeat-last-frame baseline.

pub mod error;
pub mod channelgen;
pub mod dataio;
pub mod extrapolator;
pub mod metrics;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
