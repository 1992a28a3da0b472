use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::TaskDomain;
use crate::error::{Error, Result};

/// Token-mixing sub-layer of each encoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixer {
    /// Two-layer MLP across the frame axis.
    Mlp,
    /// Multi-head scaled dot-product self-attention.
    Attention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Number of encoder blocks.
    pub depth: usize,
    pub d_model: usize,
    pub ff_hidden: usize,
    pub mixer: Mixer,
    pub n_heads: usize,
    pub use_positional_encoding: bool,
    pub t_past: usize,
    pub t_future: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub init_seed: u64,
    /// Task the model was built for, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<TaskDomain>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 6,
            d_model: 64,
            ff_hidden: 256,
            mixer: Mixer::Mlp,
            n_heads: 4,
            use_positional_encoding: false,
            t_past: 8,
            t_future: 4,
            d_in: 256,
            d_out: 256,
            init_seed: 0,
            domain: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("ff_hidden", self.ff_hidden),
            ("t_past", self.t_past),
            ("t_future", self.t_future),
            ("d_in", self.d_in),
            ("d_out", self.d_out),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.mixer == Mixer::Attention && (self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads)) {
            return Err(Error::Config(format!(
                "d_model ({}) must be divisible by n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.use_positional_encoding && !self.d_model.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "positional encoding needs an even d_model, got {}",
                self.d_model
            )));
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        Variant::from_switches(self.mixer, self.use_positional_encoding)
    }
}

/// The four ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// MLP mixer, no positional encoding.
    #[serde(rename = "proposed")]
    Proposed,
    /// MLP mixer with positional encoding.
    #[serde(rename = "proposed*")]
    ProposedPe,
    /// Attention mixer, no positional encoding.
    #[serde(rename = "proposed+")]
    ProposedAttn,
    /// Attention mixer with positional encoding.
    #[serde(rename = "proposed+*")]
    ProposedAttnPe,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Proposed,
        Variant::ProposedPe,
        Variant::ProposedAttn,
        Variant::ProposedAttnPe,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::ProposedPe => "proposed*",
            Variant::ProposedAttn => "proposed+",
            Variant::ProposedAttnPe => "proposed+*",
        }
    }

    /// `(mixer, positional encoding)`.
    pub fn switches(self) -> (Mixer, bool) {
        match self {
            Variant::Proposed => (Mixer::Mlp, false),
            Variant::ProposedPe => (Mixer::Mlp, true),
            Variant::ProposedAttn => (Mixer::Attention, false),
            Variant::ProposedAttnPe => (Mixer::Attention, true),
        }
    }

    pub fn from_switches(mixer: Mixer, pe: bool) -> Self {
        match (mixer, pe) {
            (Mixer::Mlp, false) => Variant::Proposed,
            (Mixer::Mlp, true) => Variant::ProposedPe,
            (Mixer::Attention, false) => Variant::ProposedAttn,
            (Mixer::Attention, true) => Variant::ProposedAttnPe,
        }
    }

    /// `cfg` with this variant's switches; everything else untouched.
    pub fn apply(self, cfg: &ModelConfig) -> ModelConfig {
        let (mixer, pe) = self.switches();
        ModelConfig {
            mixer,
            use_positional_encoding: pe,
            ..cfg.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.label() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?} (expected proposed, proposed*, proposed+ or proposed+*)"
                ))
            })
    }
}
