//! Experiment configuration: one JSON document resolving every setting a
//! command needs. Unknown keys are rejected and the fully materialized form
//! is written next to every artifact.

use std::path::{Path, PathBuf};

use chanex_core::channelgen::{ChannelConfig, DatasetId};
use chanex_core::dataio::{TaskDomain, TaskSpec};
use chanex_core::extrapolator::{ModelConfig, Variant};
use chanex_core::trainer::TrainConfig;
use chanex_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub a: ChannelConfig,
    pub b: ChannelConfig,
    /// Realizations per generated dataset.
    pub n_samples: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            a: ChannelConfig::dataset_a(),
            b: ChannelConfig::dataset_b(),
            n_samples: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSection {
    pub domain: TaskDomain,
    pub t_past: usize,
    pub t_future: usize,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            domain: TaskDomain::Time,
            t_past: 8,
            t_future: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub batch_size: usize,
    /// Seconds of timed inference per throughput measurement.
    pub duration: f64,
    pub warmup_batches: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            batch_size: 64,
            duration: 5.0,
            warmup_batches: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data_dir: PathBuf,
    pub run_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            run_dir: "runs".into(),
            report_dir: "reports".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub channel: ChannelSection,
    pub task: TaskSection,
    /// Shape fields (`t_past`, `t_future`, `d_in`, `d_out`, `domain`) are
    /// derived from `task` and the dataset-A grid during resolution.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub paths: PathsSection,
    /// Experiment seed: drives the train/val/test split.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = Self {
            channel: ChannelSection::default(),
            task: TaskSection::default(),
            model: ModelConfig::default(),
            train: TrainConfig::desk_scale(),
            eval: EvalSection::default(),
            paths: PathsSection::default(),
            seed: 0,
        };
        cfg.resolve().expect("defaults are valid");
        cfg
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Loads `path` when given, otherwise starts from defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn channel(&self, id: DatasetId) -> &ChannelConfig {
        match id {
            DatasetId::A => &self.channel.a,
            DatasetId::B => &self.channel.b,
        }
    }

    pub fn spec(&self) -> TaskSpec {
        let a = &self.channel.a;
        TaskSpec::new(self.task.domain, self.task.t_past, self.task.t_future, a.n_subcarriers, a.n_tx)
    }

    /// Fills derived model fields and checks every section.
    pub fn resolve(&mut self) -> Result<()> {
        self.channel.a.validate()?;
        self.channel.b.validate()?;
        if self.channel.a.grid()[1..] != self.channel.b.grid()[1..] {
            return Err(Error::Config("datasets A and B must share subcarrier and antenna counts".into()));
        }
        if self.channel.n_samples == 0 {
            return Err(Error::Config("channel.n_samples must be >= 1".into()));
        }
        let grid = self.channel.a.grid();
        let spec = self.spec();
        spec.validate(grid)?;
        spec.validate(self.channel.b.grid())?;
        self.model.t_past = spec.t_past;
        self.model.t_future = spec.t_future;
        self.model.d_in = spec.d_in(grid[3]);
        self.model.d_out = TaskSpec::d_out(grid);
        self.model.domain = Some(spec.domain);
        self.model.validate()?;
        self.train.validate()?;
        if self.eval.batch_size == 0 {
            return Err(Error::Config("eval.batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_task(&self, domain: TaskDomain) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.task.domain = domain;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.model = variant.apply(&cfg.model);
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Uses `seed` for the split, the shuffle and the initialization.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg.model.init_seed = seed;
        cfg
    }

    pub fn dataset_path(&self, id: DatasetId) -> PathBuf {
        self.paths.data_dir.join(format!("{}.csi", id.label()))
    }

    pub fn run_path(&self) -> PathBuf {
        self.paths.run_dir.join(format!(
            "{}_{}_seed{}",
            self.task.domain,
            self.model.variant().label().replace('*', "pe").replace('+', "attn"),
            self.seed
        ))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
