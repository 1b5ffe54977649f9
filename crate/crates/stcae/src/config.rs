//! Run configuration: a TOML file whose values can be overridden from the
//! command line. The resolved configuration is written next to every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stcae_core::arch::Variant;
use stcae_core::train::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub root: Option<PathBuf>,
    pub expect_filled: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Training defaults to DSTCAE-C3D; evaluation takes the checkpoint's.
    pub variant: Option<String>,
}

/// Unset fields fall back to the per-variant defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub augment: Option<bool>,
    pub seed: Option<u64>,
    pub rho: Option<f32>,
    pub epsilon: Option<f32>,
    pub learning_rate: Option<f32>,
    pub checkpoint_interval: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScoreContext {
    Cross,
    Within,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScoreStat {
    Mu,
    Sigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub score: ScoreContext,
    pub stat: ScoreStat,
    pub alpha: Option<usize>,
    pub alpha_sweep: bool,
    pub batch_size: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            score: ScoreContext::Cross,
            stat: ScoreStat::Sigma,
            alpha: None,
            alpha_sweep: false,
            batch_size: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn variant(&self) -> Result<Variant, ConfigError> {
        match &self.model.variant {
            Some(v) => v.parse().map_err(|e: stcae_core::Error| ConfigError::Invalid(e.to_string())),
            None => Ok(Variant::DstcaeC3d),
        }
    }

    /// Training settings with unset fields taken from the variant defaults.
    pub fn train_config(&self) -> Result<TrainConfig, ConfigError> {
        let mut cfg = TrainConfig::for_variant(self.variant()?);
        let t = &self.train;
        if let Some(v) = t.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = t.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = t.augment {
            cfg.augment = v;
        }
        if let Some(v) = t.seed {
            cfg.seed = v;
        }
        if let Some(v) = t.rho {
            cfg.optimizer.rho = v;
        }
        if let Some(v) = t.epsilon {
            cfg.optimizer.epsilon = v;
        }
        if let Some(v) = t.learning_rate {
            cfg.optimizer.learning_rate = v;
        }
        cfg.checkpoint_interval = t.checkpoint_interval;
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Fills every training field with its effective value so the echoed
    /// file is self-contained.
    pub fn resolve_train(&mut self) -> Result<(), ConfigError> {
        let cfg = self.train_config()?;
        self.train = TrainSection {
            epochs: Some(cfg.epochs),
            batch_size: Some(cfg.batch_size),
            augment: Some(cfg.augment),
            seed: Some(cfg.seed),
            rho: Some(cfg.optimizer.rho),
            epsilon: Some(cfg.optimizer.epsilon),
            learning_rate: Some(cfg.optimizer.learning_rate),
            checkpoint_interval: cfg.checkpoint_interval,
        };
        Ok(())
    }

    pub fn data_root(&self) -> Result<&Path, ConfigError> {
        self.data
            .root
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("no dataset root given (--data or [data] root)".into()))
    }

    pub fn output_dir(&self) -> Result<&Path, ConfigError> {
        self.output
            .dir
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("no output directory given (--out or [output] dir)".into()))
    }
}
