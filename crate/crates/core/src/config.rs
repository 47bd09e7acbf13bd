//! Flat key/value run configuration with layered overrides.
//!
//! A config file is a flat TOML document such as
//!
//! ```toml
//! learning_rate = 0.3
//! max_iterations = 2000
//! spatial_hidden = 16
//! ```
//!
//! Values resolve as command-line flag, then file, then built-in default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::StreamConfig;
use crate::trainer::TrainConfig;
use crate::transfer::KernelSpec;

/// Every optional training setting. `None` means "not given at this layer".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub lr_decay_every: Option<usize>,
    pub lr_decay_factor: Option<f64>,
    pub lambda_mmd: Option<f64>,
    pub lambda_reg: Option<f64>,
    pub lambda_ce: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_iterations: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub init_from_snapshot: Option<bool>,
    /// Fixed base bandwidth for the MMD kernel; absent means the median heuristic.
    pub kernel_bandwidth: Option<f64>,
    pub spatial_hidden: Option<usize>,
    pub temporal_hidden: Option<usize>,
}

macro_rules! layer {
    ($hi:expr, $lo:expr, $($field:ident),*) => {
        Overrides { $($field: $hi.$field.or($lo.$field)),* }
    };
}

impl Overrides {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Values in `self` win over values in `lower`.
    pub fn over(&self, lower: &Overrides) -> Overrides {
        layer!(
            self,
            lower,
            learning_rate,
            weight_decay,
            lr_decay_every,
            lr_decay_factor,
            lambda_mmd,
            lambda_reg,
            lambda_ce,
            batch_size,
            max_iterations,
            seed,
            jobs,
            init_from_snapshot,
            kernel_bandwidth,
            spatial_hidden,
            temporal_hidden
        )
    }

    pub fn train_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            weight_decay: self.weight_decay.unwrap_or(base.weight_decay),
            lr_decay_every: self.lr_decay_every.unwrap_or(base.lr_decay_every),
            lr_decay_factor: self.lr_decay_factor.unwrap_or(base.lr_decay_factor),
            lambda_mmd: self.lambda_mmd.unwrap_or(base.lambda_mmd),
            lambda_reg: self.lambda_reg.unwrap_or(base.lambda_reg),
            lambda_ce: self.lambda_ce.unwrap_or(base.lambda_ce),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            seed: self.seed.unwrap_or(base.seed),
            jobs: self.jobs.unwrap_or(base.jobs),
            init_from_snapshot: self.init_from_snapshot.unwrap_or(base.init_from_snapshot),
            kernel: match self.kernel_bandwidth {
                Some(sigma) => KernelSpec::default().with_fixed_base(sigma),
                None => base.kernel.clone(),
            },
        }
    }

    pub fn stream_config(&self, base: StreamConfig) -> StreamConfig {
        base.with_hidden(
            self.spatial_hidden.unwrap_or(base.spatial_hidden),
            self.temporal_hidden.unwrap_or(base.temporal_hidden),
        )
    }
}
