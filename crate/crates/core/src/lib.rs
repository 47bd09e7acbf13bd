//! Two-stream multi-channel self-attention over precomputed frame features,
//! with kernel-MMD transfer from a trimmed-video stream to an untrimmed-video
//! stream.
//!
//! Each stream reads an `s × G` appearance matrix and a `t × (G−1)` motion
//! matrix per video, weights frames with three attention channels per
//! matrix, classifies each attended matrix separately and fuses the six class
//! distributions with learned weights. Training runs in two phases:
//!
//! 1. [`trainer::train_lower`] fits the lower stream on trimmed videos with
//!    cross-entropy.
//! 2. [`transfer::snapshot`] freezes its classifier parameters, and
//!    [`trainer::train_upper`] fits the upper stream on untrimmed videos with
//!    cross-entropy, an MMD penalty toward the snapshot and an attention
//!    smoothness penalty.
//!
//! ```no_run
//! use mcsa::data::{generate_samples, SynthSpec};
//! use mcsa::stream::StreamConfig;
//! use mcsa::trainer::{evaluate, train_lower, TrainConfig};
//!
//! let spec = SynthSpec { classes: 3, videos_per_class: 20, ..SynthSpec::default() };
//! let data = generate_samples(&spec)?;
//! let config = TrainConfig { learning_rate: 0.5, max_iterations: 500, ..TrainConfig::default() };
//! let (model, report) = train_lower(StreamConfig::new(32, 32, 16, 3), &data, &[], &config)?;
//! println!("train accuracy {}", evaluate(&model, &data)?);
//! # Ok::<(), mcsa::Error>(())
//! ```

pub mod attention;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model_io;
pub mod numeric;
pub mod regularizer;
pub mod stream;
pub mod trainer;
pub mod transfer;

pub use attention::{AttentionVector, FeatureSample, Segment};
pub use error::{Error, Result};
pub use numeric::{Activation, Matrix};
pub use stream::{forward, predict, StreamConfig, StreamModel};
pub use trainer::{evaluate, train_lower, train_upper, TrainConfig, TrainReport};
pub use transfer::{snapshot, KernelSpec, TransferSnapshot};
