//! Feature files, manifests, synthetic data and split planning.

pub mod feature_io;
pub mod manifest;
pub mod split;
pub mod synth;

pub use feature_io::{decode_feature, encode_feature, read_feature, write_feature};
pub use manifest::{load_dataset, DatasetManifest, Dims, SampleRecord};
pub use split::{
    materialize_split, plan_split, Assigned, Bucket, SplitCounts, SplitMode, SplitPlan,
};
pub use synth::{generate_samples, generate_synthetic, Prototypes, SynthSpec};
