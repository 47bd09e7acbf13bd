//! Self-describing JSON model files.
//!
//! ```json
//! {
//!   "format": "mcsa-model",
//!   "version": 1,
//!   "config": {"s": 32, "t": 32, "G": 16, "k": 5, "a": 64, "b": 64, "leaky_slope": 0.01},
//!   "classes": ["class_00", "..."],
//!   "parameters": { "config": {...}, "spatial_channels": [{"W": [[...]], "u": [[...]], ...}], ... }
//! }
//! ```
//!
//! Values are written with full `f64` round-trip precision, so saving and
//! reloading a model is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{StreamConfig, StreamModel};

pub const FORMAT: &str = "mcsa-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub s: usize,
    pub t: usize,
    #[serde(rename = "G")]
    pub g: usize,
    pub k: usize,
    pub a: usize,
    pub b: usize,
    pub leaky_slope: f64,
}

impl From<StreamConfig> for ModelDims {
    fn from(c: StreamConfig) -> Self {
        Self {
            s: c.spatial_dim,
            t: c.temporal_dim,
            g: c.frames,
            k: c.classes,
            a: c.spatial_hidden,
            b: c.temporal_hidden,
            leaky_slope: c.leaky_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config: ModelDims,
    pub classes: Vec<String>,
    pub parameters: StreamModel,
}

impl ModelFile {
    pub fn new(model: StreamModel, classes: Vec<String>) -> Result<Self> {
        let file = Self {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            config: model.config.into(),
            classes,
            parameters: model,
        };
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::format(
                0,
                format!("not a model file: format {:?}", self.format),
            ));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::format(
                0,
                format!("unsupported model version {}", self.version),
            ));
        }
        if self.config != ModelDims::from(self.parameters.config) {
            return Err(Error::Config(
                "model header disagrees with its parameters".into(),
            ));
        }
        if self.classes.len() != self.config.k {
            return Err(Error::Config(format!(
                "{} class names for a {}-class model",
                self.classes.len(),
                self.config.k
            )));
        }
        self.parameters.validate()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        file.validate()?;
        Ok(file)
    }
}

pub fn save_model(path: impl AsRef<Path>, model: &StreamModel, classes: &[String]) -> Result<()> {
    let file = ModelFile::new(model.clone(), classes.to_vec())?;
    fs::write(path, file.to_json()?)?;
    Ok(())
}

/// Returns the parameters and the class names.
pub fn load_model(path: impl AsRef<Path>) -> Result<(StreamModel, Vec<String>)> {
    let file = ModelFile::from_json(&fs::read_to_string(path)?)?;
    Ok((file.parameters, file.classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> StreamModel {
        let config = StreamConfig::new(3, 2, 4, 3).with_hidden(2, 2);
        StreamModel::random(config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn lossless_round_trip() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let file = ModelFile::new(model(), names.clone()).unwrap();
        let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(back.parameters.flatten(), model().flatten());
        assert_eq!(back.classes, names);
        let v: serde_json::Value = serde_json::from_str(&file.to_json().unwrap()).unwrap();
        assert_eq!(v["config"]["G"], 4);
        assert_eq!(v["version"], 1);
    }

    #[test]
    fn rejects_mismatches() {
        assert!(ModelFile::new(model(), vec!["a".into()]).is_err());
        let mut file = ModelFile::new(model(), vec!["a".into(), "b".into(), "c".into()]).unwrap();
        file.version = 9;
        assert!(matches!(
            ModelFile::from_json(&file.to_json().unwrap()),
            Err(Error::Format { .. })
        ));
    }
}
