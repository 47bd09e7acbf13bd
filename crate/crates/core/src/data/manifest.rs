//! JSON dataset manifests.
//!
//! ```json
//! {
//!   "classes": ["walk", "run"],
//!   "dims": {"s": 32, "t": 32, "G": 16},
//!   "samples": [
//!     {"path": "features/run_000.mcsf", "label": 1, "trimmed": false,
//!      "video_id": "run_000", "signal_segment": {"offset": 5, "length": 4}}
//!   ]
//! }
//! ```
//!
//! Relative sample paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::feature_io::read_feature;
use crate::attention::{FeatureSample, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub s: usize,
    pub t: usize,
    #[serde(rename = "G")]
    pub g: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub path: String,
    pub label: usize,
    pub trimmed: bool,
    pub video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_segment: Option<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub dims: Dims,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    /// Checks label ranges, dims, unique ids and segment bounds.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("manifest has no classes".into()));
        }
        let mut names = HashSet::new();
        for c in &self.classes {
            if !names.insert(c) {
                return Err(Error::Config(format!("duplicate class name {c:?}")));
            }
        }
        if self.dims.s == 0 || self.dims.t == 0 || self.dims.g < 2 {
            return Err(Error::Config(format!("invalid dims {:?}", self.dims)));
        }
        let mut ids = HashSet::new();
        for r in &self.samples {
            if r.label >= self.classes.len() {
                return Err(Error::Index(format!(
                    "sample {} has label {} but there are {} classes",
                    r.video_id,
                    r.label,
                    self.classes.len()
                )));
            }
            if !ids.insert(&r.video_id) {
                return Err(Error::Config(format!(
                    "duplicate video id {:?}",
                    r.video_id
                )));
            }
            if let Some(seg) = r.signal_segment {
                if seg.length == 0 || seg.offset + seg.length > self.dims.g {
                    return Err(Error::Config(format!(
                        "segment of {} outside {} frames",
                        r.video_id, self.dims.g
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Self = serde_json::from_str(text)?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Reads one record's feature file and checks it against the manifest.
    pub fn load_record(&self, base: &Path, record: &SampleRecord) -> Result<FeatureSample> {
        let path = resolve(base, &record.path);
        let mut sample = read_feature(&path)?;
        let (s, g) = sample.spatial.shape();
        let t = sample.temporal.rows();
        if (s, t, g) != (self.dims.s, self.dims.t, self.dims.g) {
            return Err(Error::dim(format!(
                "{} has dims s={s} t={t} G={g}, manifest says s={} t={} G={}",
                path.display(),
                self.dims.s,
                self.dims.t,
                self.dims.g
            )));
        }
        if sample.label != record.label || sample.trimmed != record.trimmed {
            return Err(Error::Config(format!(
                "{} disagrees with its manifest record (label {} vs {}, trimmed {} vs {})",
                path.display(),
                sample.label,
                record.label,
                sample.trimmed,
                record.trimmed
            )));
        }
        sample.video_id = record.video_id.clone();
        sample.signal_segment = record.signal_segment;
        Ok(sample)
    }

    pub fn load_records<'a>(
        &self,
        base: &Path,
        records: impl IntoIterator<Item = &'a SampleRecord>,
    ) -> Result<Vec<FeatureSample>> {
        records
            .into_iter()
            .map(|r| self.load_record(base, r))
            .collect()
    }

    pub fn load_samples(&self, base: &Path) -> Result<Vec<FeatureSample>> {
        self.load_records(base, &self.samples)
    }
}

/// Loads a manifest and every sample it lists.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(DatasetManifest, Vec<FeatureSample>)> {
    let path = path.as_ref();
    let manifest = DatasetManifest::load(path)?;
    let samples = manifest.load_samples(&base_dir(path))?;
    Ok((manifest, samples))
}

pub fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

fn resolve(base: &Path, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
