//! Synthetic two-stream feature generator.
//!
//! Each class owns a unit spatial prototype `p_c` and a unit temporal
//! prototype `q_c`, orthonormalized across classes whenever the feature size
//! allows. A signal frame is `snr · prototype + N(0, I)`, a background frame is
//! `N(0, I)`. Trimmed videos are signal everywhere; untrimmed videos carry the
//! signal in one contiguous segment of `⌈ρ·G⌉` frames at a random offset and
//! record that segment as ground truth.
//!
//! Temporal step `n` (between frames `n` and `n + 1`) is signal exactly when
//! frame `n` is.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::feature_io::{quantize, write_feature};
use super::manifest::{DatasetManifest, Dims, SampleRecord};
use crate::attention::{FeatureSample, Segment};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub videos_per_class: usize,
    pub s: usize,
    pub t: usize,
    #[serde(rename = "G")]
    pub g: usize,
    pub snr: f64,
    /// Fraction ρ of frames that carry the class signal in untrimmed videos.
    pub signal_fraction: f64,
    pub trimmed: bool,
    /// Seed for the noise and segment placement.
    pub seed: u64,
    /// Seed for the class prototypes; datasets sharing it share classes.
    pub prototype_seed: u64,
    /// Prefix for video ids and file names.
    pub prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            videos_per_class: 50,
            s: 32,
            t: 32,
            g: 16,
            snr: 2.0,
            signal_fraction: 1.0,
            trimmed: true,
            seed: 0,
            prototype_seed: 0,
            prefix: String::new(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.s == 0 || self.t == 0 {
            return Err(Error::Config("classes, s and t must be positive".into()));
        }
        if self.g < 2 {
            return Err(Error::Config(format!(
                "G must be at least 2, got {}",
                self.g
            )));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!(
                "snr must be non-negative, got {}",
                self.snr
            )));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "signal fraction must be in (0, 1], got {}",
                self.signal_fraction
            )));
        }
        Ok(())
    }

    /// Frames per signal segment: all of them when trimmed, else `⌈ρ·G⌉`.
    pub fn segment_length(&self) -> usize {
        if self.trimmed {
            self.g
        } else {
            // guard against ρ·G landing a hair above an integer
            ((self.signal_fraction * self.g as f64 - 1e-9).ceil() as usize).clamp(1, self.g)
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes).map(|c| format!("class_{c:02}")).collect()
    }
}

/// Unit prototypes per class, one per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub spatial: Vec<Vec<f64>>,
    pub temporal: Vec<Vec<f64>>,
}

impl Prototypes {
    pub fn new(classes: usize, s: usize, t: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spatial = unit_vectors(classes, s, &mut rng);
        let temporal = unit_vectors(classes, t, &mut rng);
        Self { spatial, temporal }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-8 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

fn unit_vectors(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if out.len() < dim {
            for u in &out {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
            }
        }
        if normalize(&mut v) {
            out.push(v);
        }
    }
    out
}

fn stream_matrix(
    rows: usize,
    cols: usize,
    prototype: &[f64],
    snr: f64,
    is_signal: impl Fn(usize) -> bool,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    let mut data = vec![0.0; rows * cols];
    for c in 0..cols {
        let signal = is_signal(c);
        for r in 0..rows {
            let noise: f64 = rng.sample(StandardNormal);
            data[r * cols + c] = if signal {
                snr * prototype[r] + noise
            } else {
                noise
            };
        }
    }
    Matrix::new(rows, cols, data)
}

/// Generates the samples in memory, already rounded to single precision so
/// they equal what a file round trip yields. Ordered class by class.
pub fn generate_samples(spec: &SynthSpec) -> Result<Vec<FeatureSample>> {
    spec.validate()?;
    let protos = Prototypes::new(spec.classes, spec.s, spec.t, spec.prototype_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let length = spec.segment_length();
    let mut out = Vec::with_capacity(spec.classes * spec.videos_per_class);
    for c in 0..spec.classes {
        for i in 0..spec.videos_per_class {
            let offset = if length < spec.g {
                rng.random_range(0..=spec.g - length)
            } else {
                0
            };
            let seg = Segment { offset, length };
            let spatial = stream_matrix(
                spec.s,
                spec.g,
                &protos.spatial[c],
                spec.snr,
                |f| seg.contains(f),
                &mut rng,
            )?;
            let temporal = stream_matrix(
                spec.t,
                spec.g - 1,
                &protos.temporal[c],
                spec.snr,
                |f| seg.contains(f),
                &mut rng,
            )?;
            let id = format!("{}{}_{i:04}", spec.prefix, spec.class_names()[c]);
            let mut sample = FeatureSample::new(spatial, temporal, c, spec.trimmed, id)?;
            if !spec.trimmed {
                sample = sample.with_segment(seg);
            }
            quantize(&mut sample);
            out.push(sample);
        }
    }
    Ok(out)
}

/// Writes one feature file per sample under `dir/features` and a manifest at
/// `dir/manifest.json`; returns the manifest.
pub fn generate_synthetic(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let samples = generate_samples(spec)?;
    fs::create_dir_all(dir.join("features"))?;
    let mut records = Vec::with_capacity(samples.len());
    for sample in &samples {
        let rel = format!("features/{}.mcsf", sample.video_id);
        write_feature(dir.join(&rel), sample)?;
        records.push(SampleRecord {
            path: rel,
            label: sample.label,
            trimmed: sample.trimmed,
            video_id: sample.video_id.clone(),
            signal_segment: sample.signal_segment,
        });
    }
    let manifest = DatasetManifest {
        classes: spec.class_names(),
        dims: Dims {
            s: spec.s,
            t: spec.t,
            g: spec.g,
        },
        samples: records,
    };
    manifest.validate()?;
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}
