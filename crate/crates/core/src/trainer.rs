//! Deterministic mini-batch SGD for both training phases.
//!
//! Phase 1 fits the lower stream on trimmed videos with cross-entropy.
//! Phase 2 fits the upper stream on untrimmed videos with
//! `CE + λ_mmd · loss3 + λ_reg · loss4`, where `loss3` is measured against a
//! frozen [`TransferSnapshot`] of the lower stream.
//!
//! Per-sample gradients may be computed on several threads, but they are
//! always reduced in batch order, so a run is a pure function of
//! `(config, data, seed)`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::FeatureSample;
use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::regularizer::quartic_variation;
use crate::stream::{
    forward, predict, sample_gradient, SampleObjective, StreamConfig, StreamGradient, StreamModel,
};
use crate::transfer::{loss3_with_gradient, KernelSpec, TransferSnapshot};

/// Optimizer and objective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// L2 coefficient applied at every step.
    pub weight_decay: f64,
    pub lr_decay_every: usize,
    /// Multiplies the learning rate every `lr_decay_every` iterations; 1 disables it.
    pub lr_decay_factor: f64,
    pub lambda_mmd: f64,
    pub lambda_reg: f64,
    /// Weight of the cross-entropy term. Zero freezes the data term.
    pub lambda_ce: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub seed: u64,
    /// Worker threads for per-sample gradients; 1 runs inline.
    pub jobs: usize,
    /// Start the upper stream's classifier parameters at the snapshot.
    pub init_from_snapshot: bool,
    pub kernel: KernelSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            lr_decay_every: 1000,
            lr_decay_factor: 1.0,
            lambda_mmd: 1.0,
            lambda_reg: 0.1,
            lambda_ce: 1.0,
            batch_size: 8,
            max_iterations: 5000,
            seed: 0,
            jobs: 1,
            init_from_snapshot: false,
            kernel: KernelSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        for (name, v) in [
            ("lambda_mmd", self.lambda_mmd),
            ("lambda_reg", self.lambda_reg),
            ("lambda_ce", self.lambda_ce),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be at least 1".into());
        }
        if self.lr_decay_factor.is_nan() || self.lr_decay_factor <= 0.0 {
            return bad("lr_decay_factor must be positive".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }

    /// Learning rate in effect at iteration `it` (0-based).
    pub fn learning_rate_at(&self, it: usize) -> f64 {
        let steps = (it / self.lr_decay_every) as i32;
        self.learning_rate * self.lr_decay_factor.powi(steps)
    }
}

/// Mean attention weight on annotated action frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalAttention {
    /// Mean weight per signal frame over the three spatial vectors.
    pub spatial: f64,
    /// Mean weight per signal step over the three temporal vectors.
    pub temporal: f64,
    /// `1 / G`, the weight of a uniform spatial vector.
    pub spatial_uniform: f64,
    /// `1 / (G − 1)`.
    pub temporal_uniform: f64,
    pub samples: usize,
}

/// Training log. `loss_*` hold one batch mean per iteration; `loss_mmd` and
/// `loss_reg` are unweighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_total: Vec<f64>,
    pub loss_ce: Vec<f64>,
    pub loss_mmd: Vec<f64>,
    pub loss_reg: Vec<f64>,
    pub final_train_acc: f64,
    pub final_val_acc: Option<f64>,
    pub seed: u64,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_attention: Option<SignalAttention>,
}

impl TrainReport {
    pub fn iterations(&self) -> usize {
        self.loss_total.len()
    }

    /// Means of consecutive non-overlapping windows of `loss_total`.
    pub fn smoothed_total(&self, window: usize) -> Vec<f64> {
        self.loss_total
            .chunks(window.max(1))
            .filter(|c| c.len() == window.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `θ ← θ − lr · (g + wd · θ)` on raw slices.
pub fn sgd_update(theta: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= lr * (g + weight_decay * *t);
    }
}

/// One SGD step over every parameter matrix. A non-finite gradient or
/// result aborts with the parameter's name and leaves `model` untouched.
pub fn sgd_step(
    model: &mut StreamModel,
    grads: &StreamGradient,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    let grad_mats: Vec<&Matrix> = grads.parameters().into_iter().map(|(_, m)| m).collect();
    if grad_mats.len() != names.len() {
        return Err(Error::dim("gradient does not match the model"));
    }
    let mut updated = model.clone();
    for ((param, grad), name) in updated
        .parameters_mut()
        .into_iter()
        .zip(grad_mats)
        .zip(&names)
    {
        if param.shape() != grad.shape() {
            return Err(Error::dim(format!(
                "gradient of {name} has the wrong shape"
            )));
        }
        if grad.as_slice().iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient for {name}")));
        }
        sgd_update(param.as_mut_slice(), grad.as_slice(), lr, weight_decay);
        if param.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("update made {name} non-finite")));
        }
    }
    *model = updated;
    Ok(())
}

/// What the optimizer minimizes.
#[derive(Debug, Clone, Copy)]
pub enum Phase<'a> {
    /// Mean batch cross-entropy.
    Classification,
    /// Mean batch `CE + λ_reg·loss4`, plus `λ_mmd·loss3` against the snapshot.
    Transfer(&'a TransferSnapshot),
}

/// Fraction of samples whose predicted class equals the label.
pub fn evaluate(model: &StreamModel, data: &[FeatureSample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    for sample in data {
        if predict(model, sample)? == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Attention mass on annotated segments, over samples that carry one.
pub fn signal_attention(
    model: &StreamModel,
    data: &[FeatureSample],
) -> Result<Option<SignalAttention>> {
    let g = model.config.frames;
    let (mut spatial, mut temporal, mut n, mut n_temporal) = (0.0, 0.0, 0usize, 0usize);
    for sample in data {
        let Some(seg) = sample.signal_segment else {
            continue;
        };
        let out = forward(model, sample)?;
        let spatial_frames: Vec<usize> = (0..g).filter(|f| seg.contains(*f)).collect();
        let temporal_steps: Vec<usize> = (0..g - 1).filter(|f| seg.contains(*f)).collect();
        if spatial_frames.is_empty() {
            continue;
        }
        for v in &out.spatial_attention {
            spatial += spatial_frames.iter().map(|&f| v.weights()[f]).sum::<f64>()
                / spatial_frames.len() as f64;
        }
        if !temporal_steps.is_empty() {
            for v in &out.temporal_attention {
                temporal += temporal_steps.iter().map(|&f| v.weights()[f]).sum::<f64>()
                    / temporal_steps.len() as f64;
            }
            n_temporal += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(SignalAttention {
        spatial: spatial / (3 * n) as f64,
        temporal: if n_temporal > 0 {
            temporal / (3 * n_temporal) as f64
        } else {
            f64::NAN
        },
        spatial_uniform: 1.0 / g as f64,
        temporal_uniform: 1.0 / (g - 1) as f64,
        samples: n,
    }))
}

/// Mean entropy and mean quartic variation of the six attention vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionStats {
    pub mean_entropy: f64,
    pub mean_variation: f64,
}

pub fn attention_stats(model: &StreamModel, data: &[FeatureSample]) -> Result<AttentionStats> {
    if data.is_empty() {
        return Err(Error::Config("no samples".into()));
    }
    let (mut entropy, mut variation, mut count) = (0.0, 0.0, 0usize);
    for sample in data {
        let out = forward(model, sample)?;
        for v in out.attention() {
            entropy += v.entropy();
            variation += quartic_variation(v.weights());
            count += 1;
        }
    }
    Ok(AttentionStats {
        mean_entropy: entropy / count as f64,
        mean_variation: variation / count as f64,
    })
}

fn check_data(config: &StreamConfig, data: &[FeatureSample]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    for s in data {
        config.check_sample(s)?;
        if s.label >= config.classes {
            return Err(Error::Index(format!(
                "sample {} has label {} but the model has {} classes",
                s.video_id, s.label, config.classes
            )));
        }
    }
    Ok(())
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

struct BatchOutcome {
    ce: f64,
    reg: f64,
    gradient: StreamGradient,
}

fn batch_gradient(
    model: &StreamModel,
    batch: &[&FeatureSample],
    objective: SampleObjective,
    pool: Option<&rayon::ThreadPool>,
) -> Result<BatchOutcome> {
    let per_sample: Vec<Result<_>> = match pool {
        Some(pool) => pool.install(|| {
            batch
                .par_iter()
                .map(|s| sample_gradient(model, s, objective))
                .collect()
        }),
        None => batch
            .iter()
            .map(|s| sample_gradient(model, s, objective))
            .collect(),
    };
    let mut gradient = model.zero_like();
    let (mut ce, mut reg) = (0.0, 0.0);
    // fixed reduction order
    for g in per_sample {
        let g = g?;
        ce += g.cross_entropy;
        reg += g.regularizer;
        gradient.add_scaled(&g.gradient, 1.0);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut mean = model.zero_like();
    mean.add_scaled(&gradient, scale);
    Ok(BatchOutcome {
        ce: ce * scale,
        reg: reg * scale,
        gradient: mean,
    })
}

/// Runs SGD from `model` on `data`, then scores it on `data` and `validation`.
pub fn fit(
    mut model: StreamModel,
    data: &[FeatureSample],
    validation: &[FeatureSample],
    phase: Phase<'_>,
    config: &TrainConfig,
) -> Result<(StreamModel, TrainReport)> {
    config.validate()?;
    model.validate()?;
    check_data(&model.config, data)?;
    if !validation.is_empty() {
        check_data(&model.config, validation)?;
    }
    let started = Instant::now();
    let pool = if config.jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.jobs)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let (objective, snapshot) = match phase {
        Phase::Classification => (
            SampleObjective {
                cross_entropy: config.lambda_ce,
                regularizer: 0.0,
            },
            None,
        ),
        Phase::Transfer(snap) => (
            SampleObjective {
                cross_entropy: config.lambda_ce,
                regularizer: config.lambda_reg,
            },
            Some(snap),
        ),
    };

    let mut rng = shuffle_rng(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len();
    let mut report = TrainReport {
        loss_total: Vec::with_capacity(config.max_iterations),
        loss_ce: Vec::with_capacity(config.max_iterations),
        loss_mmd: Vec::with_capacity(config.max_iterations),
        loss_reg: Vec::with_capacity(config.max_iterations),
        final_train_acc: 0.0,
        final_val_acc: None,
        seed: config.seed,
        wall_seconds: 0.0,
        signal_attention: None,
    };

    for it in 0..config.max_iterations {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + config.batch_size).min(order.len());
        let batch: Vec<&FeatureSample> = order[cursor..end].iter().map(|&i| &data[i]).collect();
        cursor = end;

        let mut outcome = batch_gradient(&model, &batch, objective, pool.as_ref())?;
        let mut mmd = 0.0;
        let mut total = config.lambda_ce * outcome.ce;
        if let Some(snap) = snapshot {
            if config.lambda_mmd > 0.0 {
                let (value, grad) = loss3_with_gradient(&model, snap, &config.kernel)?;
                outcome.gradient.add_scaled(&grad, config.lambda_mmd);
                mmd = value;
            } else {
                mmd = crate::transfer::loss3(&model, snap, &config.kernel)?;
            }
            total += config.lambda_mmd * mmd + config.lambda_reg * outcome.reg;
        }
        for (name, v) in [
            ("total", total),
            ("cross-entropy", outcome.ce),
            ("mmd", mmd),
            ("regularizer", outcome.reg),
        ] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "{name} loss is not finite at iteration {it}"
                )));
            }
        }
        report.loss_total.push(total);
        report.loss_ce.push(outcome.ce);
        report.loss_mmd.push(mmd);
        report.loss_reg.push(outcome.reg);

        sgd_step(
            &mut model,
            &outcome.gradient,
            config.learning_rate_at(it),
            config.weight_decay,
        )?;
    }

    report.final_train_acc = evaluate(&model, data)?;
    if !validation.is_empty() {
        report.final_val_acc = Some(evaluate(&model, validation)?);
        report.signal_attention = signal_attention(&model, validation)?;
    } else {
        report.signal_attention = signal_attention(&model, data)?;
    }
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Phase 1: a freshly initialized stream fitted to trimmed videos.
pub fn train_lower(
    model_config: StreamConfig,
    data: &[FeatureSample],
    validation: &[FeatureSample],
    config: &TrainConfig,
) -> Result<(StreamModel, TrainReport)> {
    if let Some(s) = data.iter().find(|s| !s.trimmed) {
        return Err(Error::Config(format!(
            "lower stream expects trimmed videos, {} is untrimmed",
            s.video_id
        )));
    }
    config.validate()?;
    let model = StreamModel::random(model_config, &mut init_rng(config.seed))?;
    fit(model, data, validation, Phase::Classification, config)
}

/// Phase 2: a new stream fitted to untrimmed videos under the transfer and
/// attention penalties.
pub fn train_upper(
    model_config: StreamConfig,
    data: &[FeatureSample],
    validation: &[FeatureSample],
    snap: &TransferSnapshot,
    config: &TrainConfig,
) -> Result<(StreamModel, TrainReport)> {
    if let Some(s) = data.iter().find(|s| s.trimmed) {
        return Err(Error::Config(format!(
            "upper stream expects untrimmed videos, {} is trimmed",
            s.video_id
        )));
    }
    config.validate()?;
    let mut model = StreamModel::random(model_config, &mut init_rng(config.seed))?;
    if config.init_from_snapshot {
        snap.copy_into(&mut model)?;
    }
    fit(model, data, validation, Phase::Transfer(snap), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::snapshot;
    use rand::Rng;

    fn toy_data(config: &StreamConfig, n: usize, trimmed: bool, seed: u64) -> Vec<FeatureSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = i % config.classes;
                let shift = if label == 0 { 1.5 } else { -1.5 };
                let s = Matrix::new(
                    config.spatial_dim,
                    config.frames,
                    (0..config.spatial_dim * config.frames)
                        .map(|_| shift + rng.random_range(-1.0..1.0))
                        .collect(),
                )
                .unwrap();
                let t = Matrix::new(
                    config.temporal_dim,
                    config.frames - 1,
                    (0..config.temporal_dim * (config.frames - 1))
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect(),
                )
                .unwrap();
                FeatureSample::new(s, t, label, trimmed, format!("v{i}")).unwrap()
            })
            .collect()
    }

    fn small() -> StreamConfig {
        StreamConfig::new(3, 2, 4, 2).with_hidden(3, 3)
    }

    #[test]
    fn sgd_examples() {
        let mut t = [1.0];
        sgd_update(&mut t, &[1.0], 0.1, 0.0);
        assert!((t[0] - 0.9).abs() < 1e-15);
        let mut t = [1.0];
        sgd_update(&mut t, &[0.0], 0.1, 0.5);
        assert!((t[0] - 0.95).abs() < 1e-15);
        let mut t = [0.37];
        sgd_update(&mut t, &[0.0], 0.1, 0.0);
        assert_eq!(t[0], 0.37);
    }

    #[test]
    fn sgd_step_rejects_non_finite_gradient() {
        let mut model = StreamModel::zeros(small()).unwrap();
        let mut grads = model.clone();
        grads.fusion.as_mut_slice()[2] = f64::NAN;
        let err = sgd_step(&mut model, &grads, 0.1, 0.0).unwrap_err();
        assert!(err.to_string().contains("fusion.M"), "{err}");
        assert_eq!(model, StreamModel::zeros(small()).unwrap());
    }

    #[test]
    fn zero_iterations_returns_initial_model() {
        let data = toy_data(&small(), 6, true, 0);
        let config = TrainConfig {
            max_iterations: 0,
            seed: 4,
            ..TrainConfig::default()
        };
        let (model, report) = train_lower(small(), &data, &[], &config).unwrap();
        assert_eq!(
            model,
            StreamModel::random(small(), &mut init_rng(4)).unwrap()
        );
        assert!(report.loss_total.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_thread_count_invariant() {
        let data = toy_data(&small(), 10, true, 1);
        let config = TrainConfig {
            learning_rate: 0.5,
            max_iterations: 40,
            batch_size: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ra) = train_lower(small(), &data, &[], &config).unwrap();
        let (b, rb) = train_lower(small(), &data, &[], &config).unwrap();
        let (c, rc) = train_lower(
            small(),
            &data,
            &[],
            &TrainConfig {
                jobs: 3,
                ..config.clone()
            },
        )
        .unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_eq!(a.flatten(), c.flatten());
        assert_eq!(ra.loss_total, rb.loss_total);
        assert_eq!(ra.loss_total, rc.loss_total);
        assert_eq!(ra.iterations(), 40);
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let data = toy_data(&small(), 20, true, 2);
        let config = TrainConfig {
            learning_rate: 0.5,
            max_iterations: 300,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (_, report) = train_lower(small(), &data, &[], &config).unwrap();
        assert_eq!(report.final_train_acc, 1.0);
        assert!(report.loss_total.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn upper_without_penalties_matches_plain_classification() {
        let untrimmed = toy_data(&small(), 10, false, 3);
        let lower = StreamModel::random(small(), &mut init_rng(77)).unwrap();
        let snap = snapshot(&lower);
        let config = TrainConfig {
            learning_rate: 0.3,
            lambda_mmd: 0.0,
            lambda_reg: 0.0,
            max_iterations: 25,
            batch_size: 3,
            seed: 5,
            ..TrainConfig::default()
        };
        let (upper, ru) = train_upper(small(), &untrimmed, &[], &snap, &config).unwrap();
        let init = StreamModel::random(small(), &mut init_rng(5)).unwrap();
        let (plain, rp) = fit(init, &untrimmed, &[], Phase::Classification, &config).unwrap();
        assert_eq!(upper.flatten(), plain.flatten());
        assert_eq!(ru.loss_ce, rp.loss_ce);
    }

    #[test]
    fn snapshot_is_a_fixed_point_of_the_transfer_term() {
        let untrimmed = toy_data(&small(), 6, false, 4);
        let lower = StreamModel::random(small(), &mut init_rng(8)).unwrap();
        let snap = snapshot(&lower);
        let config = TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            lambda_mmd: 1e6,
            lambda_reg: 0.0,
            lambda_ce: 0.0,
            max_iterations: 20,
            ..TrainConfig::default()
        };
        let (upper, report) = fit(
            lower.clone(),
            &untrimmed,
            &[],
            Phase::Transfer(&snap),
            &config,
        )
        .unwrap();
        assert!(upper.max_abs_diff(&lower) <= 1e-9);
        assert!(report.loss_mmd.iter().all(|v| *v <= 1e-12));
    }

    #[test]
    fn phase_preconditions() {
        let trimmed = toy_data(&small(), 4, true, 5);
        let untrimmed = toy_data(&small(), 4, false, 5);
        let snap = snapshot(&StreamModel::zeros(small()).unwrap());
        let config = TrainConfig::default();
        assert!(matches!(
            train_lower(small(), &untrimmed, &[], &config),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_upper(small(), &trimmed, &[], &snap, &config),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            train_lower(small(), &[], &[], &config),
            Err(Error::Config(_))
        ));
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_lower(small(), &trimmed, &[], &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn evaluate_examples() {
        let model = StreamModel::zeros(StreamConfig::new(3, 2, 4, 4).with_hidden(2, 2)).unwrap();
        let config = model.config;
        let mut data = toy_data(&config, 8, true, 6);
        // balanced labels 0..3: the uniform model always predicts 0
        assert_eq!(evaluate(&model, &data).unwrap(), 0.25);
        data.reverse();
        assert_eq!(evaluate(&model, &data).unwrap(), 0.25);
        for s in data.iter_mut() {
            s.label = 0;
        }
        assert_eq!(evaluate(&model, &data).unwrap(), 1.0);
        assert!(matches!(evaluate(&model, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn learning_rate_schedule() {
        let config = TrainConfig {
            learning_rate: 1.0,
            lr_decay_every: 10,
            lr_decay_factor: 0.5,
            ..TrainConfig::default()
        };
        assert_eq!(config.learning_rate_at(0), 1.0);
        assert_eq!(config.learning_rate_at(9), 1.0);
        assert_eq!(config.learning_rate_at(10), 0.5);
        assert_eq!(config.learning_rate_at(25), 0.25);
        assert_eq!(TrainConfig::default().learning_rate_at(4999), 1e-4);
    }

    #[test]
    fn report_json_schema() {
        let report = TrainReport {
            loss_total: vec![1.0],
            loss_ce: vec![1.0],
            loss_mmd: vec![0.0],
            loss_reg: vec![6.0],
            final_train_acc: 0.5,
            final_val_acc: Some(0.25),
            seed: 3,
            wall_seconds: 0.1,
            signal_attention: None,
        };
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        for key in ["loss_total", "loss_ce", "loss_mmd", "loss_reg"] {
            assert!(v[key].is_array(), "{key}");
        }
        for key in ["final_train_acc", "final_val_acc", "seed", "wall_seconds"] {
            assert!(v[key].is_number(), "{key}");
        }
    }
}
