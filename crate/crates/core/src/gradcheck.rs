//! Finite-difference audit of every training objective on a tiny random model.
//!
//! Objective values are recomputed through [`forward`] rather than the
//! backward pass, so the comparison checks the hand-written gradients
//! against an independent evaluation. The MMD bandwidths are frozen at the
//! base point, matching the gradient's treatment of `σ₀` as a constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::FeatureSample;
use crate::error::Result;
use crate::numeric::{finite_diff_check, Matrix};
use crate::regularizer::loss4;
use crate::stream::{
    cross_entropy, forward, sample_gradient, SampleObjective, StreamConfig, StreamModel,
};
use crate::transfer::{
    frozen_kernels, loss3_with_gradient, loss3_with_kernels, snapshot, KernelSpec,
};

/// Relative step used for the central differences.
pub const STEP: f64 = 1e-5;

/// Pass threshold on the max relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Max relative error per objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Lower-stream cross-entropy on a trimmed clip.
    pub loss1: f64,
    /// Upper-stream cross-entropy on an untrimmed clip.
    pub loss2: f64,
    pub loss3: f64,
    pub loss4: f64,
    /// Mean over a batch of `CE + λ_reg·loss4`, plus `λ_mmd·loss3`.
    pub combined: f64,
    pub parameters: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        [
            self.loss1,
            self.loss2,
            self.loss3,
            self.loss4,
            self.combined,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Whether every objective is within [`TOLERANCE`].
    pub fn all_passed(&self) -> bool {
        self.max_error() <= TOLERANCE
    }
}

/// `s = t = 3`, `G = 4`, `k = 3`, `a = b = 2`.
pub fn tiny_config() -> StreamConfig {
    StreamConfig::new(3, 3, 4, 3).with_hidden(2, 2)
}

/// A clip with entries uniform in `[−2, 2)`.
pub fn random_sample(
    config: &StreamConfig,
    label: usize,
    trimmed: bool,
    rng: &mut impl Rng,
) -> Result<FeatureSample> {
    let mut draw = |rows: usize, cols: usize| {
        Matrix::new(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        )
    };
    let spatial = draw(config.spatial_dim, config.frames)?;
    let temporal = draw(config.temporal_dim, config.frames - 1)?;
    FeatureSample::new(spatial, temporal, label, trimmed, "probe")
}

fn with_params(model: &StreamModel, theta: &[f64]) -> StreamModel {
    let mut m = model.clone();
    m.assign_flat(theta).expect("probe has the model's length");
    m
}

fn ce_value(model: &StreamModel, sample: &FeatureSample) -> f64 {
    let out = forward(model, sample).expect("probe shapes match");
    cross_entropy(&out.prediction, sample.label).expect("label in range")
}

fn loss4_value(model: &StreamModel, sample: &FeatureSample) -> f64 {
    let out = forward(model, sample).expect("probe shapes match");
    loss4(
        &out.spatial_attention,
        &out.temporal_attention,
        model.config.frames,
    )
    .expect("vector lengths match")
}

/// Runs all five checks with `λ_mmd = 1`, `λ_reg = 0.1`.
///
/// `loss4` alone sits near 6 (its L1 part), so its differences resolve
/// gradient entries only down to about `ulp(6) / 2h ≈ 4e-11`; on some seeds a
/// tiny attention gradient then reads as a large relative error. The
/// combined objective is the headline number.
pub fn gradient_check(seed: u64) -> Result<GradCheckReport> {
    let step = STEP;
    let config = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lower = StreamModel::random(config, &mut rng)?;
    let upper = StreamModel::random(config, &mut rng)?;
    let trimmed = random_sample(&config, rng.random_range(0..config.classes), true, &mut rng)?;
    let batch = [
        random_sample(
            &config,
            rng.random_range(0..config.classes),
            false,
            &mut rng,
        )?,
        random_sample(
            &config,
            rng.random_range(0..config.classes),
            false,
            &mut rng,
        )?,
    ];
    let snap = snapshot(&lower);
    let kernel = KernelSpec::default();
    let (lambda_mmd, lambda_reg) = (1.0, 0.1);
    let theta_lower = lower.flatten();
    let theta = upper.flatten();

    let g1 = sample_gradient(&lower, &trimmed, SampleObjective::classification())?;
    let loss1 = finite_diff_check(
        |p| ce_value(&with_params(&lower, p), &trimmed),
        &theta_lower,
        &g1.gradient.flatten(),
        step,
    )?;

    let g2 = sample_gradient(&upper, &batch[0], SampleObjective::classification())?;
    let loss2 = finite_diff_check(
        |p| ce_value(&with_params(&upper, p), &batch[0]),
        &theta,
        &g2.gradient.flatten(),
        step,
    )?;

    let kernels = frozen_kernels(&upper, &snap, &kernel)?;
    let (_, g3) = loss3_with_gradient(&upper, &snap, &kernel)?;
    let loss3_at = |p: &[f64]| {
        loss3_with_kernels(&with_params(&upper, p), &snap, &kernels).expect("compatible")
    };
    let loss3 = finite_diff_check(loss3_at, &theta, &g3.flatten(), step)?;

    let reg_only = SampleObjective {
        cross_entropy: 0.0,
        regularizer: 1.0,
    };
    let g4 = sample_gradient(&upper, &batch[0], reg_only)?;
    let loss4 = finite_diff_check(
        |p| loss4_value(&with_params(&upper, p), &batch[0]),
        &theta,
        &g4.gradient.flatten(),
        step,
    )?;

    let objective = SampleObjective {
        cross_entropy: 1.0,
        regularizer: lambda_reg,
    };
    let mut analytic = upper.zero_like();
    for s in &batch {
        analytic.add_scaled(
            &sample_gradient(&upper, s, objective)?.gradient,
            1.0 / batch.len() as f64,
        );
    }
    analytic.add_scaled(&g3, lambda_mmd);
    let combined_at = |p: &[f64]| {
        let m = with_params(&upper, p);
        let data: f64 = batch
            .iter()
            .map(|s| ce_value(&m, s) + lambda_reg * loss4_value(&m, s))
            .sum::<f64>()
            / batch.len() as f64;
        data + lambda_mmd * loss3_with_kernels(&m, &snap, &kernels).expect("compatible")
    };
    let combined = finite_diff_check(combined_at, &theta, &analytic.flatten(), step)?;

    Ok(GradCheckReport {
        loss1,
        loss2,
        loss3,
        loss4,
        combined,
        parameters: theta.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_at_seed_zero() {
        let report = gradient_check(0).unwrap();
        assert!(report.all_passed(), "{report:?}");
        assert_eq!(report.parameters, 135);
    }

    /// Central differences per coordinate, accepting `|a − n| ≤ 1e-4·|n| + 1e-9`;
    /// the absolute slack covers the ~4e-11 resolution of objectives near 6.
    fn assert_agrees(f: impl Fn(&[f64]) -> f64, theta: &[f64], analytic: &[f64], label: &str) {
        let mut probe = theta.to_vec();
        for i in 0..theta.len() {
            let h = STEP * (1.0 + theta[i].abs());
            probe[i] = theta[i] + h;
            let plus = f(&probe);
            probe[i] = theta[i] - h;
            let minus = f(&probe);
            probe[i] = theta[i];
            let numeric = (plus - minus) / (2.0 * h);
            assert!(
                (analytic[i] - numeric).abs() <= TOLERANCE * numeric.abs() + 1e-9,
                "{label} coordinate {i}: {} vs {numeric}",
                analytic[i]
            );
        }
    }

    #[test]
    fn regularized_gradients_agree_up_to_roundoff_across_seeds() {
        let config = tiny_config();
        let snap =
            snapshot(&StreamModel::random(config, &mut ChaCha8Rng::seed_from_u64(999)).unwrap());
        let kernel = KernelSpec::default();
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = StreamModel::random(config, &mut rng).unwrap();
            let sample = random_sample(&config, (seed % 3) as usize, false, &mut rng).unwrap();
            let theta = model.flatten();

            let reg_only = SampleObjective {
                cross_entropy: 0.0,
                regularizer: 1.0,
            };
            let g4 = sample_gradient(&model, &sample, reg_only)
                .unwrap()
                .gradient
                .flatten();
            assert_agrees(
                |p| loss4_value(&with_params(&model, p), &sample),
                &theta,
                &g4,
                &format!("loss4 seed {seed}"),
            );

            let objective = SampleObjective {
                cross_entropy: 1.0,
                regularizer: 0.1,
            };
            let mut analytic = sample_gradient(&model, &sample, objective)
                .unwrap()
                .gradient;
            analytic.add_scaled(&loss3_with_gradient(&model, &snap, &kernel).unwrap().1, 1.0);
            let kernels = frozen_kernels(&model, &snap, &kernel).unwrap();
            let total = |p: &[f64]| {
                let m = with_params(&model, p);
                ce_value(&m, &sample)
                    + 0.1 * loss4_value(&m, &sample)
                    + loss3_with_kernels(&m, &snap, &kernels).unwrap()
            };
            assert_agrees(
                total,
                &theta,
                &analytic.flatten(),
                &format!("combined seed {seed}"),
            );
        }
    }
}
