//! Transfer of classifier knowledge from the trimmed stream to the
//! untrimmed stream through a multi-kernel MMD penalty.
//!
//! The frozen lower stream contributes five parameter groups (spatial `P`,
//! spatial `Q`, temporal `P`, temporal `Q`, fusion `M`), each a small set of
//! vectors. The upper stream's matching groups are compared group by group
//! with a biased (V-statistic) MMD² estimate under a mixture of Gaussian
//! kernels, and the five estimates are summed. Attention parameters are not
//! part of the transfer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{StreamGradient, StreamModel};

/// Groups of classifier parameters, in snapshot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    SpatialProjection,
    SpatialClassifier,
    TemporalProjection,
    TemporalClassifier,
    Fusion,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::SpatialProjection,
        ParamGroup::SpatialClassifier,
        ParamGroup::TemporalProjection,
        ParamGroup::TemporalClassifier,
        ParamGroup::Fusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::SpatialProjection => "spatial_P",
            ParamGroup::SpatialClassifier => "spatial_Q",
            ParamGroup::TemporalProjection => "temporal_P",
            ParamGroup::TemporalClassifier => "temporal_Q",
            ParamGroup::Fusion => "fusion",
        }
    }
}

/// Flattened vectors of one group of a model.
pub fn group_vectors(model: &StreamModel, group: ParamGroup) -> Vec<Vec<f64>> {
    match group {
        ParamGroup::SpatialProjection => model
            .spatial_heads
            .iter()
            .map(|h| h.projection.as_slice().to_vec())
            .collect(),
        ParamGroup::SpatialClassifier => model
            .spatial_heads
            .iter()
            .map(|h| h.classifier.as_slice().to_vec())
            .collect(),
        ParamGroup::TemporalProjection => model
            .temporal_heads
            .iter()
            .map(|h| h.projection.as_slice().to_vec())
            .collect(),
        ParamGroup::TemporalClassifier => model
            .temporal_heads
            .iter()
            .map(|h| h.classifier.as_slice().to_vec())
            .collect(),
        ParamGroup::Fusion => vec![model.fusion.as_slice().to_vec()],
    }
}

fn add_group_gradient(
    grad: &mut StreamGradient,
    group: ParamGroup,
    values: &[Vec<f64>],
    scale: f64,
) {
    let targets: Vec<&mut [f64]> = match group {
        ParamGroup::SpatialProjection => grad
            .spatial_heads
            .iter_mut()
            .map(|h| h.projection.as_mut_slice())
            .collect(),
        ParamGroup::SpatialClassifier => grad
            .spatial_heads
            .iter_mut()
            .map(|h| h.classifier.as_mut_slice())
            .collect(),
        ParamGroup::TemporalProjection => grad
            .temporal_heads
            .iter_mut()
            .map(|h| h.projection.as_mut_slice())
            .collect(),
        ParamGroup::TemporalClassifier => grad
            .temporal_heads
            .iter_mut()
            .map(|h| h.classifier.as_mut_slice())
            .collect(),
        ParamGroup::Fusion => vec![grad.fusion.as_mut_slice()],
    };
    for (target, v) in targets.into_iter().zip(values) {
        for (t, x) in target.iter_mut().zip(v) {
            *t += scale * x;
        }
    }
}

/// Frozen copy of a trained lower stream's classifier parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSnapshot {
    spatial_p: Vec<Vec<f64>>,
    spatial_q: Vec<Vec<f64>>,
    temporal_p: Vec<Vec<f64>>,
    temporal_q: Vec<Vec<f64>>,
    fusion: Vec<Vec<f64>>,
    spatial_dim: usize,
    temporal_dim: usize,
    frames: usize,
    classes: usize,
}

impl TransferSnapshot {
    pub fn group(&self, group: ParamGroup) -> &[Vec<f64>] {
        match group {
            ParamGroup::SpatialProjection => &self.spatial_p,
            ParamGroup::SpatialClassifier => &self.spatial_q,
            ParamGroup::TemporalProjection => &self.temporal_p,
            ParamGroup::TemporalClassifier => &self.temporal_q,
            ParamGroup::Fusion => &self.fusion,
        }
    }

    fn check_compatible(&self, model: &StreamModel) -> Result<()> {
        let c = &model.config;
        if (c.spatial_dim, c.temporal_dim, c.frames, c.classes)
            != (
                self.spatial_dim,
                self.temporal_dim,
                self.frames,
                self.classes,
            )
        {
            return Err(Error::dim(format!(
                "snapshot dims (s={}, t={}, G={}, k={}) do not match model (s={}, t={}, G={}, k={})",
                self.spatial_dim,
                self.temporal_dim,
                self.frames,
                self.classes,
                c.spatial_dim,
                c.temporal_dim,
                c.frames,
                c.classes
            )));
        }
        Ok(())
    }

    /// Overwrites the classifier parameters (`P`, `Q`, `M`) of `model` with the
    /// snapshot's values.
    pub fn copy_into(&self, model: &mut StreamModel) -> Result<()> {
        self.check_compatible(model)?;
        for (h, v) in model.spatial_heads.iter_mut().zip(&self.spatial_p) {
            h.projection.as_mut_slice().copy_from_slice(v);
        }
        for (h, v) in model.spatial_heads.iter_mut().zip(&self.spatial_q) {
            h.classifier.as_mut_slice().copy_from_slice(v);
        }
        for (h, v) in model.temporal_heads.iter_mut().zip(&self.temporal_p) {
            h.projection.as_mut_slice().copy_from_slice(v);
        }
        for (h, v) in model.temporal_heads.iter_mut().zip(&self.temporal_q) {
            h.classifier.as_mut_slice().copy_from_slice(v);
        }
        model.fusion.as_mut_slice().copy_from_slice(&self.fusion[0]);
        Ok(())
    }
}

/// Deep copy of the classifier parameters of `lower`.
pub fn snapshot(lower: &StreamModel) -> TransferSnapshot {
    let c = lower.config;
    TransferSnapshot {
        spatial_p: group_vectors(lower, ParamGroup::SpatialProjection),
        spatial_q: group_vectors(lower, ParamGroup::SpatialClassifier),
        temporal_p: group_vectors(lower, ParamGroup::TemporalProjection),
        temporal_q: group_vectors(lower, ParamGroup::TemporalClassifier),
        fusion: group_vectors(lower, ParamGroup::Fusion),
        spatial_dim: c.spatial_dim,
        temporal_dim: c.temporal_dim,
        frames: c.frames,
        classes: c.classes,
    }
}

/// How the base bandwidth `σ₀` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median of the pairwise Euclidean distances within the pooled sample;
    /// falls back to 1 when that median is zero.
    Median,
    Fixed(f64),
}

/// Equal-weight mixture of Gaussian kernels `exp(−‖x−y‖² / (2σ²))` with
/// `σ = multiplier · σ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub base: Bandwidth,
    pub multipliers: Vec<f64>,
}

impl Default for KernelSpec {
    /// Median heuristic with multipliers {1/4, 1/2, 1, 2, 4}.
    fn default() -> Self {
        Self {
            base: Bandwidth::Median,
            multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
        }
    }
}

impl KernelSpec {
    /// A single Gaussian kernel with bandwidth `sigma`.
    pub fn gaussian(sigma: f64) -> Self {
        Self {
            base: Bandwidth::Fixed(sigma),
            multipliers: vec![1.0],
        }
    }

    /// Same multipliers, base bandwidth pinned to `sigma`.
    pub fn with_fixed_base(&self, sigma: f64) -> Self {
        Self {
            base: Bandwidth::Fixed(sigma),
            multipliers: self.multipliers.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.multipliers.is_empty()
            || self
                .multipliers
                .iter()
                .any(|m| !(*m > 0.0 && m.is_finite()))
        {
            return Err(Error::Config("kernel multipliers must be positive".into()));
        }
        if let Bandwidth::Fixed(s) = self.base {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "bandwidth must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// `σ₀` for the pooled sample `x ∪ y`.
    pub fn base_bandwidth(&self, x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        match self.base {
            Bandwidth::Fixed(s) => s,
            Bandwidth::Median => median_pairwise_distance(x, y)
                .filter(|m| *m > 0.0)
                .unwrap_or(1.0),
        }
    }

    /// Concrete bandwidths for the pooled sample `x ∪ y`.
    pub fn bandwidths(&self, x: &[Vec<f64>], y: &[Vec<f64>]) -> Vec<f64> {
        let base = self.base_bandwidth(x, y);
        self.multipliers.iter().map(|m| m * base).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn median_pairwise_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> Option<f64> {
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let mut d = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(squared_distance(pooled[i], pooled[j]).sqrt());
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let n = d.len();
    Some(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}

fn check_sets(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::dim("MMD needs at least one vector on each side"));
    }
    let dim = x[0].len();
    if x.iter().chain(y).any(|v| v.len() != dim) {
        return Err(Error::dim("MMD vectors differ in length"));
    }
    Ok(dim)
}

/// Mean of the mixture kernel over all ordered pairs of `a × b`.
fn mean_kernel(a: &[Vec<f64>], b: &[Vec<f64>], sigmas: &[f64]) -> f64 {
    let w = 1.0 / sigmas.len() as f64;
    let mut total = 0.0;
    for p in a {
        for q in b {
            let d2 = squared_distance(p, q);
            for s in sigmas {
                total += w * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }
    total / (a.len() * b.len()) as f64
}

/// Biased MMD² between two vector sets.
pub fn mmd2(x: &[Vec<f64>], y: &[Vec<f64>], kernel: &KernelSpec) -> Result<f64> {
    check_sets(x, y)?;
    kernel.validate()?;
    let sigmas = kernel.bandwidths(x, y);
    let value =
        mean_kernel(x, x, &sigmas) + mean_kernel(y, y, &sigmas) - 2.0 * mean_kernel(x, y, &sigmas);
    Ok(value.max(0.0))
}

/// `Σⱼ w K(p, qⱼ) (p − qⱼ) / σ²` summed over the mixture, divided by `|q|`.
fn kernel_pull(p: &[f64], q: &[Vec<f64>], sigmas: &[f64]) -> Vec<f64> {
    let w = 1.0 / sigmas.len() as f64;
    let mut out = vec![0.0; p.len()];
    for qj in q {
        let d2 = squared_distance(p, qj);
        let coef: f64 = sigmas
            .iter()
            .map(|s| w * (-d2 / (2.0 * s * s)).exp() / (s * s))
            .sum();
        for ((o, a), b) in out.iter_mut().zip(p).zip(qj) {
            *o += coef * (a - b);
        }
    }
    let n = q.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// MMD² and its gradient with respect to every vector of `x`, with the
/// bandwidths held fixed at their value for this `(x, y)`.
pub fn mmd2_with_gradient(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    kernel: &KernelSpec,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_sets(x, y)?;
    kernel.validate()?;
    let sigmas = kernel.bandwidths(x, y);
    let value =
        mean_kernel(x, x, &sigmas) + mean_kernel(y, y, &sigmas) - 2.0 * mean_kernel(x, y, &sigmas);
    let n = x.len() as f64;
    // d/dxᵢ [mean K(x,x)] = −(2/n) · mean_j K(xᵢ,xⱼ)(xᵢ−xⱼ)/σ²
    // d/dxᵢ [−2 mean K(x,y)] = +(2/n) · mean_j K(xᵢ,yⱼ)(xᵢ−yⱼ)/σ²
    let grads = x
        .iter()
        .map(|xi| {
            let within = kernel_pull(xi, x, &sigmas);
            let cross = kernel_pull(xi, y, &sigmas);
            within
                .iter()
                .zip(&cross)
                .map(|(w, c)| 2.0 / n * (c - w))
                .collect()
        })
        .collect();
    Ok((value.max(0.0), grads))
}

/// Sum over the five groups of MMD²(upper group, snapshot group).
pub fn loss3(upper: &StreamModel, snap: &TransferSnapshot, kernel: &KernelSpec) -> Result<f64> {
    snap.check_compatible(upper)?;
    let mut total = 0.0;
    for group in ParamGroup::ALL {
        total += mmd2(&group_vectors(upper, group), snap.group(group), kernel)?;
    }
    Ok(total)
}

/// `loss3` and its gradient with respect to the upper stream (attention
/// parameters get zero gradient).
pub fn loss3_with_gradient(
    upper: &StreamModel,
    snap: &TransferSnapshot,
    kernel: &KernelSpec,
) -> Result<(f64, StreamGradient)> {
    snap.check_compatible(upper)?;
    let mut grad = upper.zero_like();
    let mut total = 0.0;
    for group in ParamGroup::ALL {
        let (value, g) =
            mmd2_with_gradient(&group_vectors(upper, group), snap.group(group), kernel)?;
        total += value;
        add_group_gradient(&mut grad, group, &g, 1.0);
    }
    Ok((total, grad))
}

/// Per-group kernels with `σ₀` pinned at its value for `upper`, in
/// [`ParamGroup::ALL`] order. Evaluating [`loss3_with_kernels`] with them
/// gives the function whose exact gradient [`loss3_with_gradient`] returns.
pub fn frozen_kernels(
    upper: &StreamModel,
    snap: &TransferSnapshot,
    kernel: &KernelSpec,
) -> Result<Vec<KernelSpec>> {
    snap.check_compatible(upper)?;
    Ok(ParamGroup::ALL
        .iter()
        .map(|&g| {
            kernel.with_fixed_base(kernel.base_bandwidth(&group_vectors(upper, g), snap.group(g)))
        })
        .collect())
}

pub fn loss3_with_kernels(
    upper: &StreamModel,
    snap: &TransferSnapshot,
    kernels: &[KernelSpec],
) -> Result<f64> {
    snap.check_compatible(upper)?;
    if kernels.len() != ParamGroup::ALL.len() {
        return Err(Error::Config(format!(
            "need {} kernels, got {}",
            ParamGroup::ALL.len(),
            kernels.len()
        )));
    }
    let mut total = 0.0;
    for (group, kernel) in ParamGroup::ALL.iter().zip(kernels) {
        total += mmd2(&group_vectors(upper, *group), snap.group(*group), kernel)?;
    }
    Ok(total)
}

/// Group sizes of a snapshot, for display.
pub fn group_sizes(snap: &TransferSnapshot) -> [usize; 5] {
    ParamGroup::ALL.map(|g| snap.group(g).len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;
    use crate::stream::StreamConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn identical_sets_have_zero_mmd() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_set(3, 4, &mut rng);
        assert!(mmd2(&x, &x, &KernelSpec::default()).unwrap() <= 1e-12);
    }

    #[test]
    fn singleton_closed_form() {
        let x = vec![vec![0.3, -1.0, 2.0]];
        let y = vec![vec![1.0, 0.5, 1.5]];
        let sigma = 0.8;
        let d2: f64 = 0.49 + 2.25 + 0.25;
        let want = 2.0 * (1.0 - (-d2 / (2.0 * sigma * sigma)).exp());
        let got = mmd2(&x, &y, &KernelSpec::gaussian(sigma)).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        assert!(mmd2(&[vec![1.0]], &[vec![1.0, 2.0]], &KernelSpec::default()).is_err());
        assert!(mmd2(&[], &[vec![1.0]], &KernelSpec::default()).is_err());
        assert!(mmd2(&[vec![1.0]], &[vec![2.0]], &KernelSpec::gaussian(0.0)).is_err());
    }

    #[test]
    fn median_heuristic() {
        let x = vec![vec![0.0], vec![1.0]];
        let y = vec![vec![3.0]];
        // distances 1, 3, 2 -> median 2
        assert_eq!(
            KernelSpec::default().bandwidths(&x, &y),
            vec![0.5, 1.0, 2.0, 4.0, 8.0]
        );
        let same = vec![vec![1.0]];
        assert_eq!(
            KernelSpec::gaussian(2.0).bandwidths(&same, &same),
            vec![2.0]
        );
        assert_eq!(KernelSpec::default().bandwidths(&same, &same)[2], 1.0);
    }

    #[test]
    fn mmd_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, m) in [(3, 3), (1, 1), (2, 3)] {
            let x = random_set(n, 4, &mut rng);
            let y = random_set(m, 4, &mut rng);
            let kernel = KernelSpec::default();
            let fixed = kernel.with_fixed_base(kernel.bandwidths(&x, &y)[2]);
            let (_, g) = mmd2_with_gradient(&x, &y, &kernel).unwrap();
            let theta: Vec<f64> = x.iter().flatten().copied().collect();
            let analytic: Vec<f64> = g.iter().flatten().copied().collect();
            let f = |t: &[f64]| {
                let xs: Vec<Vec<f64>> = t.chunks(4).map(|c| c.to_vec()).collect();
                mmd2(&xs, &y, &fixed).unwrap()
            };
            let err = finite_diff_check(f, &theta, &analytic, 1e-5).unwrap();
            assert!(err <= 1e-6, "{n}x{m}: {err}");
        }
    }

    #[test]
    fn snapshot_is_a_deep_copy() {
        let config = StreamConfig::new(3, 2, 4, 3).with_hidden(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lower = StreamModel::random(config, &mut rng).unwrap();
        let snap = snapshot(&lower);
        let before = snap.clone();
        lower
            .assign_flat(&vec![0.0; lower.parameter_count()])
            .unwrap();
        assert_eq!(snap, before);
        assert_eq!(group_sizes(&snap), [3, 3, 3, 3, 1]);
        assert_eq!(snap.group(ParamGroup::SpatialClassifier)[0].len(), 3 * 4);
        assert_eq!(snap.group(ParamGroup::TemporalClassifier)[0].len(), 3 * 3);
        let zero = snapshot(&lower);
        assert!(ParamGroup::ALL
            .iter()
            .all(|g| zero.group(*g).iter().flatten().all(|x| *x == 0.0)));
    }

    #[test]
    fn loss3_at_snapshot_and_copy_into() {
        let config = StreamConfig::new(3, 2, 4, 3).with_hidden(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let lower = StreamModel::random(config, &mut rng).unwrap();
        let snap = snapshot(&lower);
        assert!(loss3(&lower, &snap, &KernelSpec::default()).unwrap() <= 1e-12);
        let (v, g) = loss3_with_gradient(&lower, &snap, &KernelSpec::default()).unwrap();
        assert!(v <= 1e-12);
        assert!(g.flatten().iter().all(|x| *x == 0.0));

        let mut upper = StreamModel::random(config, &mut rng).unwrap();
        assert!(loss3(&upper, &snap, &KernelSpec::default()).unwrap() > 0.0);
        let attention_before = upper.spatial_channels.clone();
        snap.copy_into(&mut upper).unwrap();
        assert_eq!(upper.spatial_channels, attention_before);
        assert!(loss3(&upper, &snap, &KernelSpec::default()).unwrap() <= 1e-12);

        let other =
            StreamModel::random(StreamConfig::new(3, 2, 5, 3).with_hidden(2, 2), &mut rng).unwrap();
        assert!(loss3(&other, &snap, &KernelSpec::default()).is_err());
    }
}
