//! Classifier heads, six-way fusion and the cross-entropy objective of one
//! stream.
//!
//! Channel head `i` maps its attended matrix `X` to a class distribution
//! `softmax(Q · (P · X)ᵀ)`. The six distributions (spatial channels 1..3 then
//! temporal channels 1..3) are stacked side by side into a `k × 6` matrix `D`
//! and mixed by the learned `1 × 6` weights: `y = softmax(D · Mᵀ)`.
//!
//! The trimmed (lower) and untrimmed (upper) streams are two instances of
//! [`StreamModel`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    attention_bank, channel_activation, channel_backward, channel_forward, glorot, AttentionBank,
    AttentionChannelParams, AttentionVector, ChannelTrace, FeatureSample, CHANNELS,
};
use crate::error::{Error, Result};
use crate::numeric::{softmax, softmax_backward, softmax_unchecked, Matrix, LEAKY_RELU_SLOPE};
use crate::regularizer;

/// Number of fused channel distributions.
pub const FUSED: usize = 2 * CHANNELS;

/// Floor applied to the target probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Dimensions of a stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Spatial feature size `s`.
    pub spatial_dim: usize,
    /// Temporal feature size `t`.
    pub temporal_dim: usize,
    /// Frames per video `G`.
    pub frames: usize,
    /// Classes `k`.
    pub classes: usize,
    /// Hidden width `a` of the spatial attention channels.
    pub spatial_hidden: usize,
    /// Hidden width `b` of the temporal attention channels.
    pub temporal_hidden: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f64,
}

fn default_slope() -> f64 {
    LEAKY_RELU_SLOPE
}

impl StreamConfig {
    /// `a = b = 64` and the default leaky slope.
    pub fn new(spatial_dim: usize, temporal_dim: usize, frames: usize, classes: usize) -> Self {
        Self {
            spatial_dim,
            temporal_dim,
            frames,
            classes,
            spatial_hidden: 64,
            temporal_hidden: 64,
            leaky_slope: LEAKY_RELU_SLOPE,
        }
    }

    pub fn with_hidden(mut self, spatial: usize, temporal: usize) -> Self {
        self.spatial_hidden = spatial;
        self.temporal_hidden = temporal;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Config(format!(
                "G must be at least 2, got {}",
                self.frames
            )));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "k must be at least 2, got {}",
                self.classes
            )));
        }
        if self.spatial_dim == 0
            || self.temporal_dim == 0
            || self.spatial_hidden == 0
            || self.temporal_hidden == 0
        {
            return Err(Error::Config(
                "feature and hidden sizes must be positive".into(),
            ));
        }
        if !(self.leaky_slope.is_finite()) {
            return Err(Error::Config("leaky slope must be finite".into()));
        }
        Ok(())
    }

    pub fn check_sample(&self, sample: &FeatureSample) -> Result<()> {
        let want_s = (self.spatial_dim, self.frames);
        let want_t = (self.temporal_dim, self.frames - 1);
        if sample.spatial.shape() != want_s || sample.temporal.shape() != want_t {
            return Err(Error::dim(format!(
                "sample {} has spatial {:?} / temporal {:?}, model expects {:?} / {:?}",
                sample.video_id,
                sample.spatial.shape(),
                sample.temporal.shape(),
                want_s,
                want_t
            )));
        }
        Ok(())
    }
}

/// `P ∈ R^{1×d}` and `Q ∈ R^{k×m}` of one channel head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelHeadParams {
    #[serde(rename = "P")]
    pub projection: Matrix,
    #[serde(rename = "Q")]
    pub classifier: Matrix,
}

impl ChannelHeadParams {
    pub fn new(projection: Matrix, classifier: Matrix) -> Result<Self> {
        if projection.rows() != 1 {
            return Err(Error::dim("P must be a row vector"));
        }
        Ok(Self {
            projection,
            classifier,
        })
    }

    fn zeros(dim: usize, classes: usize, frames: usize) -> Self {
        Self {
            projection: Matrix::zeros(1, dim),
            classifier: Matrix::zeros(classes, frames),
        }
    }

    fn random<R: Rng>(dim: usize, classes: usize, frames: usize, rng: &mut R) -> Self {
        Self {
            projection: glorot(1, dim, rng),
            classifier: glorot(classes, frames, rng),
        }
    }
}

/// One stream: two attention banks, six heads and the fusion weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamModel {
    pub config: StreamConfig,
    pub spatial_channels: [AttentionChannelParams; CHANNELS],
    pub temporal_channels: [AttentionChannelParams; CHANNELS],
    pub spatial_heads: [ChannelHeadParams; CHANNELS],
    pub temporal_heads: [ChannelHeadParams; CHANNELS],
    #[serde(rename = "M")]
    pub fusion: Matrix,
}

impl StreamModel {
    pub fn zeros(config: StreamConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        Ok(Self {
            config,
            spatial_channels: [0, 1, 2].map(|j| {
                AttentionChannelParams::zeros(
                    c.spatial_hidden,
                    c.spatial_dim,
                    channel_activation(j, c.leaky_slope),
                )
            }),
            temporal_channels: [0, 1, 2].map(|j| {
                AttentionChannelParams::zeros(
                    c.temporal_hidden,
                    c.temporal_dim,
                    channel_activation(j, c.leaky_slope),
                )
            }),
            spatial_heads: [0, 1, 2]
                .map(|_| ChannelHeadParams::zeros(c.spatial_dim, c.classes, c.frames)),
            temporal_heads: [0, 1, 2]
                .map(|_| ChannelHeadParams::zeros(c.temporal_dim, c.classes, c.frames - 1)),
            fusion: Matrix::zeros(1, FUSED),
        })
    }

    /// Glorot-uniform initialization of every parameter matrix.
    pub fn random<R: Rng>(config: StreamConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let c = config;
        let spatial_channels = [0, 1, 2].map(|j| {
            AttentionChannelParams::random(
                c.spatial_hidden,
                c.spatial_dim,
                channel_activation(j, c.leaky_slope),
                rng,
            )
        });
        let temporal_channels = [0, 1, 2].map(|j| {
            AttentionChannelParams::random(
                c.temporal_hidden,
                c.temporal_dim,
                channel_activation(j, c.leaky_slope),
                rng,
            )
        });
        let spatial_heads =
            [0, 1, 2].map(|_| ChannelHeadParams::random(c.spatial_dim, c.classes, c.frames, rng));
        let temporal_heads = [0, 1, 2]
            .map(|_| ChannelHeadParams::random(c.temporal_dim, c.classes, c.frames - 1, rng));
        let fusion = glorot(1, FUSED, rng);
        Ok(Self {
            config,
            spatial_channels,
            temporal_channels,
            spatial_heads,
            temporal_heads,
            fusion,
        })
    }

    /// Checks every parameter shape against `config`.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let reference = StreamModel::zeros(self.config)?;
        for ((name, ours), (_, want)) in self.parameters().into_iter().zip(reference.parameters()) {
            if ours.shape() != want.shape() {
                return Err(Error::dim(format!(
                    "parameter {name} is {:?}, expected {:?}",
                    ours.shape(),
                    want.shape()
                )));
            }
        }
        for (j, ch) in self
            .spatial_channels
            .iter()
            .chain(&self.temporal_channels)
            .enumerate()
        {
            if ch.activation.name() != channel_activation(j % CHANNELS, 0.0).name() {
                return Err(Error::Config(format!(
                    "channel {j} has activation {}",
                    ch.activation.name()
                )));
            }
        }
        Ok(())
    }

    /// Every parameter matrix with a stable name, in a fixed order.
    pub fn parameters(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::with_capacity(4 * FUSED + 1);
        for (bank, chans) in [
            ("spatial", &self.spatial_channels),
            ("temporal", &self.temporal_channels),
        ] {
            for (j, ch) in chans.iter().enumerate() {
                out.push((format!("{bank}.attention{}.W", j + 1), &ch.weight));
                out.push((format!("{bank}.attention{}.u", j + 1), &ch.score));
            }
        }
        for (bank, heads) in [
            ("spatial", &self.spatial_heads),
            ("temporal", &self.temporal_heads),
        ] {
            for (j, h) in heads.iter().enumerate() {
                out.push((format!("{bank}.head{}.P", j + 1), &h.projection));
                out.push((format!("{bank}.head{}.Q", j + 1), &h.classifier));
            }
        }
        out.push(("fusion.M".to_string(), &self.fusion));
        out
    }

    /// Same order as [`StreamModel::parameters`].
    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::with_capacity(4 * FUSED + 1);
        for ch in self.spatial_channels.iter_mut() {
            out.push(&mut ch.weight);
            out.push(&mut ch.score);
        }
        for ch in self.temporal_channels.iter_mut() {
            out.push(&mut ch.weight);
            out.push(&mut ch.score);
        }
        for h in self.spatial_heads.iter_mut() {
            out.push(&mut h.projection);
            out.push(&mut h.classifier);
        }
        for h in self.temporal_heads.iter_mut() {
            out.push(&mut h.projection);
            out.push(&mut h.classifier);
        }
        out.push(&mut self.fusion);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, m)| m.len()).sum()
    }

    /// All parameters concatenated in [`StreamModel::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.parameters()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter().copied())
            .collect()
    }

    /// Inverse of [`StreamModel::flatten`].
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::dim(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter value".into()));
        }
        let mut offset = 0;
        for m in self.parameters_mut() {
            let n = m.len();
            m.as_mut_slice()
                .copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += scale * other`.
    pub(crate) fn add_scaled(&mut self, other: &StreamModel, scale: f64) {
        let theirs: Vec<&Matrix> = other.parameters().into_iter().map(|(_, m)| m).collect();
        for (mine, theirs) in self.parameters_mut().into_iter().zip(theirs) {
            mine.add_scaled(theirs, scale);
        }
    }

    pub(crate) fn zero_like(&self) -> StreamModel {
        let mut out = self.clone();
        for m in out.parameters_mut() {
            m.fill(0.0);
        }
        out
    }

    /// Largest absolute entrywise difference to another model of the same shape.
    pub fn max_abs_diff(&self, other: &StreamModel) -> f64 {
        self.parameters()
            .iter()
            .zip(other.parameters())
            .map(|((_, a), (_, b))| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Gradients of a [`StreamModel`] are stored in a model of identical shape.
pub type StreamGradient = StreamModel;

/// `softmax(Q · (P · X)ᵀ)` for one head and its attended matrix.
pub fn channel_distribution(head: &ChannelHeadParams, attended: &Matrix) -> Result<Vec<f64>> {
    let z = head.projection.matmul(attended)?;
    if head.classifier.cols() != z.cols() {
        return Err(Error::dim(format!(
            "Q has {} columns but the attended matrix has {} frames",
            head.classifier.cols(),
            z.cols()
        )));
    }
    let logits = head.classifier.matmul(&z.transpose())?;
    softmax(logits.as_slice())
}

/// `softmax(D · Mᵀ)` where `D` holds the six channel distributions as columns.
pub fn fuse(fusion: &Matrix, distributions: &Matrix) -> Result<Vec<f64>> {
    if fusion.shape() != (1, FUSED) || distributions.cols() != FUSED {
        return Err(Error::dim(format!(
            "fusion needs M 1x{FUSED} and D kx{FUSED}, got {:?} and {:?}",
            fusion.shape(),
            distributions.shape()
        )));
    }
    let logits = distributions.matmul(&fusion.transpose())?;
    softmax(logits.as_slice())
}

/// Stacks column vectors side by side.
pub fn side_by_side(columns: &[Vec<f64>]) -> Result<Matrix> {
    let rows = columns.first().map(Vec::len).unwrap_or(0);
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::dim("columns differ in length"));
    }
    let mut data = Vec::with_capacity(rows * columns.len());
    for r in 0..rows {
        for c in columns {
            data.push(c[r]);
        }
    }
    Matrix::new(rows, columns.len(), data)
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct StreamOutput {
    /// Fused class distribution.
    pub prediction: Vec<f64>,
    /// Per-channel class distributions, spatial 1..3 then temporal 1..3.
    pub channel_distributions: [Vec<f64>; FUSED],
    pub spatial_attention: [AttentionVector; CHANNELS],
    pub temporal_attention: [AttentionVector; CHANNELS],
}

impl StreamOutput {
    /// The six attention vectors, spatial first.
    pub fn attention(&self) -> impl Iterator<Item = &AttentionVector> {
        self.spatial_attention
            .iter()
            .chain(&self.temporal_attention)
    }
}

/// Reference composition of the public building blocks. Training uses the
/// fused forward/backward below; both routes are checked against each other.
pub fn forward(model: &StreamModel, sample: &FeatureSample) -> Result<StreamOutput> {
    model.config.check_sample(sample)?;
    let spatial: AttentionBank = attention_bank(&model.spatial_channels, &sample.spatial)?;
    let temporal: AttentionBank = attention_bank(&model.temporal_channels, &sample.temporal)?;
    let mut dists = Vec::with_capacity(FUSED);
    for (head, x) in model.spatial_heads.iter().zip(&spatial.attended) {
        dists.push(channel_distribution(head, x)?);
    }
    for (head, x) in model.temporal_heads.iter().zip(&temporal.attended) {
        dists.push(channel_distribution(head, x)?);
    }
    let d = side_by_side(&dists)?;
    let prediction = fuse(&model.fusion, &d)?;
    Ok(StreamOutput {
        prediction,
        channel_distributions: dists.try_into().expect("six channels"),
        spatial_attention: spatial.vectors,
        temporal_attention: temporal.vectors,
    })
}

/// `−ln max(pred[label], 1e-12)`.
pub fn cross_entropy(pred: &[f64], label: usize) -> Result<f64> {
    let p = pred.get(label).ok_or_else(|| {
        Error::Index(format!(
            "label {label} out of range for {} classes",
            pred.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &StreamModel, sample: &FeatureSample) -> Result<usize> {
    Ok(argmax(&forward(model, sample)?.prediction))
}

/// Per-head intermediates.
struct HeadTrace {
    attention: ChannelTrace,
    /// `P · F` per frame, before attention weighting.
    projected: Vec<f64>,
    /// `P · X` per frame.
    z: Vec<f64>,
    dist: Vec<f64>,
}

struct Trace {
    heads: Vec<HeadTrace>,
    prediction: Vec<f64>,
}

fn head_forward(
    channel: &AttentionChannelParams,
    head: &ChannelHeadParams,
    features: &Matrix,
) -> Result<HeadTrace> {
    let attention = channel_forward(channel, features)?;
    let n = features.cols();
    let p = head.projection.as_slice();
    let mut projected = vec![0.0; n];
    for (r, &pr) in p.iter().enumerate() {
        for (acc, f) in projected.iter_mut().zip(features.row(r)) {
            *acc += pr * f;
        }
    }
    let z: Vec<f64> = projected
        .iter()
        .zip(&attention.weights)
        .map(|(a, v)| a * v)
        .collect();
    let k = head.classifier.rows();
    let logits: Vec<f64> = (0..k)
        .map(|c| {
            head.classifier
                .row(c)
                .iter()
                .zip(&z)
                .map(|(q, x)| q * x)
                .sum()
        })
        .collect();
    if logits.iter().any(|x: &f64| !x.is_finite()) {
        return Err(Error::Numeric("non-finite class logits".into()));
    }
    let dist = softmax_unchecked(&logits);
    Ok(HeadTrace {
        attention,
        projected,
        z,
        dist,
    })
}

fn trace_forward(model: &StreamModel, sample: &FeatureSample) -> Result<Trace> {
    model.config.check_sample(sample)?;
    let mut heads = Vec::with_capacity(FUSED);
    for (ch, head) in model.spatial_channels.iter().zip(&model.spatial_heads) {
        heads.push(head_forward(ch, head, &sample.spatial)?);
    }
    for (ch, head) in model.temporal_channels.iter().zip(&model.temporal_heads) {
        heads.push(head_forward(ch, head, &sample.temporal)?);
    }
    let k = model.config.classes;
    let m = model.fusion.as_slice();
    let logits: Vec<f64> = (0..k)
        .map(|c| heads.iter().zip(m).map(|(h, mj)| h.dist[c] * mj).sum())
        .collect();
    if logits.iter().any(|x: &f64| !x.is_finite()) {
        return Err(Error::Numeric("non-finite fused logits".into()));
    }
    Ok(Trace {
        prediction: softmax_unchecked(&logits),
        heads,
    })
}

/// Weights of the per-sample objective `w_ce · CE + w_reg · loss4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleObjective {
    pub cross_entropy: f64,
    pub regularizer: f64,
}

impl SampleObjective {
    /// Plain cross-entropy (loss1 / loss2).
    pub fn classification() -> Self {
        Self {
            cross_entropy: 1.0,
            regularizer: 0.0,
        }
    }
}

/// Loss values and gradient for one sample.
#[derive(Debug, Clone)]
pub struct SampleGradient {
    pub cross_entropy: f64,
    /// Attention regularizer value, computed even when its weight is zero.
    pub regularizer: f64,
    pub gradient: StreamGradient,
}

/// Cross-entropy and attention regularizer of one sample together with the
/// gradient of `objective.cross_entropy · CE + objective.regularizer · loss4`.
pub fn sample_gradient(
    model: &StreamModel,
    sample: &FeatureSample,
    objective: SampleObjective,
) -> Result<SampleGradient> {
    let k = model.config.classes;
    if sample.label >= k {
        return Err(Error::Index(format!(
            "label {} out of range for {k} classes",
            sample.label
        )));
    }
    let trace = trace_forward(model, sample)?;
    let ce = cross_entropy(&trace.prediction, sample.label)?;
    let weights: Vec<&[f64]> = trace
        .heads
        .iter()
        .map(|h| h.attention.weights.as_slice())
        .collect();
    let reg = regularizer::loss4(
        &weights[..CHANNELS],
        &weights[CHANNELS..],
        model.config.frames,
    )?;

    let mut grad = model.zero_like();

    // d CE / d fused logits; zero when the floor is active.
    let mut grad_logits = vec![0.0; k];
    if trace.prediction[sample.label] >= PROB_FLOOR && objective.cross_entropy != 0.0 {
        for (c, g) in grad_logits.iter_mut().enumerate() {
            let target = if c == sample.label { 1.0 } else { 0.0 };
            *g = objective.cross_entropy * (trace.prediction[c] - target);
        }
    }

    let m = model.fusion.as_slice().to_vec();
    {
        let gm = grad.fusion.as_mut_slice();
        for (j, h) in trace.heads.iter().enumerate() {
            gm[j] = h.dist.iter().zip(&grad_logits).map(|(d, g)| d * g).sum();
        }
    }

    for (j, h) in trace.heads.iter().enumerate() {
        let (bank, idx) = if j < CHANNELS {
            (0, j)
        } else {
            (1, j - CHANNELS)
        };
        let (channel, head, features) = if bank == 0 {
            (
                &model.spatial_channels[idx],
                &model.spatial_heads[idx],
                &sample.spatial,
            )
        } else {
            (
                &model.temporal_channels[idx],
                &model.temporal_heads[idx],
                &sample.temporal,
            )
        };
        let n = features.cols();

        let grad_dist: Vec<f64> = grad_logits.iter().map(|g| g * m[j]).collect();
        let grad_class = softmax_backward(&h.dist, &grad_dist);

        let mut grad_z = vec![0.0; n];
        {
            let gq = if bank == 0 {
                grad.spatial_heads[idx].classifier.as_mut_slice()
            } else {
                grad.temporal_heads[idx].classifier.as_mut_slice()
            };
            for (c, &gc) in grad_class.iter().enumerate() {
                let q = head.classifier.row(c);
                for g in 0..n {
                    gq[c * n + g] += gc * h.z[g];
                    grad_z[g] += q[g] * gc;
                }
            }
        }

        let v = &h.attention.weights;
        {
            let gp = if bank == 0 {
                grad.spatial_heads[idx].projection.as_mut_slice()
            } else {
                grad.temporal_heads[idx].projection.as_mut_slice()
            };
            for (r, gpr) in gp.iter_mut().enumerate() {
                let f = features.row(r);
                let mut acc = 0.0;
                for g in 0..n {
                    acc += grad_z[g] * v[g] * f[g];
                }
                *gpr += acc;
            }
        }

        let mut grad_v: Vec<f64> = grad_z
            .iter()
            .zip(&h.projected)
            .map(|(gz, p)| gz * p)
            .collect();
        if objective.regularizer != 0.0 {
            for (gv, r) in grad_v.iter_mut().zip(regularizer::loss4_vector_gradient(v)) {
                *gv += objective.regularizer * r;
            }
        }

        let gch = if bank == 0 {
            &mut grad.spatial_channels[idx]
        } else {
            &mut grad.temporal_channels[idx]
        };
        channel_backward(channel, features, &h.attention, &grad_v, gch);
    }

    Ok(SampleGradient {
        cross_entropy: ce,
        regularizer: reg,
        gradient: grad,
    })
}

/// Gradient with respect to the attention parameters of a penalty on the six
/// attention vectors, given its gradient `penalty_grad(v)` with respect to each
/// vector (spatial channels first). Head and fusion gradients are zero.
pub fn attention_penalty_gradient(
    model: &StreamModel,
    sample: &FeatureSample,
    penalty_grad: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<StreamGradient> {
    model.config.check_sample(sample)?;
    let mut grad = model.zero_like();
    let banks = [
        (
            &model.spatial_channels,
            &sample.spatial,
            &mut grad.spatial_channels,
        ),
        (
            &model.temporal_channels,
            &sample.temporal,
            &mut grad.temporal_channels,
        ),
    ];
    for (channels, features, grads) in banks {
        for (channel, g) in channels.iter().zip(grads.iter_mut()) {
            let trace = channel_forward(channel, features)?;
            let grad_v = penalty_grad(&trace.weights);
            if grad_v.len() != trace.weights.len() {
                return Err(Error::dim(
                    "penalty gradient length differs from the attention vector",
                ));
            }
            channel_backward(channel, features, &trace, &grad_v, g);
        }
    }
    Ok(grad)
}
