//! Per-frame multi-channel self-attention.
//!
//! A channel scores every column (frame) of a feature matrix with
//! `u · act(W · F)`, normalizes the scores with a softmax over frames and
//! rescales each frame column by its weight. Three channels that differ only
//! in their activation (sigmoid, tanh, leaky ReLU) make up one bank; a stream
//! has one bank over the spatial matrix and one over the temporal matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{softmax, softmax_backward, softmax_unchecked, Activation, Matrix};

/// Channels per attention bank.
pub const CHANNELS: usize = 3;

/// Frames of an untrimmed video that carry the action, `[offset, offset + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub offset: usize,
    pub length: usize,
}

impl Segment {
    pub fn contains(&self, frame: usize) -> bool {
        frame >= self.offset && frame < self.offset + self.length
    }
}

/// One video: an `s × G` appearance matrix and a `t × (G−1)` motion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSample {
    pub spatial: Matrix,
    pub temporal: Matrix,
    pub label: usize,
    pub trimmed: bool,
    pub video_id: String,
    /// Ground-truth action segment, when known. Never used for training.
    pub signal_segment: Option<Segment>,
}

impl FeatureSample {
    pub fn new(
        spatial: Matrix,
        temporal: Matrix,
        label: usize,
        trimmed: bool,
        video_id: impl Into<String>,
    ) -> Result<Self> {
        let frames = spatial.cols();
        if frames < 2 {
            return Err(Error::dim(format!("need at least 2 frames, got {frames}")));
        }
        if temporal.cols() != frames - 1 {
            return Err(Error::dim(format!(
                "temporal matrix has {} columns, expected G-1 = {}",
                temporal.cols(),
                frames - 1
            )));
        }
        Ok(Self {
            spatial,
            temporal,
            label,
            trimmed,
            video_id: video_id.into(),
            signal_segment: None,
        })
    }

    pub fn with_segment(mut self, segment: Segment) -> Self {
        self.signal_segment = Some(segment);
        self
    }

    /// Number of frames `G`.
    pub fn frames(&self) -> usize {
        self.spatial.cols()
    }
}

/// `W ∈ R^{h×d}`, `u ∈ R^{1×h}` and the channel's activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionChannelParams {
    #[serde(rename = "W")]
    pub weight: Matrix,
    #[serde(rename = "u")]
    pub score: Matrix,
    pub activation: Activation,
}

impl AttentionChannelParams {
    pub fn new(weight: Matrix, score: Matrix, activation: Activation) -> Result<Self> {
        if score.rows() != 1 || score.cols() != weight.rows() {
            return Err(Error::dim(format!(
                "score vector is {}x{}, expected 1x{}",
                score.rows(),
                score.cols(),
                weight.rows()
            )));
        }
        Ok(Self {
            weight,
            score,
            activation,
        })
    }

    pub fn zeros(hidden: usize, input: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(hidden, input),
            score: Matrix::zeros(1, hidden),
            activation,
        }
    }

    pub fn random<R: Rng>(
        hidden: usize,
        input: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: glorot(hidden, input, rng),
            score: glorot(1, hidden, rng),
            activation,
        }
    }

    pub fn hidden(&self) -> usize {
        self.weight.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// The activation used by channel `j` of a bank: sigmoid, tanh, leaky ReLU.
pub fn channel_activation(j: usize, leaky_slope: f64) -> Activation {
    match j {
        0 => Activation::Sigmoid,
        1 => Activation::Tanh,
        _ => Activation::LeakyRelu { slope: leaky_slope },
    }
}

/// Uniform Glorot initialization, bound `sqrt(6 / (rows + cols))`.
pub(crate) fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Matrix::new(rows, cols, data).expect("glorot draws are finite")
}

/// A probability vector over frames.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVector(Vec<f64>);

impl AttentionVector {
    /// Accepts strictly positive weights summing to one within 1e-9.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::dim("empty attention vector"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| w.is_nan() || *w <= 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric(format!(
                "attention weights must be positive and sum to 1 (sum = {total})"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Shannon entropy in nats; weights that underflowed to zero contribute nothing.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }
}

impl AsRef<[f64]> for AttentionVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Intermediate values of one channel, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ChannelTrace {
    /// `W · F`, row-major `h × n`.
    pre: Vec<f64>,
    /// activation of `pre`.
    act: Vec<f64>,
    /// softmax weights over the `n` frames.
    pub(crate) weights: Vec<f64>,
}

fn check_channel_shapes(params: &AttentionChannelParams, features: &Matrix) -> Result<()> {
    if params.weight.cols() != features.rows() {
        return Err(Error::dim(format!(
            "attention W is {}x{} but features have {} rows",
            params.weight.rows(),
            params.weight.cols(),
            features.rows()
        )));
    }
    if params.score.shape() != (1, params.weight.rows()) {
        return Err(Error::dim("attention u must be 1 x hidden"));
    }
    Ok(())
}

pub(crate) fn channel_forward(
    params: &AttentionChannelParams,
    features: &Matrix,
) -> Result<ChannelTrace> {
    check_channel_shapes(params, features)?;
    let n = features.cols();
    let hidden = params.hidden();
    let pre = params.weight.matmul(features)?.as_slice().to_vec();
    let act: Vec<f64> = pre.iter().map(|&x| params.activation.apply(x)).collect();
    let mut logits = vec![0.0; n];
    for (i, &ui) in params.score.as_slice().iter().enumerate() {
        for (l, a) in logits.iter_mut().zip(&act[i * n..(i + 1) * n]) {
            *l += ui * a;
        }
    }
    debug_assert_eq!(act.len(), hidden * n);
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite attention logits".into()));
    }
    let weights = softmax_unchecked(&logits);
    Ok(ChannelTrace { pre, act, weights })
}

/// Gradients of `W` and `u` given the upstream gradient on the attention
/// weights. Accumulates into `grad`.
pub(crate) fn channel_backward(
    params: &AttentionChannelParams,
    features: &Matrix,
    trace: &ChannelTrace,
    grad_weights: &[f64],
    grad: &mut AttentionChannelParams,
) {
    let n = features.cols();
    let d = features.rows();
    let grad_logits = softmax_backward(&trace.weights, grad_weights);
    let u = params.score.as_slice();
    let gu = grad.score.as_mut_slice();
    let gw = grad.weight.as_mut_slice();
    let mut grad_pre = vec![0.0; n];
    for i in 0..params.hidden() {
        let act = &trace.act[i * n..(i + 1) * n];
        let pre = &trace.pre[i * n..(i + 1) * n];
        let mut du = 0.0;
        for g in 0..n {
            du += grad_logits[g] * act[g];
            grad_pre[g] = u[i] * grad_logits[g] * params.activation.derivative(pre[g]);
        }
        gu[i] += du;
        let row = &mut gw[i * d..(i + 1) * d];
        for (r, w) in row.iter_mut().enumerate() {
            let f = features.row(r);
            let mut acc = 0.0;
            for g in 0..n {
                acc += grad_pre[g] * f[g];
            }
            *w += acc;
        }
    }
}

/// `softmax(u · act(W · F))` over the columns of `F`.
pub fn channel_attention(
    params: &AttentionChannelParams,
    features: &Matrix,
) -> Result<AttentionVector> {
    let trace = channel_forward(params, features)?;
    Ok(AttentionVector(trace.weights))
}

/// Scales column `g` of `features` by `attention[g]`.
pub fn attend(features: &Matrix, attention: &AttentionVector) -> Result<Matrix> {
    features.scale_columns(attention.weights())
}

/// Output of one three-channel bank.
#[derive(Debug, Clone)]
pub struct AttentionBank {
    pub vectors: [AttentionVector; CHANNELS],
    pub attended: [Matrix; CHANNELS],
}

/// Runs `channel_attention` and `attend` for each of the three channels.
pub fn attention_bank(
    channels: &[AttentionChannelParams; CHANNELS],
    features: &Matrix,
) -> Result<AttentionBank> {
    let mut vectors = Vec::with_capacity(CHANNELS);
    let mut attended = Vec::with_capacity(CHANNELS);
    for params in channels {
        let v = channel_attention(params, features)?;
        attended.push(attend(features, &v)?);
        vectors.push(v);
    }
    Ok(AttentionBank {
        vectors: vectors.try_into().expect("three channels"),
        attended: attended.try_into().expect("three channels"),
    })
}

/// Weights a raw score vector as an attention vector; used by tests and tools
/// that build attention vectors outside a channel.
pub fn attention_from_scores(scores: &[f64]) -> Result<AttentionVector> {
    Ok(AttentionVector(softmax(scores)?))
}
