//! Multi-label classifiers over flat parameter vectors.
//!
//! Two desk-scale architectures are provided: a linear model and a
//! one-hidden-layer MLP with ReLU activation. Both produce per-class sigmoid
//! scores and train against mean binary cross-entropy with exact analytic
//! gradients. Parameters live in a single flat `f64` vector with a shape
//! manifest, which is the unit the federation layer transmits and averages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{LabeledBatch, Matrix};
use crate::rng::{next_unit_f64, stream_rng, Stream};

/// Scores are kept strictly inside (0, 1) so that log terms stay finite.
pub const SCORE_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("input width {got} does not match model input_dim {expected}")]
    InputDimMismatch { expected: usize, got: usize },
    #[error("target width {got} does not match model num_classes {expected}")]
    TargetDimMismatch { expected: usize, got: usize },
    #[error("parameter manifest does not match the model spec")]
    ManifestMismatch,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("parameter values have length {got}, manifest requires {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite parameter value at index {0}")]
    NonFiniteValue(usize),
}

/// Architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Mlp { hidden_dim: usize },
}

/// Shape description of one trainable model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self { kind: ModelKind::Linear, input_dim, num_classes }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        Self { kind: ModelKind::Mlp { hidden_dim }, input_dim, num_classes }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::InvalidSpec("input_dim must be >= 1".into()));
        }
        if self.num_classes == 0 {
            return Err(ModelError::InvalidSpec("num_classes must be >= 1".into()));
        }
        if let ModelKind::Mlp { hidden_dim: 0 } = self.kind {
            return Err(ModelError::InvalidSpec("hidden_dim must be >= 1".into()));
        }
        Ok(())
    }

    /// Ordered (name, shape) list of the tensors packed into a
    /// [`ParameterVector`] for this spec. Weight shapes are `[out, in]`.
    pub fn manifest(&self) -> Vec<TensorInfo> {
        match self.kind {
            ModelKind::Linear => vec![
                TensorInfo::new("weight", &[self.num_classes, self.input_dim]),
                TensorInfo::new("bias", &[self.num_classes]),
            ],
            ModelKind::Mlp { hidden_dim } => vec![
                TensorInfo::new("hidden_weight", &[hidden_dim, self.input_dim]),
                TensorInfo::new("hidden_bias", &[hidden_dim]),
                TensorInfo::new("output_weight", &[self.num_classes, hidden_dim]),
                TensorInfo::new("output_bias", &[self.num_classes]),
            ],
        }
    }

    pub fn param_len(&self) -> usize {
        self.manifest().iter().map(TensorInfo::len).sum()
    }
}

/// Name and shape of one tensor inside a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn new(name: &str, shape: &[usize]) -> Self {
        Self { name: name.to_string(), shape: shape.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat model parameters plus the manifest describing their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    manifest: Vec<TensorInfo>,
}

impl ParameterVector {
    pub fn new(manifest: Vec<TensorInfo>, values: Vec<f64>) -> Result<Self, ModelError> {
        let expected: usize = manifest.iter().map(TensorInfo::len).sum();
        if values.len() != expected {
            return Err(ModelError::LengthMismatch { expected, got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteValue(i));
        }
        Ok(Self { values, manifest })
    }

    pub fn zeros(manifest: Vec<TensorInfo>) -> Self {
        let len = manifest.iter().map(TensorInfo::len).sum();
        Self { values: vec![0.0; len], manifest }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn manifest(&self) -> &[TensorInfo] {
        &self.manifest
    }

    pub fn same_manifest(&self, other: &ParameterVector) -> bool {
        self.manifest == other.manifest
    }

    /// Slice of the `i`-th manifest tensor.
    pub fn tensor(&self, i: usize) -> &[f64] {
        let start: usize = self.manifest[..i].iter().map(TensorInfo::len).sum();
        &self.values[start..start + self.manifest[i].len()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn clamp_score(p: f64) -> f64 {
    p.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP)
}

/// Draw initial parameters: each weight uniform in `+-sqrt(6 / fan_in)`,
/// biases zero. Bit-identical for identical `(spec, seed)`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParameterVector, ModelError> {
    spec.validate()?;
    let manifest = spec.manifest();
    let mut rng = stream_rng(seed, Stream::Init, &[]);
    let mut values = Vec::with_capacity(spec.param_len());
    for info in &manifest {
        if info.shape.len() == 2 {
            let fan_in = info.shape[1] as f64;
            let bound = (6.0 / fan_in).sqrt();
            for _ in 0..info.len() {
                values.push((2.0 * next_unit_f64(&mut rng) - 1.0) * bound);
            }
        } else {
            values.extend(std::iter::repeat(0.0).take(info.len()));
        }
    }
    ParameterVector::new(manifest, values)
}

struct LinearView<'a> {
    weight: &'a [f64],
    bias: &'a [f64],
}

struct MlpView<'a> {
    hidden_weight: &'a [f64],
    hidden_bias: &'a [f64],
    output_weight: &'a [f64],
    output_bias: &'a [f64],
}

fn check_params(spec: &ModelSpec, params: &ParameterVector) -> Result<(), ModelError> {
    spec.validate()?;
    if params.manifest() != spec.manifest().as_slice() {
        return Err(ModelError::ManifestMismatch);
    }
    Ok(())
}

fn linear_view<'a>(params: &'a ParameterVector) -> LinearView<'a> {
    LinearView { weight: params.tensor(0), bias: params.tensor(1) }
}

fn mlp_view<'a>(params: &'a ParameterVector) -> MlpView<'a> {
    MlpView {
        hidden_weight: params.tensor(0),
        hidden_bias: params.tensor(1),
        output_weight: params.tensor(2),
        output_bias: params.tensor(3),
    }
}

/// `y = W x + b` for one input row, with `W` stored row-major `[out, in]`.
fn affine(weight: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let in_dim = x.len();
    for (o, (w_row, b)) in out.iter_mut().zip(weight.chunks_exact(in_dim).zip(bias)) {
        let mut acc = *b;
        for (w, v) in w_row.iter().zip(x) {
            acc += w * v;
        }
        *o = acc;
    }
}

/// Per-class probability scores for a batch of inputs.
///
/// Scores are `sigmoid(logits)` clamped into the open interval
/// `(SCORE_CLAMP, 1 - SCORE_CLAMP)`.
pub fn forward(
    spec: &ModelSpec,
    params: &ParameterVector,
    inputs: &Matrix,
) -> Result<Matrix, ModelError> {
    check_params(spec, params)?;
    if inputs.cols() != spec.input_dim {
        return Err(ModelError::InputDimMismatch { expected: spec.input_dim, got: inputs.cols() });
    }
    let mut scores = Matrix::zeros(inputs.rows(), spec.num_classes);
    match spec.kind {
        ModelKind::Linear => {
            let view = linear_view(params);
            for i in 0..inputs.rows() {
                affine(view.weight, view.bias, inputs.row(i), scores.row_mut(i));
                for s in scores.row_mut(i) {
                    *s = clamp_score(sigmoid(*s));
                }
            }
        }
        ModelKind::Mlp { hidden_dim } => {
            let view = mlp_view(params);
            let mut hidden = vec![0.0; hidden_dim];
            for i in 0..inputs.rows() {
                affine(view.hidden_weight, view.hidden_bias, inputs.row(i), &mut hidden);
                for h in &mut hidden {
                    *h = h.max(0.0);
                }
                affine(view.output_weight, view.output_bias, &hidden, scores.row_mut(i));
                for s in scores.row_mut(i) {
                    *s = clamp_score(sigmoid(*s));
                }
            }
        }
    }
    Ok(scores)
}

/// Mean binary cross-entropy over every (example, class) cell, plus the
/// exact analytic gradient with the same manifest as `params`.
pub fn loss_and_grad(
    spec: &ModelSpec,
    params: &ParameterVector,
    batch: &LabeledBatch,
) -> Result<(f64, ParameterVector), ModelError> {
    check_params(spec, params)?;
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if batch.input_dim() != spec.input_dim {
        return Err(ModelError::InputDimMismatch {
            expected: spec.input_dim,
            got: batch.input_dim(),
        });
    }
    if batch.num_classes() != spec.num_classes {
        return Err(ModelError::TargetDimMismatch {
            expected: spec.num_classes,
            got: batch.num_classes(),
        });
    }

    let cells = (batch.len() * spec.num_classes) as f64;
    let mut grad = ParameterVector::zeros(spec.manifest());
    let mut loss = 0.0;

    match spec.kind {
        ModelKind::Linear => {
            let view = linear_view(params);
            let d = spec.input_dim;
            let k = spec.num_classes;
            let (gw, gb) = grad.values_mut().split_at_mut(k * d);
            let mut logits = vec![0.0; k];
            for i in 0..batch.len() {
                let x = batch.inputs.row(i);
                let y = batch.targets.row(i);
                affine(view.weight, view.bias, x, &mut logits);
                for c in 0..k {
                    let p = clamp_score(sigmoid(logits[c]));
                    loss -= y[c] * p.ln() + (1.0 - y[c]) * (1.0 - p).ln();
                    let dz = (p - y[c]) / cells;
                    gb[c] += dz;
                    let gw_row = &mut gw[c * d..(c + 1) * d];
                    for (g, v) in gw_row.iter_mut().zip(x) {
                        *g += dz * v;
                    }
                }
            }
        }
        ModelKind::Mlp { hidden_dim } => {
            let view = mlp_view(params);
            let d = spec.input_dim;
            let h = hidden_dim;
            let k = spec.num_classes;
            let (gw1, rest) = grad.values_mut().split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(k * h);
            let mut pre = vec![0.0; h];
            let mut act = vec![0.0; h];
            let mut logits = vec![0.0; k];
            let mut dz2 = vec![0.0; k];
            for i in 0..batch.len() {
                let x = batch.inputs.row(i);
                let y = batch.targets.row(i);
                affine(view.hidden_weight, view.hidden_bias, x, &mut pre);
                for (a, z) in act.iter_mut().zip(&pre) {
                    *a = z.max(0.0);
                }
                affine(view.output_weight, view.output_bias, &act, &mut logits);
                for c in 0..k {
                    let p = clamp_score(sigmoid(logits[c]));
                    loss -= y[c] * p.ln() + (1.0 - y[c]) * (1.0 - p).ln();
                    dz2[c] = (p - y[c]) / cells;
                }
                for c in 0..k {
                    gb2[c] += dz2[c];
                    let gw2_row = &mut gw2[c * h..(c + 1) * h];
                    for (g, a) in gw2_row.iter_mut().zip(&act) {
                        *g += dz2[c] * a;
                    }
                }
                for j in 0..h {
                    if pre[j] <= 0.0 {
                        continue;
                    }
                    let mut dh = 0.0;
                    for c in 0..k {
                        dh += dz2[c] * view.output_weight[c * h + j];
                    }
                    gb1[j] += dh;
                    let gw1_row = &mut gw1[j * d..(j + 1) * d];
                    for (g, v) in gw1_row.iter_mut().zip(x) {
                        *g += dh * v;
                    }
                }
            }
        }
    }

    Ok((loss / cells, grad))
}
