//! SGD and Adam step functions.
//!
//! Both optimizers are pure: they take parameters and a gradient and return
//! the updated parameters. Adam carries its moments in an explicit
//! [`AdamState`] value that the caller threads through successive steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ParameterVector;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("gradient manifest does not match parameter manifest")]
    ManifestMismatch,
    #[error("optimizer state length {state} does not match parameter length {params}")]
    StateLengthMismatch { state: usize, params: usize },
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: default_beta1(), beta2: default_beta2(), epsilon: default_epsilon() }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    hyper: AdamHyper,
}

impl AdamState {
    /// Fresh state (zero moments, `t = 0`) for a parameter vector of the
    /// given length.
    pub fn new(param_len: usize, hyper: AdamHyper) -> Self {
        Self { m: vec![0.0; param_len], v: vec![0.0; param_len], t: 0, hyper }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }

    pub fn first_moments(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moments(&self) -> &[f64] {
        &self.v
    }
}

/// Optimizer selection carried in run configurations. Local training
/// instantiates fresh state from this choice every round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum OptimizerChoice {
    Sgd { lr: f64 },
    Adam(AdamHyper),
}

impl OptimizerChoice {
    pub fn adam_default_lr() -> Self {
        // local learning rate 5e-4
        OptimizerChoice::Adam(AdamHyper::with_lr(5e-4))
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerChoice::Sgd { lr } => *lr,
            OptimizerChoice::Adam(h) => h.lr,
        }
    }
}

/// `out = params - lr * grad`, elementwise.
pub fn sgd_step(
    params: &ParameterVector,
    grad: &ParameterVector,
    lr: f64,
) -> Result<ParameterVector, OptimError> {
    if !params.same_manifest(grad) {
        return Err(OptimError::ManifestMismatch);
    }
    let mut out = params.clone();
    for (p, g) in out.values_mut().iter_mut().zip(grad.values()) {
        *p -= lr * g;
    }
    Ok(out)
}

/// One Adam step with bias correction. Returns the advanced state (with
/// `t + 1`) and the updated parameters.
pub fn adam_step(
    state: AdamState,
    params: &ParameterVector,
    grad: &ParameterVector,
) -> Result<(AdamState, ParameterVector), OptimError> {
    if !params.same_manifest(grad) {
        return Err(OptimError::ManifestMismatch);
    }
    if state.m.len() != params.len() {
        return Err(OptimError::StateLengthMismatch { state: state.m.len(), params: params.len() });
    }
    let AdamState { mut m, mut v, t, hyper } = state;
    let t = t + 1;
    let bias1 = 1.0 - hyper.beta1.powi(t as i32);
    let bias2 = 1.0 - hyper.beta2.powi(t as i32);
    let mut out = params.clone();
    for (i, p) in out.values_mut().iter_mut().enumerate() {
        let g = grad.values()[i];
        m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        *p -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
    Ok((AdamState { m, v, t, hyper }, out))
}
