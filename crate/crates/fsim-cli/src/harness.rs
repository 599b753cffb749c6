//! Centralized baseline training and the (C, E, seed) grid runner.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use fsim_core::federation::{run_federation, FederationConfig, FederationError, RoundRecord};
use fsim_core::matrix::LabeledBatch;
use fsim_core::metrics;
use fsim_core::model::{self, ModelSpec, ParameterVector};
use fsim_core::optim::{self, AdamState, OptimizerChoice};
use fsim_core::rng::{next_unit_f64, stream_rng, Stream};

use crate::config::GridConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid training config: {0}")]
    Invalid(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}; training aborted")]
    NonFiniteLoss { epoch: u32, batch: usize },
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Optim(#[from] optim::OptimError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] metrics::MetricsError),
    #[error(transparent)]
    Federation(#[from] FederationError),
}

/// Knobs for one centralized training run.
#[derive(Debug, Clone, Copy)]
pub struct CentralOptions {
    pub epochs: u32,
    pub batch_size: usize,
    pub optimizer: OptimizerChoice,
    pub patience: u32,
    pub seed: u64,
}

/// One epoch of the centralized log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_pr_auc: f64,
}

/// Result of centralized training with early stopping.
#[derive(Debug, Clone)]
pub struct CentralRun {
    pub epochs: Vec<EpochRecord>,
    pub best_params: ParameterVector,
    pub best_epoch: u32,
    pub best_pr_auc: f64,
}

/// Train on pooled data, evaluating validation macro PR-AUC after every
/// epoch. Stops once the metric has not improved for `patience` consecutive
/// epochs and returns the best epoch's parameters.
pub fn train_central(
    spec: &ModelSpec,
    train: &LabeledBatch,
    eval: &LabeledBatch,
    opts: &CentralOptions,
) -> Result<CentralRun, HarnessError> {
    if opts.epochs == 0 {
        return Err(HarnessError::Invalid("epochs must be >= 1".into()));
    }
    if opts.batch_size == 0 {
        return Err(HarnessError::Invalid("batch size must be >= 1".into()));
    }
    if opts.patience == 0 {
        return Err(HarnessError::Invalid("patience must be >= 1".into()));
    }
    if train.is_empty() {
        return Err(HarnessError::Invalid("training set is empty".into()));
    }
    if eval.is_empty() {
        return Err(HarnessError::Invalid("evaluation set is empty".into()));
    }

    let n = train.len();
    let mut params = model::init_params(spec, opts.seed)?;
    let mut adam = match opts.optimizer {
        OptimizerChoice::Adam(hyper) => Some(AdamState::new(params.len(), hyper)),
        OptimizerChoice::Sgd { .. } => None,
    };

    let mut log = Vec::new();
    let mut best: Option<(f64, ParameterVector, u32)> = None;
    let mut stall = 0u32;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=opts.epochs {
        let mut rng = stream_rng(opts.seed, Stream::CentralShuffle, &[epoch as u64]);
        for i in (1..n).rev() {
            let j = (next_unit_f64(&mut rng) * (i + 1) as f64) as usize;
            order.swap(i, j.min(i));
        }

        let mut loss_sum = 0.0;
        for (batch_index, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch = train.select(chunk);
            let (loss, grad) = model::loss_and_grad(spec, &params, &batch)?;
            if !loss.is_finite() {
                return Err(HarnessError::NonFiniteLoss { epoch, batch: batch_index });
            }
            loss_sum += loss * chunk.len() as f64;
            params = match opts.optimizer {
                OptimizerChoice::Sgd { lr } => optim::sgd_step(&params, &grad, lr)?,
                OptimizerChoice::Adam(_) => {
                    let (next, stepped) =
                        optim::adam_step(adam.take().expect("adam state"), &params, &grad)?;
                    adam = Some(next);
                    stepped
                }
            };
        }

        let scores = model::forward(spec, &params, &eval.inputs)?;
        let val = metrics::macro_pr_auc(&scores, &eval.targets)?.value;
        log.push(EpochRecord { epoch, train_loss: loss_sum / n as f64, val_pr_auc: val });

        let improved = best.as_ref().map_or(true, |(b, _, _)| val > *b);
        if improved {
            best = Some((val, params.clone(), epoch));
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.patience {
                break;
            }
        }
    }

    let (best_pr_auc, best_params, best_epoch) = best.expect("at least one epoch ran");
    Ok(CentralRun { epochs: log, best_params, best_epoch, best_pr_auc })
}

/// Complete per-round series of one federated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub run_id: String,
    pub c: f64,
    pub e: u32,
    pub b: usize,
    pub seed: u64,
    pub records: Vec<RoundRecord>,
}

impl RunSeries {
    pub fn max_pr_auc(&self) -> f64 {
        self.records.iter().map(RoundRecord::pr_auc).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_pr_auc(&self) -> f64 {
        let sum: f64 = self.records.iter().map(RoundRecord::pr_auc).sum();
        sum / self.records.len() as f64
    }
}

/// One grid cell's outcome; failures are recorded, not propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Ok(RunSeries),
    Failed { run_id: String, error: String },
}

pub fn run_id(c: f64, e: u32, b: usize, seed: u64) -> String {
    format!("C{c}-E{e}-B{b}-s{seed}")
}

/// Run one federated configuration and wrap its records as a [`RunSeries`].
pub fn run_cell(
    spec: &ModelSpec,
    clients: &[fsim_core::data::ClientDataset],
    eval: &LabeledBatch,
    config: &FederationConfig,
) -> Result<RunSeries, HarnessError> {
    let run = run_federation(config, clients, eval, spec)?;
    Ok(RunSeries {
        run_id: run_id(config.client_fraction, config.local_epochs, config.batch_size, config.seed),
        c: config.client_fraction,
        e: config.local_epochs,
        b: config.batch_size,
        seed: config.seed,
        records: run.records,
    })
}

/// Execute every grid cell, in parallel, each with its own derived seed
/// stream. Cell results come back in deterministic cell order regardless of
/// scheduling; a failed cell is recorded and does not abort the grid.
pub fn grid_search(
    grid: &GridConfig,
    task: &fsim_core::data::SynthTask,
    spec: &ModelSpec,
) -> Vec<CellOutcome> {
    grid.cells()
        .par_iter()
        .map(|&(c, e, seed)| {
            let config = grid.cell_config(c, e, seed);
            match run_cell(spec, &task.clients, &task.eval, &config) {
                Ok(series) => CellOutcome::Ok(series),
                Err(err) => CellOutcome::Failed {
                    run_id: run_id(c, e, grid.batch_size, seed),
                    error: err.to_string(),
                },
            }
        })
        .collect()
}
