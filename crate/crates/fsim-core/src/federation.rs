//! The federated averaging engine.
//!
//! One communication round selects a client cohort, runs local training on
//! each selected client starting from the current global parameters, and
//! replaces the global model with the data-count-weighted mean of the local
//! results: `w = sum_k (n_k / mu) w_k` with `mu = sum_k n_k`.
//!
//! Determinism contract: a run is a pure function of its configuration.
//! The master seed derives one sub-seed per round for selection and one per
//! (round, client) for local training, so client updates may execute on any
//! number of threads without changing any result. Aggregation always sums
//! in ascending client order.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ClientDataset;
use crate::matrix::LabeledBatch;
use crate::metrics::{self, cohort_size, MetricsError};
use crate::model::{self, ModelError, ModelSpec, ParameterVector};
use crate::optim::{self, AdamState, OptimError, OptimizerChoice};
use crate::rng::{next_unit_f64, stream_rng, Stream};

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("invalid federation config: {0}")]
    InvalidConfig(String),
    #[error("client roster is empty")]
    NoClients,
    #[error("client {0} has no examples")]
    EmptyClient(String),
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("no client updates to aggregate")]
    NoUpdates,
    #[error("client updates carry mismatched parameter manifests")]
    ManifestMismatch,
    #[error("update weight n_k must be >= 1")]
    ZeroWeight,
    #[error("fresh update for unknown client index {0}")]
    UnknownClient(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] MetricsError),
}

/// Client sampling strategy for each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Uniform without replacement.
    Uniform,
    /// Successive draws without replacement, weight proportional to `n_k`.
    Proportional,
}

/// Aggregation rule applied at the end of each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    /// Weighted mean over this round's updates only.
    FedAvg,
    /// Weighted mean over the most recent cached parameters of all clients.
    Stale,
}

/// Full configuration of a federated run.
///
/// Serialized field names follow the conventional parameter letters:
/// `C` (client fraction), `E` (local epochs), `B` (mini-batch size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    #[serde(rename = "C")]
    pub client_fraction: f64,
    #[serde(rename = "E")]
    pub local_epochs: u32,
    #[serde(rename = "B")]
    pub batch_size: usize,
    pub rounds: u32,
    pub seed: u64,
    pub optimizer: OptimizerChoice,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerKind,
    #[serde(default = "default_aggregator")]
    pub aggregator: AggregatorKind,
    /// When true, round records carry measured wall-clock seconds. Off by
    /// default so that identical configurations produce byte-identical
    /// reports.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_sampler() -> SamplerKind {
    SamplerKind::Uniform
}

fn default_aggregator() -> AggregatorKind {
    AggregatorKind::FedAvg
}

impl FederationConfig {
    pub fn new(client_fraction: f64, local_epochs: u32, batch_size: usize, rounds: u32, seed: u64, optimizer: OptimizerChoice) -> Self {
        Self {
            client_fraction,
            local_epochs,
            batch_size,
            rounds,
            seed,
            optimizer,
            sampler: default_sampler(),
            aggregator: default_aggregator(),
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<(), FederationError> {
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(FederationError::InvalidConfig(format!(
                "C = {} must lie in (0, 1]",
                self.client_fraction
            )));
        }
        if self.local_epochs == 0 {
            return Err(FederationError::InvalidConfig("E must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(FederationError::InvalidConfig("B must be >= 1".into()));
        }
        if self.rounds == 0 {
            return Err(FederationError::InvalidConfig("rounds must be >= 1".into()));
        }
        let lr = self.optimizer.lr();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(FederationError::InvalidConfig(format!("learning rate {lr} invalid")));
        }
        Ok(())
    }
}

/// One client's contribution to a round: its trained parameters and local
/// example count.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    /// Index into the (id-sorted) client roster.
    pub client_index: usize,
    pub params: ParameterVector,
    pub n_k: usize,
}

/// Per-round log entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Round index, starting at 1.
    pub round: u32,
    /// Selected client indices, sorted ascending.
    pub selected: Vec<usize>,
    /// Total examples across the selected cohort.
    pub mu: usize,
    /// Metric name to value; always carries `pr_auc`.
    pub eval_metrics: BTreeMap<String, f64>,
    /// Measured seconds for the round when timing is enabled, else 0.
    pub wall_time: f64,
}

impl RoundRecord {
    pub fn pr_auc(&self) -> f64 {
        self.eval_metrics.get("pr_auc").copied().unwrap_or(f64::NAN)
    }
}

/// Uniform cohort of `max(1, round(c * n))` distinct clients, sorted.
pub fn select_clients_uniform<R: rand::RngCore>(
    num_clients: usize,
    c: f64,
    rng: &mut R,
) -> Vec<usize> {
    let m = cohort_size(num_clients, c);
    // partial Fisher-Yates: the first m slots become the sample
    let mut pool: Vec<usize> = (0..num_clients).collect();
    for i in 0..m {
        let j = i + (next_unit_f64(rng) * (num_clients - i) as f64) as usize;
        let j = j.min(num_clients - 1);
        pool.swap(i, j);
    }
    let mut selected = pool[..m].to_vec();
    selected.sort_unstable();
    selected
}

/// Weighted cohort without replacement: successive draws with probability
/// proportional to `n_k` among the not-yet-selected clients, sorted.
pub fn select_clients_proportional<R: rand::RngCore>(
    sizes: &[usize],
    c: f64,
    rng: &mut R,
) -> Vec<usize> {
    let n = sizes.len();
    let m = cohort_size(n, c);
    let mut weights: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let mut total: f64 = weights.iter().sum();
    let mut selected = Vec::with_capacity(m);
    for _ in 0..m {
        let target = next_unit_f64(rng) * total;
        let mut acc = 0.0;
        let mut chosen = usize::MAX;
        for (i, w) in weights.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            acc += w;
            if target < acc {
                chosen = i;
                break;
            }
        }
        if chosen == usize::MAX {
            // numerical tail: fall back to the last remaining client
            chosen = weights.iter().rposition(|w| *w > 0.0).expect("m <= n by construction");
        }
        total -= weights[chosen];
        weights[chosen] = 0.0;
        selected.push(chosen);
    }
    selected.sort_unstable();
    selected
}

/// Run `epochs` of local training on one client, starting from a copy of
/// the global parameters. Each epoch shuffles the client's examples with
/// the caller-provided generator and walks mini-batches of `batch_size`
/// (the final short batch is trained on). Optimizer state starts fresh.
pub fn local_update<R: rand::RngCore>(
    spec: &ModelSpec,
    global: &ParameterVector,
    client_index: usize,
    client: &ClientDataset,
    epochs: u32,
    batch_size: usize,
    optimizer: OptimizerChoice,
    rng: &mut R,
) -> Result<ClientUpdate, FederationError> {
    let n = client.n_k();
    if n == 0 {
        return Err(FederationError::EmptyClient(client.client_id.clone()));
    }
    if batch_size == 0 {
        return Err(FederationError::InvalidConfig("B must be >= 1".into()));
    }
    let mut params = global.clone();
    let mut adam = match optimizer {
        OptimizerChoice::Adam(hyper) => Some(AdamState::new(params.len(), hyper)),
        OptimizerChoice::Sgd { .. } => None,
    };
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..epochs {
        // Fisher-Yates shuffle into this epoch's batch order
        for i in (1..n).rev() {
            let j = (next_unit_f64(rng) * (i + 1) as f64) as usize;
            order.swap(i, j.min(i));
        }
        for chunk in order.chunks(batch_size) {
            let batch = client.data.select(chunk);
            let (_, grad) = model::loss_and_grad(spec, &params, &batch)?;
            params = match optimizer {
                OptimizerChoice::Sgd { lr } => optim::sgd_step(&params, &grad, lr)?,
                OptimizerChoice::Adam(_) => {
                    let (next, stepped) =
                        optim::adam_step(adam.take().expect("adam state present"), &params, &grad)?;
                    adam = Some(next);
                    stepped
                }
            };
        }
    }
    Ok(ClientUpdate { client_index, params, n_k: n })
}

/// Weighted mean of client updates per `w = sum_k (n_k / mu) w_k`,
/// accumulated in f64 in ascending client order.
pub fn fedavg_aggregate(updates: &[ClientUpdate]) -> Result<ParameterVector, FederationError> {
    if updates.is_empty() {
        return Err(FederationError::NoUpdates);
    }
    let mut order: Vec<&ClientUpdate> = updates.iter().collect();
    order.sort_by_key(|u| u.client_index);
    let first = order[0];
    if order.iter().any(|u| u.n_k == 0) {
        return Err(FederationError::ZeroWeight);
    }
    if order.iter().any(|u| !u.params.same_manifest(&first.params)) {
        return Err(FederationError::ManifestMismatch);
    }
    let mu: usize = order.iter().map(|u| u.n_k).sum();
    let mut out = ParameterVector::zeros(first.params.manifest().to_vec());
    for update in order {
        let weight = update.n_k as f64 / mu as f64;
        for (acc, v) in out.values_mut().iter_mut().zip(update.params.values()) {
            *acc += weight * v;
        }
    }
    Ok(out)
}

/// Server-side cache for stale-parameter aggregation: the most recent
/// parameters of every client, with never-selected clients holding the
/// initial global parameters so that the total weight stays constant.
#[derive(Debug, Clone, PartialEq)]
pub struct StaleCache {
    entries: Vec<(ParameterVector, usize)>,
}

impl StaleCache {
    pub fn new(init: &ParameterVector, sizes: &[usize]) -> Self {
        Self { entries: sizes.iter().map(|&n| (init.clone(), n)).collect() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Overwrite cached entries with this round's fresh updates, then return
/// the weighted mean over the entire cache.
pub fn stale_aggregate(
    cache: &mut StaleCache,
    fresh: &[ClientUpdate],
) -> Result<ParameterVector, FederationError> {
    for update in fresh {
        let slot = cache
            .entries
            .get_mut(update.client_index)
            .ok_or(FederationError::UnknownClient(update.client_index))?;
        slot.0 = update.params.clone();
    }
    let all: Vec<ClientUpdate> = cache
        .entries
        .iter()
        .enumerate()
        .map(|(i, (params, n_k))| ClientUpdate { client_index: i, params: params.clone(), n_k: *n_k })
        .collect();
    fedavg_aggregate(&all)
}

/// Outcome of a full federated run.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationRun {
    pub records: Vec<RoundRecord>,
    pub final_params: ParameterVector,
}

/// Execute the round loop: for each round, sample a cohort, train selected
/// clients locally (in parallel), aggregate, and evaluate macro PR-AUC on
/// the held-out set. Fully deterministic in `config.seed`.
pub fn run_federation(
    config: &FederationConfig,
    clients: &[ClientDataset],
    eval: &LabeledBatch,
    spec: &ModelSpec,
) -> Result<FederationRun, FederationError> {
    config.validate()?;
    if clients.is_empty() {
        return Err(FederationError::NoClients);
    }
    if let Some(empty) = clients.iter().find(|c| c.n_k() == 0) {
        return Err(FederationError::EmptyClient(empty.client_id.clone()));
    }
    if eval.is_empty() {
        return Err(FederationError::EmptyEvalSet);
    }

    let sizes: Vec<usize> = clients.iter().map(ClientDataset::n_k).collect();
    let mut params = model::init_params(spec, config.seed)?;
    let mut stale = match config.aggregator {
        AggregatorKind::Stale => Some(StaleCache::new(&params, &sizes)),
        AggregatorKind::FedAvg => None,
    };

    let mut records = Vec::with_capacity(config.rounds as usize);
    for round in 1..=config.rounds {
        let started = Instant::now();
        let mut round_rng = stream_rng(config.seed, Stream::RoundSelection, &[round as u64]);
        let selected = match config.sampler {
            SamplerKind::Uniform => {
                select_clients_uniform(clients.len(), config.client_fraction, &mut round_rng)
            }
            SamplerKind::Proportional => {
                select_clients_proportional(&sizes, config.client_fraction, &mut round_rng)
            }
        };

        let updates: Vec<ClientUpdate> = selected
            .par_iter()
            .map(|&k| {
                let mut client_rng =
                    stream_rng(config.seed, Stream::ClientUpdate, &[round as u64, k as u64]);
                local_update(
                    spec,
                    &params,
                    k,
                    &clients[k],
                    config.local_epochs,
                    config.batch_size,
                    config.optimizer,
                    &mut client_rng,
                )
            })
            .collect::<Result<_, _>>()?;

        params = match (&config.aggregator, stale.as_mut()) {
            (AggregatorKind::FedAvg, _) => fedavg_aggregate(&updates)?,
            (AggregatorKind::Stale, Some(cache)) => stale_aggregate(cache, &updates)?,
            (AggregatorKind::Stale, None) => unreachable!("cache initialized above"),
        };

        let scores = model::forward(spec, &params, &eval.inputs)?;
        let macro_auc = metrics::macro_pr_auc(&scores, &eval.targets)?;
        let mut eval_metrics = BTreeMap::new();
        eval_metrics.insert("pr_auc".to_string(), macro_auc.value);

        let mu = updates.iter().map(|u| u.n_k).sum();
        let wall_time =
            if config.record_wall_time { started.elapsed().as_secs_f64() } else { 0.0 };
        records.push(RoundRecord { round, selected, mu, eval_metrics, wall_time });
    }

    Ok(FederationRun { records, final_params: params })
}
