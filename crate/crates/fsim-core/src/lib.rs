//! Deterministic federated-learning simulation engine.
//!
//! The crate simulates federated averaging over a roster of simulated client
//! devices: a server holds flat parameter vectors, clients run local epochs of
//! gradient training on private data, and the server combines the results as a
//! data-count-weighted mean once per communication round. Everything is driven
//! by explicit seeds so that a run is a pure function of its configuration.
//!
//! Module map:
//!
//! - [`model`]: linear and one-hidden-layer multi-label classifiers with
//!   analytic gradients, operating on flat [`model::ParameterVector`]s.
//! - [`optim`]: stateless SGD and stateful Adam step functions.
//! - [`federation`]: client sampling, local updates, weighted aggregation,
//!   the stale-parameter aggregation variant, and the round loop.
//! - [`data`]: clip-manifest ingestion, uploader-based client partitioning,
//!   and a seeded synthetic non-IID task generator.
//! - [`features`]: one-second 50%-overlap patch segmentation, 101x96 log-mel
//!   extraction, label inheritance, and clip-level score averaging.
//! - [`metrics`]: precision-recall curves, per-class and macro PR-AUC, and
//!   the client selection probability calculator.
//! - [`io`]: the versioned little-endian "FSIM1" binary container used for
//!   parameter checkpoints and feature/dataset blobs.

pub mod data;
pub mod features;
pub mod federation;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;

pub use data::{ClientDataset, ClipRecord, Split, SynthTaskSpec, Vocabulary};
pub use federation::{ClientUpdate, FederationConfig, RoundRecord};
pub use matrix::{LabeledBatch, Matrix};
pub use metrics::PrCurve;
pub use model::{ModelKind, ModelSpec, ParameterVector, TensorInfo};
pub use optim::{AdamHyper, AdamState, OptimizerChoice};
