//! Experiment harness for the federated simulation engine: centralized
//! baselines with early stopping, grid searches over (C, E, seed) cells,
//! plot-ready report tables, and reproducible run manifests.

pub mod audio;
pub mod config;
pub mod harness;
pub mod manifest;
pub mod report;
