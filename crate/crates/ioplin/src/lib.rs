//! Files, runs and the command line around `ioplin-core`.
//!
//! Corpora live on disk as PNG images plus a tab-separated manifest. A
//! training run writes checkpoints, per-iteration label snapshots and a JSON
//! manifest under `runs/<run_id>/`; the evaluation commands read those back.

pub mod cache;
pub mod cli;
pub mod config;
pub mod error;
pub mod imageio;
pub mod manifest;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod store;

pub use config::RunConfig;
pub use error::{Error, Result};
