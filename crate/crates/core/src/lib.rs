//! Symbolic compression, density clustering and expert label propagation
//! for long multi-channel time series.
//!
//! The pipeline runs ingest → window → preprocess → index → cluster →
//! summarize over a project directory (see [`project`]); the HTTP service
//! in [`service`] then serves clusters to an annotator and journals labels.

pub mod annotate;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod preprocess;
pub mod project;
pub mod service;
pub mod symbolic;
pub mod synth;

pub use error::{Error, Result};
