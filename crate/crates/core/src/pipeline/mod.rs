//! End-to-end orchestration: configuration, artifact files and stages.

pub mod artifact;
pub mod config;
mod stages;

pub use config::RunConfig;
pub use stages::{IngestStats, Pipeline, BASE_MODELS, STAGES};
