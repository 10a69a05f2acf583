//! Batch driver: configuration, the per-graph pipeline and output formats.

pub mod config;
pub mod pipeline;

pub use config::{Config, ConfigError, Method};
pub use pipeline::{format_output, GraphOutput, Pipeline, PipelineError};
