//! Experiment runner: dataset preparation, training sweeps, evaluation,
//! data-portion comparisons and report generation.

pub mod config;
pub mod data;
pub mod forecast;
pub mod pipeline;
pub mod portions;
pub mod report;
pub mod svg;
pub mod sweep;

use std::path::Path;

use stvae_core::metrics::MetricError;
use stvae_core::objectives::ObjectiveError;
use stvae_core::stdata::{ContainerError, DataError};
use stvae_core::stnets::NetError;
use thiserror::Error;

pub use config::{DatasetSource, ExperimentConfig, TrainingOptions, HORIZON};
pub use pipeline::{run_single, RunRecord};
pub use sweep::run_sweep;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("no completed runs to report")]
    EmptyRecords,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}
