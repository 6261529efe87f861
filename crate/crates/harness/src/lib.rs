//! Experiment orchestration for the biquality toolkit: corruption grids,
//! method runs with resumable CSV records, summaries and SVG reports.

pub mod cli;
pub mod config;
pub mod plots;
pub mod record;
pub mod runner;
pub mod summary;

use std::path::PathBuf;

use thiserror::Error;

pub use config::ExperimentConfig;
pub use record::{RunKey, RunRecord};
pub use runner::{run_experiment, RunReport};
pub use summary::{summarize, Summary};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] biquality::Error),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Input(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
