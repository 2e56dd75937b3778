//! Experiment runner for the `f3` training engine: flat `key=value`
//! configs, per-epoch metrics files, grid sweeps and the analytical cost
//! report.

pub mod config;
pub mod cost;
pub mod experiment;

use std::io;
use std::path::{Path, PathBuf};

pub use config::{DatasetTag, ExperimentConfig, RawConfig};
pub use experiment::{grid, run, MetricsRecord, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] f3::Error),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Category printed on the error line: shape, usage, io, data or numeric.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
        }
    }

    /// `error: category=<c> message=<m>` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error: category={} message={msg}", self.category())
    }
}
