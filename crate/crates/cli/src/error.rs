use std::io;
use std::path::PathBuf;

use hefuse::config::ConfigError;
use hefuse::dataset::DatasetError;
use hefuse::metrics::MetricsError;
use hefuse::protocol::ProtocolError;
use hefuse::{KeyError, MatchError, TemplateError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("keys: {0}")]
    Keys(#[from] KeyError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("dataset: {0}")]
    Template(#[from] TemplateError),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("evaluation: {0}")]
    Metrics(#[from] MetricsError),
    #[error("matching: {0}")]
    Match(#[from] MatchError),
    #[error("encryption: {0}")]
    Ckks(#[from] hefuse::ckks::CkksError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status. 2 is left to argument parsing errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Keys(_) => 5,
            CliError::Dataset(_) | CliError::Template(_) => 6,
            CliError::Protocol(_) => 7,
            CliError::Metrics(_) => 8,
            CliError::Match(_) | CliError::Ckks(_) => 9,
        }
    }
}
