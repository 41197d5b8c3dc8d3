use std::path::PathBuf;

use thiserror::Error;

use crate::bt::BtError;
use crate::grammar::GrammarError;
use crate::sim::ConfigError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("behavior tree error: {0}")]
    Bt(#[from] BtError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
