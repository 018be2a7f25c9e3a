use std::path::PathBuf;

use crate::gateway::GatewayError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("source root {0} does not exist")]
    MissingRoot(PathBuf),

    #[error("no C sources under {0}")]
    NoCSources(PathBuf),

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("ordering violation: `{unit}` depends on `{callee}` which has no final translation")]
    OrderingViolation { unit: String, callee: String },

    #[error("context for `{unit}` needs {needed} tokens after dropping optional parts (budget {budget})")]
    BudgetExceeded { unit: String, needed: usize, budget: usize },

    #[error("toolchain: {0}")]
    Toolchain(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("coverage probe refused: {0}")]
    ProbeRefused(String),

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
