use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Model(#[from] fkdmc::Error),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("cannot write JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 config, 3 extinction, 4 non-convergence,
    /// 5 no stable k-step model, 1 anything else.
    pub fn exit_code(&self) -> u8 {
        use fkdmc::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Model(E::InvalidModel(_) | E::InvalidArgument(_) | E::BurnInTooLong { .. } | E::NonIntegrable { .. }) => 2,
            CliError::Model(E::Extinction { .. } | E::NonFinite { .. }) => 3,
            CliError::Model(E::NonConvergence { .. }) => 4,
            CliError::Model(E::StableKNotFound { .. }) => 5,
            CliError::Model(E::Numeric { .. }) | CliError::Io { .. } | CliError::Csv(_) | CliError::Json(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
