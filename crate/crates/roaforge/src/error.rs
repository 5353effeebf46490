use std::path::PathBuf;

/// Failure of a command-line run, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },

    #[error(transparent)]
    Compute(#[from] roaforge_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot encode {what}: {reason}")]
    Encode { what: &'static str, reason: String },
}

impl CliError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::ConfigInvalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// 2 for configuration problems, 3 when no stabilizing initial swarm was
    /// found, 4 for every other numerical or IO failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigRead { .. } | CliError::ConfigParse { .. } | CliError::ConfigInvalid { .. } => 2,
            CliError::Compute(roaforge_core::Error::NoStableSeed { .. }) => 3,
            _ => 4,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
