//! Process-level error handling: every failure funnels into one type so
//! the binary can map it onto the documented exit codes.

use std::path::PathBuf;

/// Failures surfaced by the command-line front end.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] reachsched::Error),
    #[error("missing artifact `{artifact}` in {}: run the `{stage}` stage first", dir.display())]
    StageOrder {
        artifact: String,
        dir: PathBuf,
        stage: &'static str,
    },
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl CliError {
    /// Exit 2 flags infeasibility (no accepting run exists); every other
    /// failure is a config, IO, or stage-order error and exits 1.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(reachsched::Error::Infeasible(_)) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
