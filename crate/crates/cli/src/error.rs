use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("certificate failed: {}", .0.join("; "))]
    Certificate(Vec<String>),
    #[error(transparent)]
    Core(sgp_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit code: 1 for input and hypothesis problems, 2 for solver
    /// failures, 3 for certificate failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => 2,
            CliError::Certificate(_) => 3,
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<sgp_core::Error> for CliError {
    fn from(e: sgp_core::Error) -> Self {
        use sgp_core::Error as E;
        match e {
            E::Hypothesis(s) => CliError::Hypothesis(s),
            E::ZeroCoupling => CliError::Hypothesis("H3 (||h||_1 > 0)".into()),
            E::OutsideRegion { .. } => CliError::Hypothesis(format!("H2 ({e})")),
            E::NonConvergence { .. } | E::NoAdmissibleStart(_) => CliError::Solver(e.to_string()),
            other => CliError::Core(other),
        }
    }
}
