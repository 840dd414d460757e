use std::path::PathBuf;

use kslab_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(CoreError),

    #[error("no verdict: {0}")]
    Undecided(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Solver(_) => 3,
            HarnessError::Undecided(_) => 4,
            HarnessError::Io { .. } => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

impl From<CoreError> for HarnessError {
    /// Bad inputs detected by the solver stack count as configuration errors;
    /// everything raised while integrating or iterating is a solver failure.
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidGrid(_)
            | CoreError::InvalidArgument(_)
            | CoreError::LengthMismatch { .. }
            | CoreError::Regime(_)
            | CoreError::InitData(_)
            | CoreError::Bisection(_) => HarnessError::Config(e.to_string()),
            CoreError::Classifier(_) => HarnessError::Undecided(e.to_string()),
            CoreError::NonFinite(_)
            | CoreError::SolverNonConvergence { .. }
            | CoreError::Positivity { .. }
            | CoreError::StepFailed { .. }
            | CoreError::MissingHistory(_)
            | CoreError::StationaryNonConvergence { .. } => HarnessError::Solver(e),
        }
    }
}
