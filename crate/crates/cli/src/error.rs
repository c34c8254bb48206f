use sparse_cantor::Error;
use thiserror::Error as ThisError;

/// Failure of a command, grouped by exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    /// Gate or invariant failure: exit 1.
    #[error("{0}")]
    Check(String),
    /// Bad arguments, configuration or input files: exit 2.
    #[error("{0}")]
    Usage(String),
    /// Capacity or overflow limits: exit 3.
    #[error("{0}")]
    Capacity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Capacity(_) => 3,
        }
    }

    /// Wraps a library error with the command or section it came from.
    pub fn from_core(ctx: &str, e: Error) -> Self {
        let msg = format!("{ctx}: {e}");
        match e {
            Error::Capacity(_) | Error::Overflow(_) => CliError::Capacity(msg),
            Error::Structure(_)
            | Error::DegenerateMeasure(_)
            | Error::ConstructionFailure { .. }
            | Error::DemoInconclusive(_) => CliError::Check(msg),
            Error::InvalidIndex(_)
            | Error::InsufficientDepth(_)
            | Error::LevelOutOfRange(_)
            | Error::Domain(_)
            | Error::Params(_)
            | Error::EmptySample(_)
            | Error::Grid(_)
            | Error::Format(_) => CliError::Usage(msg),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {e}", path.display()))
    }
}
