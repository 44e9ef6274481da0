use std::path::PathBuf;

/// Harness failures, split by the exit status they map to.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Malformed or inconsistent input (exit status 2).
    #[error("{0}")]
    Config(String),
    /// Input file problem tied to a location.
    #[error("{path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: usize,
        message: String,
    },
    /// Failure writing results (exit status 1).
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Failure while running an experiment (exit status 1).
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: uob_reps_core::Error,
    },
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    /// Unreadable input file; reported as a configuration problem.
    pub fn unreadable(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Config(format!("cannot read {}: {source}", path.display()))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Input { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Run { .. } => 1,
        }
    }
}

impl From<uob_reps_core::Error> for HarnessError {
    /// Structural errors from the core are input problems.
    fn from(e: uob_reps_core::Error) -> Self {
        HarnessError::Config(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
