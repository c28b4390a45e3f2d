use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("no completed run in {}: missing {}", .0.display(), .1)]
    MissingRun(PathBuf, &'static str),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("csv error on {}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Numerical(#[from] matchsim_core::Error),
}

impl HarnessError {
    /// Process exit code: 2 config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        use matchsim_core::Error as E;
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(E::InvalidConfig(_)) => 2,
            HarnessError::Numerical(
                E::EmptyMatch | E::NoVariation | E::NoTreatedUnits | E::DegenerateSample { .. } | E::NonFinite(_),
            ) => 3,
            HarnessError::Numerical(_) => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Csv { path, source }
    }
}
