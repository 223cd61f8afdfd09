use std::fmt;

use thiserror::Error;

/// Workflow stage a failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Split,
    Discrepancy,
    CodeEmulator,
    Sampling,
    Validation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Split => "split (step 1)",
            Stage::Discrepancy => "discrepancy emulator (step 2)",
            Stage::CodeEmulator => "code emulator (step 3)",
            Stage::Sampling => "mcmc (step 4)",
            Stage::Validation => "validation (step 5)",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("correlation matrix is ill-conditioned even with nugget {nugget:e} (duplicate design points?)")]
    IllConditioned { nugget: f64 },

    #[error("trend basis matrix is rank deficient (constant input column with a linear trend?)")]
    RankDeficient,

    #[error("emulator fit failed: {0}")]
    FitFailed(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("simulator failed at input row {row}: {message}")]
    Simulator { row: usize, message: String },

    #[error("diagnostics failed: {0}")]
    Diagnostics(String),

    #[error("gate failed: {0}")]
    Gate(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Workflow stage the error was raised in, if tagged.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// The innermost error, with stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
