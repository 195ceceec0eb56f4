use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the audit pipeline.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },

    #[error("judge response could not be parsed: {message} (raw response: {raw:?})")]
    JudgeParse { message: String, raw: String },

    #[error("judge request failed after {attempts} attempt(s): {message}")]
    JudgeNetwork { attempts: u32, message: String },

    #[error("trial {trial_index} failed: {source}")]
    Trial {
        trial_index: u64,
        #[source]
        source: Box<AuditError>,
    },

    #[error("{failed} trial(s) failed, exceeding the failure budget of {budget}")]
    FailureBudget {
        failed: u64,
        budget: u64,
        /// Outcomes of the trials that did complete, in trial order.
        partial_log: Vec<crate::engine::TrialOutcome>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AuditError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        AuditError::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        AuditError::Domain(msg.into())
    }

    /// True for errors caused by the caller's configuration or inputs rather than
    /// by a failure while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            AuditError::Config(_)
                | AuditError::Domain(_)
                | AuditError::Malformed { .. }
                | AuditError::Load { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, AuditError>;
