//! Run state machine, file persistence and the pipeline that drives the
//! agents from goal to evaluated analysis.

mod config;
mod manifest;
mod pipeline;
mod store;

use thiserror::Error;

pub use config::{EmbedderKind, PipelineConfig};
pub use manifest::{ConfigSnapshot, Failure, RunManifest, Stage, Transition};
pub use pipeline::{blueprint_text, Pipeline, QueryOutcome, ARTIFACT_SET};
pub use store::{check_id, read_json, write_atomic, write_json, LogRecord, RunStore, MANIFEST_FILE};

use crate::analytics::AnalyticsError;
use crate::evaluation::EvalError;
use crate::flightlog::FlightLogError;
use crate::knowledge::KnowledgeError;

/// Coarse error classes; the CLI maps them to exit codes and the server to
/// HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    BadInput,
    NotFound,
    Conflict,
    Validation,
    Backend,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Validation => 2,
            ErrorKind::Backend => 3,
            ErrorKind::BadInput | ErrorKind::NotFound | ErrorKind::Conflict => 4,
            ErrorKind::Internal => 1,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorKind::BadInput => 400,
            ErrorKind::NotFound => 404,
            ErrorKind::Conflict => 409,
            ErrorKind::Validation => 422,
            ErrorKind::Backend => 503,
            ErrorKind::Internal => 500,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("goal must not be empty")]
    EmptyGoal,
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("unknown run {0}")]
    UnknownRun(String),
    #[error("unknown log {0}")]
    UnknownLog(String),
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("run {run_id} is {stage}, expected one of {}", expected.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "))]
    WrongStage {
        run_id: String,
        stage: Stage,
        expected: Vec<Stage>,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("run {run_id} failed ({}): {}", failure.code, failure.message)]
    RunFailed { run_id: String, failure: Failure },
    #[error(transparent)]
    FlightLog(#[from] FlightLogError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("i/o error: {0}")]
    Io(String),
}

pub const CODE_BACKEND_UNAVAILABLE: &str = "BackendUnavailable";
pub const CODE_VALIDATION_FAILED: &str = "ValidationFailed";

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::EmptyGoal
            | PipelineError::EmptyQuestion
            | PipelineError::InvalidInput(_)
            | PipelineError::FlightLog(_) => ErrorKind::BadInput,
            PipelineError::UnknownRun(_) | PipelineError::UnknownLog(_) | PipelineError::UnknownArtifact(_) => {
                ErrorKind::NotFound
            }
            PipelineError::WrongStage { .. } => ErrorKind::Conflict,
            PipelineError::InvalidConfig(_) => ErrorKind::BadInput,
            PipelineError::RunFailed { failure, .. } => match failure.code.as_str() {
                CODE_VALIDATION_FAILED => ErrorKind::Validation,
                CODE_BACKEND_UNAVAILABLE | "BackendError" => ErrorKind::Backend,
                _ => ErrorKind::Internal,
            },
            PipelineError::Analytics(e) => match e {
                AnalyticsError::Io { .. } => ErrorKind::Internal,
                _ => ErrorKind::BadInput,
            },
            PipelineError::Eval(e) => match e {
                EvalError::BackendUnavailable(_) | EvalError::Llm(_) => ErrorKind::Backend,
                EvalError::Io { .. } => ErrorKind::Internal,
                _ => ErrorKind::BadInput,
            },
            PipelineError::Knowledge(e) => match e {
                KnowledgeError::BackendUnavailable(_) => ErrorKind::Backend,
                _ => ErrorKind::BadInput,
            },
            PipelineError::Io(_) => ErrorKind::Internal,
        }
    }

    /// Stable machine-readable name.
    pub fn code(&self) -> &str {
        match self {
            PipelineError::EmptyGoal => "EmptyGoal",
            PipelineError::EmptyQuestion => "EmptyQuestion",
            PipelineError::UnknownRun(_) => "UnknownRun",
            PipelineError::UnknownLog(_) => "UnknownLog",
            PipelineError::UnknownArtifact(_) => "UnknownArtifact",
            PipelineError::WrongStage { .. } => "WrongStage",
            PipelineError::InvalidInput(_) => "InvalidInput",
            PipelineError::InvalidConfig(_) => "InvalidConfig",
            PipelineError::RunFailed { failure, .. } => &failure.code,
            PipelineError::FlightLog(e) => match e {
                FlightLogError::BadMagic => "BadMagic",
                FlightLogError::CorruptHeader => "CorruptHeader",
                FlightLogError::CorruptLog(_) => "CorruptLog",
                FlightLogError::EmptyLog => "EmptyLog",
                _ => "InvalidLog",
            },
            PipelineError::Analytics(_) => "AnalysisError",
            PipelineError::Eval(EvalError::BackendUnavailable(_)) => CODE_BACKEND_UNAVAILABLE,
            PipelineError::Eval(_) => "EvalError",
            PipelineError::Knowledge(_) => "KnowledgeError",
            PipelineError::Io(_) => "IoError",
        }
    }
}
