use pmchat_core::prompt::PromptError;
use pmchat_core::redact::RedactionReport;
use serde_json::{json, Value};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input does not have the expected shape (missing column, too many bad rows).
    #[error("schema error: {0}")]
    Schema(String),
    #[error("event log is empty after cleaning")]
    EmptyLog,
    #[error("{what} not found: {id}")]
    NotFound { what: &'static str, id: String },
    #[error("{0}")]
    Precondition(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("message not sent: {0}")]
    Redaction(RedactionReport),
    #[error("prompt assembly failed: {0}")]
    Prompt(PromptError),
    #[error("rating import rejected: {} invalid row(s)", .0.len())]
    RatingRows(Vec<RowError>),
    #[error("startup failed: {0}")]
    Startup(String),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt stored data: {0}")]
    Corrupt(String),
    #[error("internal error: {0}")]
    Internal(String),
}

/// A rejected input row; `line` is the 1-based line in the source file.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl Error {
    pub fn not_found(what: &'static str, id: impl Into<String>) -> Self {
        Error::NotFound { what, id: id.into() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema_error",
            Error::EmptyLog => "empty_log",
            Error::NotFound { .. } => "not_found",
            Error::Precondition(_) => "precondition_failed",
            Error::Invalid(_) => "invalid_request",
            Error::Redaction(_) => "redaction_violation",
            Error::Prompt(_) => "prompt_error",
            Error::RatingRows(_) => "invalid_rows",
            Error::Startup(_) => "startup_error",
            Error::Io(_) | Error::Corrupt(_) => "storage_error",
            Error::Internal(_) => "internal_error",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            Error::Schema(_) | Error::Invalid(_) | Error::RatingRows(_) => 400,
            Error::NotFound { .. } => 404,
            Error::Precondition(_) => 409,
            Error::EmptyLog | Error::Redaction(_) | Error::Prompt(_) => 422,
            Error::Startup(_) | Error::Io(_) | Error::Corrupt(_) | Error::Internal(_) => 500,
        }
    }

    /// Structured detail for the error envelope. Raw values are masked.
    pub fn details(&self) -> Value {
        match self {
            Error::NotFound { what, id } => json!({ "resource": what, "id": id }),
            Error::Redaction(report) => json!({
                "match_count": report.match_count(),
                "message_indices": report.message_indices,
                "matches": report.masked(),
            }),
            Error::RatingRows(rows) => json!({ "rows": rows }),
            _ => Value::Null,
        }
    }

    pub fn envelope(&self) -> Value {
        json!({ "code": self.code(), "message": self.to_string(), "details": self.details() })
    }
}

impl From<PromptError> for Error {
    fn from(e: PromptError) -> Self {
        Error::Prompt(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Corrupt(e.to_string())
    }
}
