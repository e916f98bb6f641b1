use forge_core::pipeline::{PipelineError, StoreError};
use forge_core::session::SessionError;
use forge_core::story::EditError;

/// An API error: a stable code plus a message.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ServiceError {
    pub code: &'static str,
    pub message: String,
}

impl ServiceError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new("not-found", what)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("bad-request", message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new("conflict", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new("internal", message)
    }

    /// HTTP status for the code.
    pub fn status(&self) -> u16 {
        match self.code {
            "not-found" => 404,
            "conflict" | "in-use" | "invalid-transition" | "session-expired" | "session-closed" => 409,
            "profile-incomplete" => 422,
            "unauthenticated" => 401,
            "internal" | "storage" => 500,
            "provider-failure" => 502,
            _ => 400,
        }
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;

impl From<rusqlite::Error> for ServiceError {
    fn from(e: rusqlite::Error) -> Self {
        Self::new("storage", e.to_string())
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        Self::new("storage", format!("stored document: {e}"))
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        Self::new("storage", e.to_string())
    }
}

impl From<SessionError> for ServiceError {
    fn from(e: SessionError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

impl From<EditError> for ServiceError {
    fn from(e: EditError) -> Self {
        match e {
            EditError::NoSuchSection(_) => Self::not_found(e.to_string()),
            EditError::EmptyText => Self::bad_request(e.to_string()),
        }
    }
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Precondition(m) => Self::new("profile-incomplete", m),
            PipelineError::NoSuchSection(_) | PipelineError::NoSuchJob(_) => Self::not_found(e.to_string()),
            PipelineError::NotIllustrated => Self::bad_request(e.to_string()),
            PipelineError::Stage(f) => Self::new("provider-failure", format!("{}: {}", f.stage, f.reason)),
            PipelineError::Store(s) => s.into(),
        }
    }
}
