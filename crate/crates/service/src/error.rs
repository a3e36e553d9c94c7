use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use scenelabel::io::IoError;
use scenelabel::labeler::LabelError;
use scenelabel::registration::{AlignError, AlignStage};
use scenelabel::session::SessionError;

/// An error response: HTTP status plus a machine-readable class.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub class: &'static str,
    pub message: String,
    pub stage: Option<AlignStage>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<AlignStage>,
}

impl ApiError {
    pub fn new(status: StatusCode, class: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            class,
            message: message.into(),
            stage: None,
        }
    }

    pub fn unknown_scene(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-scene", format!("no scene named {id:?}"))
    }

    pub fn unknown_mesh(key: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-mesh", format!("no mesh named {key:?}"))
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid-request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal-error", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.class, self.message);
        }
        let body = ErrorBody {
            error: self.class,
            message: &self.message,
            stage: self.stage,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<AlignError> for ApiError {
    fn from(e: AlignError) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            class: e.class(),
            message: e.to_string(),
            stage: Some(e.stage),
        }
    }
}

impl From<IoError> for ApiError {
    fn from(e: IoError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io-error", e.to_string())
    }
}

impl From<LabelError> for ApiError {
    fn from(e: LabelError) -> Self {
        let status = match &e {
            LabelError::UnknownMesh(_) => StatusCode::NOT_FOUND,
            LabelError::MissingTrajectory | LabelError::MissingAnnotations => StatusCode::CONFLICT,
            LabelError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.class(), e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Label(l) => l.into(),
            SessionError::Io(io) => io.into(),
            SessionError::NoPlane(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.class(), e.to_string()),
            SessionError::InvalidState { .. } => Self::new(StatusCode::CONFLICT, e.class(), e.to_string()),
        }
    }
}
