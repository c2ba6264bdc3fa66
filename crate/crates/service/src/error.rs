use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use refit_core::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Oov,
    BadRequest,
    VersionConflict,
    NothingToUndo,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::Oov => StatusCode::NOT_FOUND,
            ErrorCode::BadRequest => StatusCode::BAD_REQUEST,
            ErrorCode::VersionConflict | ErrorCode::NothingToUndo => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Error body returned by every endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BadRequest, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::Internal, message)
    }

    pub fn status(&self) -> StatusCode {
        self.code.status()
    }
}

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        let message = err.to_string();
        let (code, detail) = match &err {
            Error::OutOfVocabulary(word) => (ErrorCode::Oov, Some(json!({ "word": word }))),
            Error::VersionMismatch { expected, current } => (
                ErrorCode::VersionConflict,
                Some(json!({ "base_version": expected, "current_version": current })),
            ),
            Error::NothingToUndo => (ErrorCode::NothingToUndo, None),
            Error::Parse { .. }
            | Error::DuplicateWord { .. }
            | Error::EmptyInput
            | Error::InvalidToken(_)
            | Error::DimensionMismatch { .. }
            | Error::ZeroNorm
            | Error::UnknownVersion(_)
            | Error::InvalidSpec(_)
            | Error::InvalidParams(_)
            | Error::ZeroDenominator(_)
            | Error::SingularSystem
            | Error::TooManyMembers { .. }
            | Error::Projection(_) => (ErrorCode::BadRequest, None),
            _ => (ErrorCode::Internal, None),
        };
        ApiError { code, message, detail }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            tracing::error!(message = %self.message, "request failed");
        }
        (self.status(), crate::dto::ApiJson(self)).into_response()
    }
}
