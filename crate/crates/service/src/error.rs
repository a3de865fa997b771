use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("case `{0}` not found")]
    CaseNotFound(String),
    #[error("specimen `{0}` not found")]
    SpecimenNotFound(String),
    #[error("case has no questioned signature")]
    MissingQuestioned,
    #[error("case has no reference signatures")]
    NoReferences,
    #[error("UBM `{0}` is not loaded")]
    UbmNotLoaded(String),
    #[error("no report for this case")]
    ReportNotFound,
    #[error("invalid role `{0}`; expected `questioned` or `reference`")]
    InvalidRole(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("upload of {size} bytes exceeds the {limit}-byte limit")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("image is {width}x{height}; each side must be at most {limit} px")]
    ImageTooLarge { width: u32, height: u32, limit: u32 },
    #[error(transparent)]
    Pipeline(#[from] sigproof_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::CaseNotFound(_) => "CASE_NOT_FOUND",
            ApiError::SpecimenNotFound(_) => "SPECIMEN_NOT_FOUND",
            ApiError::MissingQuestioned => "MISSING_QUESTIONED",
            ApiError::NoReferences => "NO_REFERENCES",
            ApiError::UbmNotLoaded(_) => "UBM_NOT_LOADED",
            ApiError::ReportNotFound => "REPORT_NOT_FOUND",
            ApiError::InvalidRole(_) => "INVALID_ROLE",
            ApiError::InvalidConfig(_) => "INVALID_CONFIG",
            ApiError::PayloadTooLarge { .. } => "PAYLOAD_TOO_LARGE",
            ApiError::ImageTooLarge { .. } => "IMAGE_TOO_LARGE",
            ApiError::Pipeline(e) => e.code(),
            ApiError::Internal(_) => "INTERNAL",
        }
    }

    pub fn status(&self) -> StatusCode {
        use sigproof_core::Error as E;
        match self {
            ApiError::CaseNotFound(_) | ApiError::SpecimenNotFound(_) | ApiError::ReportNotFound => StatusCode::NOT_FOUND,
            ApiError::MissingQuestioned | ApiError::NoReferences | ApiError::UbmNotLoaded(_) => StatusCode::CONFLICT,
            ApiError::InvalidRole(_) | ApiError::InvalidConfig(_) => StatusCode::BAD_REQUEST,
            ApiError::PayloadTooLarge { .. } | ApiError::ImageTooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            ApiError::Pipeline(E::Io(_) | E::IoFailure { .. }) | ApiError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            ApiError::Pipeline(E::UnsupportedFormat(_) | E::UnreadableFile { .. }) => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            ApiError::Pipeline(_) => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }

    fn detail(&self) -> Value {
        use serde_json::json;
        match self {
            ApiError::CaseNotFound(id) => json!({ "case_id": id }),
            ApiError::SpecimenNotFound(id) => json!({ "specimen_id": id }),
            ApiError::UbmNotLoaded(id) => json!({ "ubm_id": id }),
            ApiError::PayloadTooLarge { size, limit } => json!({ "size": size, "limit": limit }),
            ApiError::ImageTooLarge { width, height, limit } => {
                json!({ "width": width, "height": height, "limit": limit })
            }
            _ => Value::Null,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().into(),
            message: self.to_string(),
            detail: self.detail(),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Pipeline(e.into())
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::Pipeline(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
