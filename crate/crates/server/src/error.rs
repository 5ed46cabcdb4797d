use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use vibraforge::pattern::PatternError;
use vibraforge::service::ServiceError;

#[derive(Debug)]
pub struct ApiError(pub ServiceError);

#[derive(Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        Self(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let (error, field) = match &self.0 {
            ServiceError::NotFound { .. } => ("not_found", None),
            ServiceError::Validation { field, .. } => ("validation", Some(field.clone())),
            ServiceError::Pattern(p) => ("validation", pattern_field(p)),
            ServiceError::Conflict(_) => ("conflict", None),
            ServiceError::Internal(_) => ("internal", None),
        };
        let body = ErrorBody {
            error,
            message: self.0.to_string(),
            field,
        };
        (status, Json(body)).into_response()
    }
}

fn pattern_field(e: &PatternError) -> Option<String> {
    match e {
        PatternError::Validation { field, .. } | PatternError::Parse { field, .. } => Some(field.clone()),
        PatternError::Aliasing { .. } => Some("rate_hz".into()),
        PatternError::Capacity(_) => Some("chains".into()),
        PatternError::Overlap { .. } => Some("assignments".into()),
        PatternError::Segment(_) => None,
    }
}
