use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ecoforge_core::compiler::CompileError;
use ecoforge_core::engine::EngineError;
use ecoforge_core::model::{ParseError, ValidationReport};
use ecoforge_core::ontology::OntologyError;
use ecoforge_core::traits::TraitError;
use serde::Serialize;

/// Machine codes carried in error bodies. Validation findings keep their own
/// codes inside `report`.
pub mod codes {
    pub const SCHEMA_SYNTAX: &str = "SCHEMA_SYNTAX";
    pub const SCHEMA_VIOLATION: &str = "SCHEMA_VIOLATION";
    pub const VALIDATION_FAILED: &str = "VALIDATION_FAILED";
    pub const MODEL_NOT_FOUND: &str = "MODEL_NOT_FOUND";
    pub const MODEL_EXISTS: &str = "MODEL_EXISTS";
    pub const MODEL_ID: &str = "MODEL_ID";
    pub const SESSION_NOT_FOUND: &str = "SESSION_NOT_FOUND";
    pub const NOT_FINISHED: &str = "NOT_FINISHED";
    pub const ILLEGAL_TRANSITION: &str = "ILLEGAL_TRANSITION";
    pub const INVALID_CONFIG: &str = "INVALID_CONFIG";
    pub const CAPACITY_EXCEEDED: &str = "CAPACITY_EXCEEDED";
    pub const INVARIANT_BREACH: &str = "INVARIANT_BREACH";
    pub const UNRESOLVED_PROPERTIES: &str = "UNRESOLVED_PROPERTIES";
    pub const UNSUPPORTED_CONSTRUCT: &str = "UNSUPPORTED_CONSTRUCT";
    pub const UNKNOWN_TARGET: &str = "UNKNOWN_TARGET";
    pub const EMPTY_QUERY: &str = "EMPTY_QUERY";
    pub const UNKNOWN_TAXON: &str = "UNKNOWN_TAXON";
    pub const BACKEND_UNAVAILABLE: &str = "BACKEND_UNAVAILABLE";
    pub const BACKEND_CONFIG: &str = "BACKEND_CONFIG";
    pub const UNKNOWN_INTERACTION: &str = "UNKNOWN_INTERACTION";
    pub const MISSING_SIGN: &str = "MISSING_SIGN";
    pub const ENDPOINT_KIND_MISMATCH: &str = "ENDPOINT_KIND_MISMATCH";
    pub const BAD_REQUEST: &str = "BAD_REQUEST";
    pub const STORAGE: &str = "STORAGE";
}

#[derive(Debug, Clone, PartialEq, Serialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            subject: None,
            report: None,
        }
    }

    pub fn subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, codes::BAD_REQUEST, message)
    }

    pub fn model_not_found(id: &str) -> Self {
        Self::new(404, codes::MODEL_NOT_FOUND, format!("no model `{id}`")).subject(id)
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(404, codes::SESSION_NOT_FOUND, format!("no simulation session `{id}`")).subject(id)
    }

    pub fn invalid(report: ValidationReport) -> Self {
        let mut e = Self::new(
            422,
            codes::VALIDATION_FAILED,
            format!("model has {} validation error(s)", report.errors.len()),
        );
        e.report = Some(report);
        e
    }
}

impl From<ParseError> for ApiError {
    fn from(e: ParseError) -> Self {
        match &e {
            ParseError::Syntax { .. } => ApiError::new(400, codes::SCHEMA_SYNTAX, e.to_string()),
            ParseError::Schema { path, .. } => {
                let path = path.clone();
                ApiError::new(400, codes::SCHEMA_VIOLATION, e.to_string()).subject(path)
            }
        }
    }
}

impl From<CompileError> for ApiError {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Invalid(report) => ApiError::invalid(report),
            CompileError::UnresolvedProperties { ref component, .. } => {
                let c = component.clone();
                ApiError::new(422, codes::UNRESOLVED_PROPERTIES, e.to_string()).subject(c)
            }
            CompileError::UnsupportedConstruct(_) => ApiError::new(422, codes::UNSUPPORTED_CONSTRUCT, e.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let (status, code) = match e {
            EngineError::InvalidConfig(_) => (400, codes::INVALID_CONFIG),
            EngineError::IllegalTransition { .. } => (409, codes::ILLEGAL_TRANSITION),
            EngineError::CapacityExceeded { .. } => (500, codes::CAPACITY_EXCEEDED),
            EngineError::InvariantBreach(_) => (500, codes::INVARIANT_BREACH),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<TraitError> for ApiError {
    fn from(e: TraitError) -> Self {
        match &e {
            TraitError::EmptyQuery => ApiError::new(400, codes::EMPTY_QUERY, e.to_string()),
            TraitError::UnknownTaxon(id) => {
                let id = id.clone();
                ApiError::new(404, codes::UNKNOWN_TAXON, e.to_string()).subject(id)
            }
            TraitError::BackendUnavailable(_) => ApiError::new(503, codes::BACKEND_UNAVAILABLE, e.to_string()),
            TraitError::InvalidFixture { .. } | TraitError::Config(_) => {
                ApiError::new(500, codes::BACKEND_CONFIG, e.to_string())
            }
        }
    }
}

impl From<OntologyError> for ApiError {
    fn from(e: OntologyError) -> Self {
        let (status, code) = match e {
            OntologyError::UnknownInteraction(_) => (404, codes::UNKNOWN_INTERACTION),
            OntologyError::MissingSign(_) => (400, codes::MISSING_SIGN),
            OntologyError::EndpointKindMismatch { .. } => (422, codes::ENDPOINT_KIND_MISMATCH),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ecoforge_core::engine::{Command, Status};

    #[test]
    fn module_errors_map_to_statuses() {
        let cases: Vec<(ApiError, u16, &str)> = vec![
            (TraitError::UnknownTaxon("x".into()).into(), 404, codes::UNKNOWN_TAXON),
            (TraitError::BackendUnavailable("down".into()).into(), 503, codes::BACKEND_UNAVAILABLE),
            (
                EngineError::IllegalTransition {
                    from: Status::Finished,
                    command: Command::Start,
                }
                .into(),
                409,
                codes::ILLEGAL_TRANSITION,
            ),
            (OntologyError::UnknownInteraction("x".into()).into(), 404, codes::UNKNOWN_INTERACTION),
            (CompileError::Invalid(ValidationReport::default()).into(), 422, codes::VALIDATION_FAILED),
        ];
        for (e, status, code) in cases {
            assert_eq!((e.status, e.code), (status, code));
        }
    }
}
