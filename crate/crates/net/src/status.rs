//! Mapping between the error taxonomy and HTTP status codes.
//!
//! The northbound adapter speaks a closed set of statuses. Two fault kinds
//! (timing and omission) share 408, so the status alone cannot name the
//! kind; every error response therefore also carries the kind literally in
//! an `x-error-kind` header and in the JSON error body. Recovery prefers
//! the header, then the body, then the representative kind for the status.

use trellis_core::{ErrorKind, FrameworkError};

/// Response header carrying the exact [`ErrorKind`] name.
pub const ERROR_KIND_HEADER: &str = "x-error-kind";

pub fn status_of(kind: ErrorKind) -> u16 {
    match kind {
        ErrorKind::UnauthorisedAccess => 401,
        ErrorKind::NotFound => 404,
        ErrorKind::TimingFault | ErrorKind::OmissionFailure => 408,
        ErrorKind::ContractViolation => 422,
        ErrorKind::CrashFailure => 502,
        ErrorKind::TransientFault => 503,
    }
}

/// The kind a bare status code stands for when no header survived. 408
/// reads back as a timing fault; the header disambiguates omission.
pub fn representative_kind(status: u16) -> Option<ErrorKind> {
    match status {
        401 => Some(ErrorKind::UnauthorisedAccess),
        404 => Some(ErrorKind::NotFound),
        408 => Some(ErrorKind::TimingFault),
        422 => Some(ErrorKind::ContractViolation),
        502 => Some(ErrorKind::CrashFailure),
        503 => Some(ErrorKind::TransientFault),
        _ => None,
    }
}

pub fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        401 => "Unauthorized",
        404 => "Not Found",
        408 => "Request Timeout",
        422 => "Unprocessable Entity",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Unknown",
    }
}

/// Rebuilds the error a response stands for. `kind_header` is the value of
/// [`ERROR_KIND_HEADER`] if present; `body` is the response body.
pub fn recover_error(status: u16, kind_header: Option<&str>, body: &[u8]) -> FrameworkError {
    if let Ok(err) = serde_json::from_slice::<FrameworkError>(body) {
        return err;
    }
    let kind = kind_header
        .and_then(ErrorKind::parse)
        .or_else(|| representative_kind(status))
        .unwrap_or(ErrorKind::ContractViolation);
    FrameworkError::new(kind, format!("http status {status}"))
}
