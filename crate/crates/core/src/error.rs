//! Error taxonomy shared by every component.
//!
//! The first five kinds describe faults a running service can exhibit; the
//! last two (`ContractViolation`, `NotFound`) are framework-level outcomes.
//! There is deliberately no catch-all variant: everything a consumer can
//! observe maps to exactly one of these kinds.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    UnauthorisedAccess,
    CrashFailure,
    OmissionFailure,
    TimingFault,
    TransientFault,
    ContractViolation,
    NotFound,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 7] = [
        ErrorKind::UnauthorisedAccess,
        ErrorKind::CrashFailure,
        ErrorKind::OmissionFailure,
        ErrorKind::TimingFault,
        ErrorKind::TransientFault,
        ErrorKind::ContractViolation,
        ErrorKind::NotFound,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::UnauthorisedAccess => "UnauthorisedAccess",
            ErrorKind::CrashFailure => "CrashFailure",
            ErrorKind::OmissionFailure => "OmissionFailure",
            ErrorKind::TimingFault => "TimingFault",
            ErrorKind::TransientFault => "TransientFault",
            ErrorKind::ContractViolation => "ContractViolation",
            ErrorKind::NotFound => "NotFound",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorKind> {
        ErrorKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("{kind}: {detail}")]
pub struct FrameworkError {
    pub kind: ErrorKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transaction_id: Option<String>,
}

impl FrameworkError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> Self {
        FrameworkError {
            kind,
            detail: detail.into(),
            transaction_id: None,
        }
    }

    pub fn contract(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::ContractViolation, detail)
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::NotFound, detail)
    }

    pub fn unauthorised(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::UnauthorisedAccess, detail)
    }

    pub fn timing(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::TimingFault, detail)
    }

    pub fn crash(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::CrashFailure, detail)
    }

    pub fn omission(detail: impl Into<String>) -> Self {
        Self::new(ErrorKind::OmissionFailure, detail)
    }

    pub fn with_transaction(mut self, id: impl Into<String>) -> Self {
        self.transaction_id = Some(id.into());
        self
    }
}

pub type Result<T> = std::result::Result<T, FrameworkError>;
