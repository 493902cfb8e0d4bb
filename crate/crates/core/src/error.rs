use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A single validation problem, tagged with the document path it refers to
/// (for example `audience[1].field`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl Issue {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error(
        "resource keys do not match coefficients for principle {principle}: \
         missing {missing:?}, extra {extra:?}"
    )]
    KeyMismatch {
        principle: usize,
        /// Resource names with no coefficient.
        missing: Vec<String>,
        /// Coefficient names with no resource value.
        extra: Vec<String>,
    },

    #[error("{0}")]
    Invalid(String),

    #[error("validation failed: {}", join_issues(.0))]
    Validation(Vec<Issue>),

    #[error("runtime failure: {0}")]
    Runtime(String),
}

fn join_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Flattens the error into path-tagged issues. Errors that do not carry
    /// a document path get an empty one.
    pub fn issues(&self) -> Vec<Issue> {
        match self {
            Error::Validation(issues) => issues.clone(),
            other => vec![Issue::new("", other.to_string())],
        }
    }

    /// True for errors caused by bad input, as opposed to failures while
    /// running an otherwise valid computation.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Runtime(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
