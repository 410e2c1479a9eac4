use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    #[serde(rename = "E001")]
    UnexpectedToken,
    #[serde(rename = "E002")]
    BadIndentation,
    #[serde(rename = "E003")]
    UnknownBaseClass,
    #[serde(rename = "E004")]
    DuplicateAttribute,
    #[serde(rename = "E005")]
    UnknownConstructor,
    #[serde(rename = "E006")]
    MissingMethod,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::UnexpectedToken => "E001",
            ErrorCode::BadIndentation => "E002",
            ErrorCode::UnknownBaseClass => "E003",
            ErrorCode::DuplicateAttribute => "E004",
            ErrorCode::UnknownConstructor => "E005",
            ErrorCode::MissingMethod => "E006",
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ErrorCode::UnexpectedToken => "unexpected-token",
            ErrorCode::BadIndentation => "bad-indentation",
            ErrorCode::UnknownBaseClass => "unknown-base-class",
            ErrorCode::DuplicateAttribute => "duplicate-attribute",
            ErrorCode::UnknownConstructor => "unknown-constructor",
            ErrorCode::MissingMethod => "missing-method",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A positioned SpikeDef error with a correction hint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code} {}: {message} at {line}:{col}", code.name())]
pub struct ParseError {
    pub code: ErrorCode,
    pub line: usize,
    pub col: usize,
    pub message: String,
    pub hint: String,
}

impl ParseError {
    pub fn new(
        code: ErrorCode,
        line: usize,
        col: usize,
        message: impl Into<String>,
        hint: impl Into<String>,
    ) -> Self {
        Self {
            code,
            line,
            col,
            message: message.into(),
            hint: hint.into(),
        }
    }
}
