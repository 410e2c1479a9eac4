use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;

use super::source::{SourceFile, Span};

/// A constructor argument as written in source.
#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    /// A reference to an `__init__` parameter.
    Ident(String),
}

impl Literal {
    /// JSON form used by trees and manifests. Identifiers become strings.
    pub fn to_value(&self) -> Value {
        match self {
            Literal::Int(v) => Value::from(*v),
            Literal::Float(v) => Value::from(*v),
            Literal::Str(s) | Literal::Ident(s) => Value::from(s.as_str()),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Float(v) => write!(f, "{v:?}"),
            Literal::Str(s) => write!(f, "{s:?}"),
            Literal::Ident(s) => f.write_str(s),
        }
    }
}

impl Serialize for Literal {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

/// `self.<attr> = <ctor>(<args>)`, or `self.<attr> = Stack(n, <ctor>(<args>))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assign {
    pub attr: String,
    pub ctor_name: String,
    pub args: Vec<Literal>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stack_count: Option<u32>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDef {
    pub name: String,
    pub span: Span,
    pub init_span: Span,
    pub forward_span: Span,
    /// `__init__` parameters after `self`.
    pub init_params: Vec<String>,
    pub assigns: Vec<Assign>,
}

impl ClassDef {
    pub fn assign(&self, attr: &str) -> Option<&Assign> {
        self.assigns.iter().find(|a| a.attr == attr)
    }
}

/// Classes of one parsed file, in file order.
#[derive(Debug, Clone, Serialize)]
pub struct SourceIndex {
    #[serde(skip)]
    pub file: Arc<SourceFile>,
    pub classes: Vec<ClassDef>,
}

impl PartialEq for SourceIndex {
    fn eq(&self, other: &Self) -> bool {
        self.classes == other.classes && self.file.text() == other.file.text()
    }
}

impl SourceIndex {
    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_at_line(&self, line: usize) -> Option<&ClassDef> {
        self.classes
            .iter()
            .find(|c| c.span.start_line <= line && line <= c.span.end_line)
    }
}
