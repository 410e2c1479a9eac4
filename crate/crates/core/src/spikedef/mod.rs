//! The SpikeDef model-definition dialect.
//!
//! A closed, indentation-structured subset of Python class syntax: each file
//! is a sequence of `class X(Module):` definitions holding an `__init__` of
//! submodule assignments and a `forward` of call expressions. Parsing yields
//! a [`SourceIndex`] with exact line spans for every class, method and
//! assignment.

pub mod builtins;
mod error;
mod index;
pub mod lexer;
mod parser;
mod source;

pub use error::{ErrorCode, ParseError};
pub use index::{Assign, ClassDef, Literal, SourceIndex};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse, parse_str};
pub use source::{slice, SourceFile, SourceReadError, Span, SpanOutOfRange};
