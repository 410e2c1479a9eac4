use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::error::{ErrorCode, ParseError};

/// A SpikeDef source file held in memory.
///
/// Text is always UTF-8 with LF line endings and no TAB characters;
/// [`SourceFile::new`] rejects anything else with a positioned error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    path: PathBuf,
    text: String,
    /// Byte offset of the start of every line.
    line_starts: Vec<usize>,
}

impl SourceFile {
    pub fn new(path: impl Into<PathBuf>, text: impl Into<String>) -> Result<Self, ParseError> {
        let text = text.into();
        let mut line_starts = Vec::new();
        let mut at_line_start = true;
        let (mut line, mut col) = (1usize, 1usize);
        for (offset, ch) in text.char_indices() {
            if at_line_start {
                line_starts.push(offset);
                at_line_start = false;
            }
            match ch {
                '\n' => {
                    at_line_start = true;
                    line += 1;
                    col = 1;
                    continue;
                }
                '\r' => {
                    return Err(ParseError::new(
                        ErrorCode::UnexpectedToken,
                        line,
                        col,
                        "carriage return in source",
                        "use LF line endings",
                    ))
                }
                '\t' => {
                    return Err(ParseError::new(
                        ErrorCode::BadIndentation,
                        line,
                        col,
                        "TAB character in source",
                        "use 4-space indentation",
                    ))
                }
                _ => {}
            }
            col += 1;
        }
        Ok(Self {
            path: path.into(),
            text,
            line_starts,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, SourceReadError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes).map_err(|_| SourceReadError::Utf8)?;
        Ok(Self::new(path, text)?)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Number of lines. A final line without a trailing LF still counts.
    pub fn lines(&self) -> usize {
        self.line_starts.len()
    }

    /// Line `n` (1-based) without its terminator.
    pub fn line(&self, n: usize) -> Option<&str> {
        let range = self.line_range(n)?;
        Some(self.text[range].trim_end_matches('\n'))
    }

    fn line_range(&self, n: usize) -> Option<std::ops::Range<usize>> {
        if n == 0 || n > self.lines() {
            return None;
        }
        let start = self.line_starts[n - 1];
        let end = self
            .line_starts
            .get(n)
            .copied()
            .unwrap_or(self.text.len());
        Some(start..end)
    }

    /// Byte range covered by `span`, including the terminator of its last line.
    pub fn byte_range(&self, span: Span) -> Result<std::ops::Range<usize>, SpanOutOfRange> {
        self.check(span)?;
        let start = self.line_starts[span.start_line - 1];
        let end = self.line_range(span.end_line).map(|r| r.end).unwrap_or(start);
        Ok(start..end)
    }

    /// Exact text of the lines in `span`.
    pub fn slice(&self, span: Span) -> Result<&str, SpanOutOfRange> {
        let range = self.byte_range(span)?;
        Ok(&self.text[range])
    }

    fn check(&self, span: Span) -> Result<(), SpanOutOfRange> {
        if span.start_line == 0 || span.start_line > span.end_line || span.end_line > self.lines()
        {
            return Err(SpanOutOfRange {
                span,
                lines: self.lines(),
            });
        }
        Ok(())
    }
}

/// Returns exactly the lines `span.start_line..=span.end_line` of `file`.
pub fn slice(file: &SourceFile, span: Span) -> Result<&str, SpanOutOfRange> {
    file.slice(span)
}

#[derive(Debug, thiserror::Error)]
pub enum SourceReadError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("source is not valid UTF-8")]
    Utf8,
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("span {span} is outside a {lines}-line file")]
pub struct SpanOutOfRange {
    pub span: Span,
    pub lines: usize,
}

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start_line: usize,
    pub end_line: usize,
}

impl Span {
    pub fn new(start_line: usize, end_line: usize) -> Self {
        Self {
            start_line,
            end_line,
        }
    }

    pub fn line(line: usize) -> Self {
        Self::new(line, line)
    }

    pub fn len(&self) -> usize {
        self.end_line + 1 - self.start_line
    }

    pub fn is_empty(&self) -> bool {
        self.end_line < self.start_line
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start_line <= other.start_line && other.end_line <= self.end_line
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start_line <= other.end_line && other.start_line <= self.end_line
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start_line, self.end_line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "class M(Module):\n    def __init__(self):\n        self.fc = Linear(4, 4)\n    def forward(self, x):\n        return self.fc(x)\n";

    fn fixture() -> SourceFile {
        SourceFile::new("m.sd", FIXTURE).unwrap()
    }

    #[test]
    fn counts_lf_terminated_lines() {
        assert_eq!(fixture().lines(), 5);
        assert_eq!(SourceFile::new("e.sd", "").unwrap().lines(), 0);
        assert_eq!(SourceFile::new("e.sd", "a\nb").unwrap().lines(), 2);
    }

    #[test]
    fn slice_single_line() {
        assert_eq!(
            slice(&fixture(), Span::line(3)).unwrap(),
            "        self.fc = Linear(4, 4)\n"
        );
    }

    #[test]
    fn slice_full_range_is_identity() {
        assert_eq!(slice(&fixture(), Span::new(1, 5)).unwrap(), FIXTURE);
    }

    #[test]
    fn slice_out_of_range() {
        let err = slice(&fixture(), Span::new(1, 9)).unwrap_err();
        assert_eq!(err.lines, 5);
        assert!(slice(&fixture(), Span::new(0, 1)).is_err());
        assert!(slice(&fixture(), Span::new(3, 2)).is_err());
    }

    #[test]
    fn rejects_tabs_and_carriage_returns() {
        let err = SourceFile::new("t.sd", "class M(Module):\n\tdef").unwrap_err();
        assert_eq!(err.code, ErrorCode::BadIndentation);
        assert_eq!((err.line, err.col), (2, 1));
        let err = SourceFile::new("t.sd", "class M(Module):\r\n").unwrap_err();
        assert_eq!(err.code, ErrorCode::UnexpectedToken);
        assert_eq!(err.hint, "use LF line endings");
    }
}
