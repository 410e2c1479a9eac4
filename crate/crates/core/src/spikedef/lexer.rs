//! Line-oriented tokenizer for SpikeDef.
//!
//! Indentation is tracked as a stack of 4-space levels; INDENT/DEDENT tokens
//! are synthesized on level changes. Blank lines and full-line comments are
//! dropped before indentation is considered, so they never open or close a
//! block.

use std::fmt;

use super::error::{ErrorCode, ParseError};
use super::source::SourceFile;

pub const INDENT_WIDTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Class,
    Def,
    Return,
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    LParen,
    RParen,
    Colon,
    Comma,
    Dot,
    Equals,
    Plus,
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl TokenKind {
    pub fn describe(&self) -> String {
        match self {
            TokenKind::Class => "`class`".into(),
            TokenKind::Def => "`def`".into(),
            TokenKind::Return => "`return`".into(),
            TokenKind::Ident(name) => format!("identifier `{name}`"),
            TokenKind::Int(v) => format!("integer `{v}`"),
            TokenKind::Float(v) => format!("float `{v:?}`"),
            TokenKind::Str(s) => format!("string {s:?}"),
            TokenKind::LParen => "`(`".into(),
            TokenKind::RParen => "`)`".into(),
            TokenKind::Colon => "`:`".into(),
            TokenKind::Comma => "`,`".into(),
            TokenKind::Dot => "`.`".into(),
            TokenKind::Equals => "`=`".into(),
            TokenKind::Plus => "`+`".into(),
            TokenKind::Newline => "end of line".into(),
            TokenKind::Indent => "indent".into(),
            TokenKind::Dedent => "dedent".into(),
            TokenKind::Eof => "end of file".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}:{}", self.kind.describe(), self.line, self.col)
    }
}

/// Tokenizes `file`. The returned sequence is empty for a file with no code
/// lines; otherwise it ends with balancing DEDENTs and a single EOF token.
pub fn tokenize(file: &SourceFile) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut depth = 0usize;

    for line_no in 1..=file.lines() {
        let line = file.line(line_no).unwrap_or_default();
        let body = line.trim_start_matches(' ');
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let indent = line.len() - body.len();
        if !indent.is_multiple_of(INDENT_WIDTH) {
            return Err(ParseError::new(
                ErrorCode::BadIndentation,
                line_no,
                1,
                format!("indentation of {indent} spaces is not a multiple of {INDENT_WIDTH}"),
                "use 4-space indentation",
            ));
        }
        let level = indent / INDENT_WIDTH;
        if level > depth + 1 {
            return Err(ParseError::new(
                ErrorCode::BadIndentation,
                line_no,
                1,
                format!("indentation jumps {} levels inward", level - depth),
                "indent by one level (4 spaces) at a time",
            ));
        }
        if level == depth + 1 {
            tokens.push(Token {
                kind: TokenKind::Indent,
                line: line_no,
                col: 1,
            });
        }
        for _ in level..depth {
            tokens.push(Token {
                kind: TokenKind::Dedent,
                line: line_no,
                col: 1,
            });
        }
        depth = level;
        lex_line(body, line_no, indent + 1, &mut tokens)?;
        tokens.push(Token {
            kind: TokenKind::Newline,
            line: line_no,
            col: line.chars().count() + 1,
        });
    }

    if tokens.is_empty() {
        return Ok(tokens);
    }
    let (line, col) = eof_position(file);
    for _ in 0..depth {
        tokens.push(Token {
            kind: TokenKind::Dedent,
            line,
            col,
        });
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        line,
        col,
    });
    Ok(tokens)
}

/// Position one past the last character of the last line.
pub(crate) fn eof_position(file: &SourceFile) -> (usize, usize) {
    let lines = file.lines().max(1);
    let col = file.line(lines).map(|l| l.chars().count()).unwrap_or(0) + 1;
    (lines, col)
}

fn lex_line(
    body: &str,
    line: usize,
    first_col: usize,
    out: &mut Vec<Token>,
) -> Result<(), ParseError> {
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let col = first_col + i;
        let ch = chars[i];
        let single = match ch {
            ' ' => {
                i += 1;
                continue;
            }
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            ':' => Some(TokenKind::Colon),
            ',' => Some(TokenKind::Comma),
            '.' => Some(TokenKind::Dot),
            '=' => Some(TokenKind::Equals),
            '+' => Some(TokenKind::Plus),
            _ => None,
        };
        if let Some(kind) = single {
            out.push(Token { kind, line, col });
            i += 1;
            continue;
        }

        let start = i;
        let kind = if ch.is_ascii_alphabetic() || ch == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match word.as_str() {
                "class" => TokenKind::Class,
                "def" => TokenKind::Def,
                "return" => TokenKind::Return,
                _ => TokenKind::Ident(word),
            }
        } else if ch.is_ascii_digit() {
            lex_number(&chars, &mut i, line, col)?
        } else if ch == '"' || ch == '\'' {
            lex_string(&chars, &mut i, line, col)?
        } else if ch == '#' {
            return Err(ParseError::new(
                ErrorCode::UnexpectedToken,
                line,
                col,
                "comment after code",
                "comments must occupy a full line",
            ));
        } else {
            return Err(ParseError::new(
                ErrorCode::UnexpectedToken,
                line,
                col,
                format!("unexpected character {ch:?}"),
                "remove the character; identifiers are ASCII letters, digits and `_`",
            ));
        };
        out.push(Token { kind, line, col });
    }
    Ok(())
}

fn lex_number(
    chars: &[char],
    i: &mut usize,
    line: usize,
    col: usize,
) -> Result<TokenKind, ParseError> {
    let start = *i;
    let digits = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_ascii_digit() {
            *i += 1;
        }
    };
    digits(i);
    let mut is_float = false;
    if *i + 1 < chars.len() && chars[*i] == '.' && chars[*i + 1].is_ascii_digit() {
        is_float = true;
        *i += 1;
        digits(i);
    }
    if *i < chars.len() && (chars[*i] == 'e' || chars[*i] == 'E') {
        let mut j = *i + 1;
        if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
            j += 1;
        }
        if j < chars.len() && chars[j].is_ascii_digit() {
            is_float = true;
            *i = j;
            digits(i);
        }
    }
    let text: String = chars[start..*i].iter().collect();
    if is_float {
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(TokenKind::Float)
            .ok_or_else(|| {
                ParseError::new(
                    ErrorCode::UnexpectedToken,
                    line,
                    col,
                    format!("float literal `{text}` is out of range"),
                    "use a finite float literal",
                )
            })
    } else {
        text.parse::<i64>().map(TokenKind::Int).map_err(|_| {
            ParseError::new(
                ErrorCode::UnexpectedToken,
                line,
                col,
                format!("integer literal `{text}` is too large"),
                "integer literals must fit in 64 bits",
            )
        })
    }
}

fn lex_string(
    chars: &[char],
    i: &mut usize,
    line: usize,
    col: usize,
) -> Result<TokenKind, ParseError> {
    let quote = chars[*i];
    *i += 1;
    let mut value = String::new();
    while *i < chars.len() {
        let ch = chars[*i];
        *i += 1;
        if ch == quote {
            return Ok(TokenKind::Str(value));
        }
        if ch == '\\' && *i < chars.len() {
            let escaped = chars[*i];
            *i += 1;
            value.push(match escaped {
                'n' => '\n',
                't' => '\t',
                other => other,
            });
        } else {
            value.push(ch);
        }
    }
    Err(ParseError::new(
        ErrorCode::UnexpectedToken,
        line,
        col,
        "unterminated string literal",
        format!("close the string literal with a matching {quote}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(&SourceFile::new("t.sd", text).unwrap())
            .unwrap()
            .into_iter()
            .map(|t| t.kind)
            .collect()
    }

    #[test]
    fn empty_input_yields_no_tokens() {
        assert!(kinds("").is_empty());
        assert!(kinds("\n\n# only a comment\n").is_empty());
    }

    #[test]
    fn five_line_fixture() {
        let toks = kinds("class M(Module):\n    def __init__(self):\n        self.fc = Linear(4, 4)\n    def forward(self, x):\n        return self.fc(x)\n");
        let count = |k: &TokenKind| toks.iter().filter(|t| *t == k).count();
        // class body, __init__ body and forward body each open one block
        assert_eq!(count(&TokenKind::Indent), 3);
        assert_eq!(count(&TokenKind::Dedent), 3);
        assert_eq!(count(&TokenKind::Def), 2);
        assert_eq!(count(&TokenKind::Equals), 1);
        assert_eq!(count(&TokenKind::Newline), 5);
        assert_eq!(toks.last(), Some(&TokenKind::Eof));
        assert_eq!(
            &toks[..8],
            &[
                TokenKind::Class,
                TokenKind::Ident("M".into()),
                TokenKind::LParen,
                TokenKind::Ident("Module".into()),
                TokenKind::RParen,
                TokenKind::Colon,
                TokenKind::Newline,
                TokenKind::Indent,
            ]
        );
    }

    #[test]
    fn three_space_indent_is_rejected() {
        let file = SourceFile::new("t.sd", "class M(Module):\n   def __init__(self):").unwrap();
        let err = tokenize(&file).unwrap_err();
        assert_eq!(err.code, ErrorCode::BadIndentation);
        assert_eq!((err.line, err.col), (2, 1));
        assert_eq!(err.hint, "use 4-space indentation");
    }

    #[test]
    fn double_indent_jump_is_rejected() {
        let file = SourceFile::new("t.sd", "class M(Module):\n        x\n").unwrap();
        let err = tokenize(&file).unwrap_err();
        assert_eq!(err.code, ErrorCode::BadIndentation);
        assert_eq!(err.line, 2);
        assert!(!err.hint.is_empty());
    }

    #[test]
    fn literals() {
        assert_eq!(
            kinds("f(4, 0.9, 1e-3, 'a b', \"q\\\"\")"),
            vec![
                TokenKind::Ident("f".into()),
                TokenKind::LParen,
                TokenKind::Int(4),
                TokenKind::Comma,
                TokenKind::Float(0.9),
                TokenKind::Comma,
                TokenKind::Float(1e-3),
                TokenKind::Comma,
                TokenKind::Str("a b".into()),
                TokenKind::Comma,
                TokenKind::Str("q\"".into()),
                TokenKind::RParen,
                TokenKind::Newline,
                TokenKind::Eof,
            ]
        );
    }

    #[test]
    fn trailing_comment_is_rejected_with_hint() {
        let err = tokenize(&SourceFile::new("t.sd", "x = y # no\n").unwrap()).unwrap_err();
        assert_eq!(err.code, ErrorCode::UnexpectedToken);
        assert_eq!((err.line, err.col), (1, 7));
        assert_eq!(err.hint, "comments must occupy a full line");
    }

    #[test]
    fn unterminated_string() {
        let err = tokenize(&SourceFile::new("t.sd", "f('abc)\n").unwrap()).unwrap_err();
        assert_eq!(err.col, 3);
        assert!(err.hint.contains("close the string"));
    }

    #[test]
    fn comments_do_not_affect_indentation() {
        let toks = kinds("class A(Module):\n# flush-left comment\n    x\n  # odd comment\n    y\n");
        let indents = toks.iter().filter(|t| **t == TokenKind::Indent).count();
        assert_eq!(indents, 1);
    }
}
