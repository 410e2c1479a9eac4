//! Recursive-descent parser producing a [`SourceIndex`].
//!
//! Syntax is checked for the whole file first; constructor resolution
//! (unknown names, class-constructor arity) runs afterwards because classes
//! may be referenced before they are defined.

use std::collections::HashSet;
use std::sync::Arc;

use super::builtins::{self, ArgType, MODULE_BASE, STACK};
use super::error::{ErrorCode, ParseError};
use super::index::{Assign, ClassDef, Literal, SourceIndex};
use super::lexer::{tokenize, Token, TokenKind};
use super::source::{SourceFile, Span};

pub fn parse(file: &SourceFile) -> Result<SourceIndex, ParseError> {
    let tokens = tokenize(file)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        last_newline_line: 0,
    };
    let mut classes: Vec<ClassDef> = Vec::new();
    while !parser.at_end() {
        let class = parser.class_def(&classes)?;
        classes.push(class);
    }
    resolve_constructors(&classes, &parser.ctor_sites(&classes))?;
    Ok(SourceIndex {
        file: Arc::new(file.clone()),
        classes,
    })
}

/// Parses `text` as an in-memory file.
pub fn parse_str(text: &str) -> Result<SourceIndex, ParseError> {
    parse(&SourceFile::new("<memory>", text)?)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    last_newline_line: usize,
}

/// Where each constructor name appears, for post-parse resolution errors.
struct CtorSite {
    class: usize,
    assign: usize,
    line: usize,
    col: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        matches!(
            self.tokens.get(self.pos).map(|t| &t.kind),
            None | Some(TokenKind::Eof)
        )
    }

    fn peek(&self) -> &Token {
        // tokenize always terminates a non-empty stream with Eof
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn bump(&mut self) -> Token {
        let tok = self.peek().clone();
        if tok.kind == TokenKind::Newline {
            self.last_newline_line = tok.line;
        }
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: &str, hint: &str) -> ParseError {
        let tok = self.peek();
        let (message, hint) = match tok.kind {
            TokenKind::Indent => (
                "unexpected indent".to_string(),
                "this line is indented deeper than its block".to_string(),
            ),
            _ => (
                format!("expected {expected}, found {}", tok.kind.describe()),
                if hint.is_empty() {
                    format!("expected {expected}")
                } else {
                    hint.to_string()
                },
            ),
        };
        ParseError::new(ErrorCode::UnexpectedToken, tok.line, tok.col, message, hint)
    }

    fn expect(&mut self, kind: TokenKind, expected: &str, hint: &str) -> Result<Token, ParseError> {
        if self.peek().kind == kind {
            Ok(self.bump())
        } else {
            Err(self.unexpected(expected, hint))
        }
    }

    fn ident(&mut self, expected: &str, hint: &str) -> Result<(String, Token), ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(name) => {
                let name = name.clone();
                Ok((name, self.bump()))
            }
            _ => Err(self.unexpected(expected, hint)),
        }
    }

    fn keyword_ident(&mut self, word: &str, hint: &str) -> Result<Token, ParseError> {
        match &self.peek().kind {
            TokenKind::Ident(name) if name == word => Ok(self.bump()),
            _ => Err(self.unexpected(&format!("`{word}`"), hint)),
        }
    }

    fn class_def(&mut self, seen: &[ClassDef]) -> Result<ClassDef, ParseError> {
        let header = self.expect(
            TokenKind::Class,
            "`class`",
            "only class definitions are allowed at top level",
        )?;
        let (name, name_tok) = self.ident(
            "a class name",
            "name the class, e.g. `class Block(Module):`",
        )?;
        if builtins::is_reserved(&name) {
            return Err(ParseError::new(
                ErrorCode::UnexpectedToken,
                name_tok.line,
                name_tok.col,
                format!("`{name}` is a reserved block name"),
                format!("choose a class name other than `{name}`"),
            ));
        }
        if seen.iter().any(|c| c.name == name) {
            return Err(ParseError::new(
                ErrorCode::DuplicateAttribute,
                name_tok.line,
                name_tok.col,
                format!("class `{name}` is defined twice"),
                format!("rename or remove the second definition of `{name}`"),
            ));
        }
        self.expect(TokenKind::LParen, "`(`", "write the base class as `(Module)`")?;
        let (base, base_tok) = self.ident("a base class", "classes must derive from Module")?;
        if base != MODULE_BASE {
            return Err(ParseError::new(
                ErrorCode::UnknownBaseClass,
                base_tok.line,
                base_tok.col,
                format!("unknown base class `{base}`"),
                "classes must derive from Module",
            ));
        }
        self.expect(TokenKind::RParen, "`)`", "close the base class list with `)`")?;
        self.expect(TokenKind::Colon, "`:`", "end the class header with `:`")?;
        self.expect(TokenKind::Newline, "end of line", "start the class body on a new line")?;
        self.expect(
            TokenKind::Indent,
            "an indented class body",
            "indent the class body by 4 spaces",
        )?;

        let mut init: Option<(Span, Vec<String>, Vec<Assign>)> = None;
        let mut forward: Option<Span> = None;
        while self.peek().kind != TokenKind::Dedent {
            let def_tok = self.expect(
                TokenKind::Def,
                "`def`",
                "a class body holds exactly `__init__` and `forward`",
            )?;
            let (method, method_tok) = self.ident(
                "a method name",
                "a class body holds exactly `__init__` and `forward`",
            )?;
            match method.as_str() {
                "__init__" if init.is_some() || forward.is_some() => {
                    let message = if init.is_some() {
                        "duplicate `__init__`"
                    } else {
                        "`__init__` after `forward`"
                    };
                    return Err(ParseError::new(
                        ErrorCode::UnexpectedToken,
                        method_tok.line,
                        method_tok.col,
                        message,
                        "define `__init__` once, before `forward`",
                    ));
                }
                "__init__" => {
                    let params = self.params()?;
                    let assigns = self.init_body()?;
                    let span = Span::new(def_tok.line, self.last_newline_line);
                    init = Some((span, params, assigns));
                }
                "forward" if forward.is_some() => {
                    return Err(ParseError::new(
                        ErrorCode::UnexpectedToken,
                        method_tok.line,
                        method_tok.col,
                        "duplicate `forward`",
                        "define `forward` once",
                    ));
                }
                "forward" if init.is_none() => {
                    return Err(ParseError::new(
                        ErrorCode::MissingMethod,
                        def_tok.line,
                        def_tok.col,
                        format!("class `{name}` has no `__init__` before `forward`"),
                        "add `def __init__(self):` with submodule assignments before `forward`",
                    ));
                }
                "forward" => {
                    self.params()?;
                    self.forward_body()?;
                    forward = Some(Span::new(def_tok.line, self.last_newline_line));
                }
                other => {
                    return Err(ParseError::new(
                        ErrorCode::UnexpectedToken,
                        method_tok.line,
                        method_tok.col,
                        format!("unsupported method `{other}`"),
                        "a class body holds exactly `__init__` and `forward`",
                    ));
                }
            }
        }
        self.bump(); // class body dedent
        let end_line = self.last_newline_line;

        let Some((init_span, init_params, assigns)) = init else {
            return Err(ParseError::new(
                ErrorCode::MissingMethod,
                header.line,
                header.col,
                format!("class `{name}` has no `__init__`"),
                "add `def __init__(self):` with submodule assignments",
            ));
        };
        let Some(forward_span) = forward else {
            return Err(ParseError::new(
                ErrorCode::MissingMethod,
                header.line,
                header.col,
                format!("class `{name}` has no `forward`"),
                "add `def forward(self, x):` ending in a `return`",
            ));
        };
        Ok(ClassDef {
            name,
            span: Span::new(header.line, end_line),
            init_span,
            forward_span,
            init_params,
            assigns,
        })
    }

    /// `( self {, IDENT} ) : NL`
    fn params(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(TokenKind::LParen, "`(`", "method parameters start with `(self`")?;
        self.keyword_ident("self", "the first parameter must be `self`")?;
        let mut params = Vec::new();
        let mut seen = HashSet::new();
        while self.peek().kind == TokenKind::Comma {
            self.bump();
            let (name, tok) = self.ident("a parameter name", "parameters are plain identifiers")?;
            if name == "self" || !seen.insert(name.clone()) {
                return Err(ParseError::new(
                    ErrorCode::UnexpectedToken,
                    tok.line,
                    tok.col,
                    format!("duplicate parameter `{name}`"),
                    "give every parameter a distinct name",
                ));
            }
            params.push(name);
        }
        self.expect(TokenKind::RParen, "`)`", "close the parameter list with `)`")?;
        self.expect(TokenKind::Colon, "`:`", "end the method header with `:`")?;
        self.expect(TokenKind::Newline, "end of line", "start the method body on a new line")?;
        Ok(params)
    }

    fn init_body(&mut self) -> Result<Vec<Assign>, ParseError> {
        self.expect(
            TokenKind::Indent,
            "an indented method body",
            "indent the method body by 4 spaces",
        )?;
        let mut assigns: Vec<Assign> = Vec::new();
        while self.peek().kind != TokenKind::Dedent {
            let self_tok = self.keyword_ident(
                "self",
                "assignments in __init__ look like `self.name = Ctor(args)`",
            )?;
            self.expect(TokenKind::Dot, "`.`", "write `self.<name> = ...`")?;
            let (attr, attr_tok) = self.ident("an attribute name", "write `self.<name> = ...`")?;
            if assigns.iter().any(|a| a.attr == attr) {
                return Err(ParseError::new(
                    ErrorCode::DuplicateAttribute,
                    attr_tok.line,
                    attr_tok.col,
                    format!("attribute `{attr}` is assigned twice"),
                    format!("rename one of the `self.{attr}` assignments"),
                ));
            }
            self.expect(TokenKind::Equals, "`=`", "write `self.<name> = Ctor(args)`")?;
            let (ctor_name, args, stack_count) = self.ctor()?;
            self.expect(
                TokenKind::Newline,
                "end of line",
                "put one assignment per line",
            )?;
            assigns.push(Assign {
                attr,
                ctor_name,
                args,
                stack_count,
                span: Span::line(self_tok.line),
            });
        }
        self.bump();
        Ok(assigns)
    }

    fn ctor(&mut self) -> Result<(String, Vec<Literal>, Option<u32>), ParseError> {
        let (name, name_tok) = self.ident(
            "a constructor",
            "assign a block constructor such as `Linear(4, 4)`",
        )?;
        self.expect(TokenKind::LParen, "`(`", &format!("call the constructor: `{name}(...)`"))?;
        if name == STACK {
            let stack_hint = "Stack takes a repeat count and a constructor, e.g. `Stack(2, Block())`";
            let count_tok = self.peek().clone();
            let count = match count_tok.kind {
                TokenKind::Int(n) => {
                    self.bump();
                    n
                }
                _ => return Err(self.unexpected("a repeat count", stack_hint)),
            };
            if count < 1 || count > u32::MAX as i64 {
                return Err(ParseError::new(
                    ErrorCode::UnknownConstructor,
                    count_tok.line,
                    count_tok.col,
                    format!("invalid Stack count {count}"),
                    "Stack count must be at least 1",
                ));
            }
            self.expect(TokenKind::Comma, "`,`", stack_hint)?;
            if matches!(&self.peek().kind, TokenKind::Ident(n) if n == STACK) {
                return Err(ParseError::new(
                    ErrorCode::UnexpectedToken,
                    self.peek().line,
                    self.peek().col,
                    "nested Stack",
                    "nested Stack is not supported; wrap the inner Stack in a class",
                ));
            }
            let (inner, args, _) = self.ctor()?;
            self.expect(TokenKind::RParen, "`)`", stack_hint)?;
            return Ok((inner, args, Some(count as u32)));
        }

        let mut args = Vec::new();
        let mut arg_toks = Vec::new();
        if self.peek().kind != TokenKind::RParen {
            loop {
                let tok = self.peek().clone();
                let lit = match &tok.kind {
                    TokenKind::Int(v) => Literal::Int(*v),
                    TokenKind::Float(v) => Literal::Float(*v),
                    TokenKind::Str(s) => Literal::Str(s.clone()),
                    TokenKind::Ident(s) => Literal::Ident(s.clone()),
                    _ => {
                        return Err(self.unexpected(
                            "an argument",
                            "arguments are int, float or string literals, or parameter names",
                        ))
                    }
                };
                self.bump();
                args.push(lit);
                arg_toks.push(tok);
                if self.peek().kind == TokenKind::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen, "`)`", "close the argument list with `)`")?;
        if let Some(b) = builtins::builtin(&name) {
            check_builtin_args(b, &args, &arg_toks, &name_tok)?;
        }
        Ok((name, args, None))
    }

    fn forward_body(&mut self) -> Result<(), ParseError> {
        self.expect(
            TokenKind::Indent,
            "an indented method body",
            "indent the method body by 4 spaces",
        )?;
        loop {
            match &self.peek().kind {
                TokenKind::Return => {
                    self.bump();
                    self.expr()?;
                    self.expect(TokenKind::Newline, "end of line", "end the return statement")?;
                    break;
                }
                TokenKind::Ident(name) if name != "self" => {
                    self.bump();
                    self.expect(TokenKind::Equals, "`=`", "statements look like `name = expr`")?;
                    self.expr()?;
                    self.expect(TokenKind::Newline, "end of line", "one statement per line")?;
                }
                _ => {
                    return Err(self.unexpected(
                        "a statement",
                        "forward holds `name = expr` statements and ends with `return expr`",
                    ))
                }
            }
        }
        if self.peek().kind != TokenKind::Dedent {
            return Err(self.unexpected(
                "end of forward",
                "`return` must be the last statement of forward",
            ));
        }
        self.bump();
        Ok(())
    }

    fn expr(&mut self) -> Result<(), ParseError> {
        self.term()?;
        while self.peek().kind == TokenKind::Plus {
            self.bump();
            self.term()?;
        }
        Ok(())
    }

    fn term(&mut self) -> Result<(), ParseError> {
        let hint = "expressions are `self.<module>(...)` calls, variable names, and `+`";
        match &self.peek().kind {
            TokenKind::Ident(name) if name == "self" => {
                self.bump();
                self.expect(TokenKind::Dot, "`.`", "call a submodule as `self.<name>(x)`")?;
                self.ident("a submodule name", "call a submodule as `self.<name>(x)`")?;
                self.expect(TokenKind::LParen, "`(`", "call a submodule as `self.<name>(x)`")?;
                self.expr()?;
                while self.peek().kind == TokenKind::Comma {
                    self.bump();
                    self.expr()?;
                }
                self.expect(TokenKind::RParen, "`)`", "close the call with `)`")?;
                Ok(())
            }
            TokenKind::Ident(_) => {
                self.bump();
                Ok(())
            }
            _ => Err(self.unexpected("an expression", hint)),
        }
    }

    fn ctor_sites(&self, classes: &[ClassDef]) -> Vec<CtorSite> {
        // Re-derive the constructor token position from the assignment line:
        // the constructor is the first identifier after `=`.
        let mut sites = Vec::new();
        for (ci, class) in classes.iter().enumerate() {
            for (ai, assign) in class.assigns.iter().enumerate() {
                let line = assign.span.start_line;
                let mut after_eq = false;
                let mut found = None;
                for tok in self.tokens.iter().filter(|t| t.line == line) {
                    match &tok.kind {
                        TokenKind::Equals => after_eq = true,
                        TokenKind::Ident(n) if after_eq && n == &assign.ctor_name => {
                            found = Some(tok.col);
                            break;
                        }
                        _ => {}
                    }
                }
                sites.push(CtorSite {
                    class: ci,
                    assign: ai,
                    line,
                    col: found.unwrap_or(1),
                });
            }
        }
        sites
    }
}

fn check_builtin_args(
    b: &builtins::Builtin,
    args: &[Literal],
    toks: &[Token],
    name_tok: &Token,
) -> Result<(), ParseError> {
    if args.len() != b.arity() {
        return Err(ParseError::new(
            ErrorCode::UnknownConstructor,
            name_tok.line,
            name_tok.col,
            format!(
                "{} called with {} argument(s); expected {}",
                b.name,
                args.len(),
                b.signature()
            ),
            b.arity_hint(),
        ));
    }
    for ((arg, tok), (pname, ty)) in args.iter().zip(toks).zip(b.params) {
        let ok = matches!(
            (arg, ty),
            (Literal::Ident(_), _) | (Literal::Int(_), _) | (Literal::Float(_), ArgType::Float)
        );
        if !ok {
            return Err(ParseError::new(
                ErrorCode::UnknownConstructor,
                tok.line,
                tok.col,
                format!("argument `{pname}` of {} has the wrong type", b.name),
                format!("argument `{pname}` of {} must be {}", b.name, ty_article(*ty)),
            ));
        }
    }
    Ok(())
}

fn ty_article(ty: ArgType) -> &'static str {
    match ty {
        ArgType::Int => "an int",
        ArgType::Float => "a float",
    }
}

fn resolve_constructors(classes: &[ClassDef], sites: &[CtorSite]) -> Result<(), ParseError> {
    for site in sites {
        let class = &classes[site.class];
        let assign = &class.assigns[site.assign];
        if builtins::is_builtin(&assign.ctor_name) {
        } else if let Some(target) = classes.iter().find(|c| c.name == assign.ctor_name) {
            if target.init_params.len() != assign.args.len() {
                let n = target.init_params.len();
                return Err(ParseError::new(
                    ErrorCode::UnknownConstructor,
                    site.line,
                    site.col,
                    format!(
                        "{} called with {} argument(s); its __init__ takes {n}",
                        target.name,
                        assign.args.len()
                    ),
                    format!(
                        "{} takes {n} argument{}",
                        target.name,
                        if n == 1 { "" } else { "s" }
                    ),
                ));
            }
        } else {
            return Err(ParseError::new(
                ErrorCode::UnknownConstructor,
                site.line,
                site.col,
                format!("unknown constructor `{}`", assign.ctor_name),
                "use a builtin block (Embedding, Linear, LIF, Attention, LayerNorm) or a class defined in this file",
            ));
        }
        for arg in &assign.args {
            if let Literal::Ident(name) = arg {
                if !class.init_params.contains(name) {
                    return Err(ParseError::new(
                        ErrorCode::UnexpectedToken,
                        site.line,
                        site.col,
                        format!("unknown name `{name}` in arguments of `self.{}`", assign.attr),
                        format!("declare `{name}` as a parameter of {}.__init__", class.name),
                    ));
                }
            }
        }
    }
    Ok(())
}
