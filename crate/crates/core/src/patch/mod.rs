//! Validated edits to one module's code segment.
//!
//! A patch replaces exactly the segment [`get_code`](crate::extract::get_code)
//! shows for a module: the whole class for class-kind nodes, the assignment
//! line for builtin leaves. Validation splices the candidate into the file,
//! re-parses it, re-extracts the tree and runs structural checks; applying
//! commits the candidate and bumps the tree version.

mod store;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::extract::{extract_static, DeclSite, ExtractError, ModuleNode, ModuleTree};
use crate::ids;
use crate::spikedef::{parse, ParseError, SourceFile, SourceIndex, Span};

pub use store::{replay_forward, replay_reverse, ModelWorkspace};

pub const CHECK_CLASS_NAME: &str = "class-name-preserved";
pub const CHECK_ATTR_NAME: &str = "attr-name-preserved";
pub const CHECK_METHODS: &str = "methods-present";
pub const CHECK_SIBLINGS: &str = "siblings-unchanged";

#[derive(Debug, thiserror::Error)]
pub enum PatchError {
    #[error("unknown module id `{0}`")]
    NotFound(String),
    #[error("module `{0}` has no source to patch")]
    NoSource(String),
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("patch failed validation")]
    Rejected(Box<ValidationReport>),
    #[error("version conflict: patch is based on version {expected}, current is {actual}")]
    Conflict { expected: u64, actual: u64 },
    #[error("current source does not parse: {0}")]
    Source(#[from] ParseError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("corrupt patch history: {0}")]
    Corrupt(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodePatch {
    pub model_name: String,
    pub module_id: String,
    pub new_text: String,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub note: String,
}

impl CodePatch {
    /// Normalizes CRLF to LF and rejects empty or TAB-bearing text.
    pub fn new(
        model_name: impl Into<String>,
        module_id: impl Into<String>,
        new_text: impl Into<String>,
        author: impl Into<String>,
        note: impl Into<String>,
    ) -> Result<Self, PatchError> {
        let patch = Self {
            model_name: model_name.into(),
            module_id: module_id.into(),
            new_text: new_text.into().replace("\r\n", "\n"),
            author: author.into(),
            note: note.into(),
        };
        patch.check()?;
        Ok(patch)
    }

    fn check(&self) -> Result<(), PatchError> {
        if self.new_text.trim().is_empty() {
            return Err(PatchError::InvalidPatch("new_text is empty".into()));
        }
        if self.new_text.contains('\t') {
            return Err(PatchError::InvalidPatch(
                "new_text contains TAB characters; use 4-space indentation".into(),
            ));
        }
        if self.new_text.contains('\r') {
            return Err(PatchError::InvalidPatch(
                "new_text contains carriage returns; use LF line endings".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn new(name: &str, passed: bool, detail: Option<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: if passed { None } else { detail },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub base_version: u64,
    pub errors: Vec<ParseError>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub patch_id: String,
    pub patch: CodePatch,
    pub applied_at: u64,
    pub old_version: u64,
    pub new_version: u64,
    /// Replaced segment, verbatim.
    pub old_text: String,
    /// Location of `old_text` in the pre-patch source.
    pub span: Span,
}

/// What a module id resolves to for patching.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Target {
    Class { name: String },
    Leaf { class: String, attr: String },
}

struct Resolved {
    target: Target,
    span: Span,
}

fn resolve(tree: &ModuleTree, module_id: &str) -> Result<Resolved, PatchError> {
    let node = tree
        .node(module_id)
        .ok_or_else(|| PatchError::NotFound(module_id.to_string()))?;
    let no_source = || PatchError::NoSource(module_id.to_string());
    if tree.source.is_none() {
        return Err(no_source());
    }
    let span = node.span.ok_or_else(no_source)?;
    let target = if node.is_builtin() {
        let site = node.declared_in.clone().ok_or_else(no_source)?;
        Target::Leaf {
            class: site.class,
            attr: site.attr,
        }
    } else {
        Target::Class {
            name: node.kind.clone(),
        }
    };
    Ok(Resolved { target, span })
}

/// Replaces the lines of `span` in `file` with `new_text`.
pub fn splice(file: &SourceFile, span: Span, new_text: &str) -> Result<String, PatchError> {
    let range = file
        .byte_range(span)
        .map_err(|e| PatchError::InvalidPatch(e.to_string()))?;
    let text = file.text();
    let mut out = String::with_capacity(text.len() + new_text.len());
    out.push_str(&text[..range.start]);
    out.push_str(new_text);
    if !new_text.ends_with('\n') && range.end < text.len() {
        out.push('\n');
    }
    out.push_str(&text[range.end..]);
    Ok(out)
}

/// Number of lines `text` occupies once spliced.
pub(crate) fn line_count(text: &str) -> usize {
    let n = text.matches('\n').count();
    if text.ends_with('\n') {
        n
    } else {
        n + 1
    }
}

/// A validated candidate, ready to commit.
pub(crate) struct Evaluation {
    pub report: ValidationReport,
    pub candidate_text: String,
    pub candidate_tree: Option<ModuleTree>,
    pub old_text: String,
    pub span: Span,
}

pub(crate) fn evaluate(tree: &ModuleTree, patch: &CodePatch) -> Result<Evaluation, PatchError> {
    patch.check()?;
    let resolved = resolve(tree, &patch.module_id)?;
    let file = tree
        .file()
        .ok_or_else(|| PatchError::NoSource(patch.module_id.clone()))?;
    let old_text = file
        .slice(resolved.span)
        .map_err(|_| PatchError::NoSource(patch.module_id.clone()))?
        .to_string();
    let candidate_text = splice(file, resolved.span, &patch.new_text)?;

    let mut errors = Vec::new();
    let parsed: Option<SourceIndex> =
        match SourceFile::new(file.path(), candidate_text.clone()).and_then(|f| parse(&f)) {
            Ok(index) => Some(index),
            Err(e) => {
                errors.push(e);
                None
            }
        };
    let new_lines = Span::new(
        resolved.span.start_line,
        resolved.span.start_line + line_count(&patch.new_text) - 1,
    );

    let mut checks = Vec::new();
    match &resolved.target {
        Target::Class { name } => {
            let found = match &parsed {
                Some(index) => index
                    .classes
                    .iter()
                    .find(|c| c.span.start_line == new_lines.start_line)
                    .map(|c| c.name.clone()),
                None => lexical_class_name(&patch.new_text),
            };
            let passed = found.as_deref() == Some(name.as_str());
            checks.push(Check::new(
                CHECK_CLASS_NAME,
                passed,
                Some(format!(
                    "class `{name}` must keep its name (found {})",
                    found.map(|f| format!("`{f}`")).unwrap_or_else(|| "none".into())
                )),
            ));
        }
        Target::Leaf { class, attr } => {
            let passed = match &parsed {
                Some(index) => index
                    .class_at_line(new_lines.start_line)
                    .filter(|c| &c.name == class)
                    .and_then(|c| c.assign(attr))
                    .is_some_and(|a| new_lines.contains(&a.span)),
                None => lexical_assigns(&patch.new_text).iter().any(|a| a == attr),
            };
            checks.push(Check::new(
                CHECK_ATTR_NAME,
                passed,
                Some(format!("the edit must still assign `self.{attr}`")),
            ));
        }
    }

    let methods_ok = lexical_methods_present(&candidate_text, new_lines.start_line);
    checks.push(Check::new(
        CHECK_METHODS,
        methods_ok,
        Some("the edited class must define both `__init__` and `forward`".into()),
    ));

    let candidate_tree = parsed
        .as_ref()
        .map(|index| extract_static(index, Some(&tree.model_name)));
    let (siblings_ok, detail, candidate_tree) = match candidate_tree {
        Some(Ok(new_tree)) => {
            let before = unaffected(&tree.root, &resolved.target);
            let after = unaffected(&new_tree.root, &resolved.target);
            let changed: Vec<&String> = before
                .iter()
                .filter(|(id, sig)| after.get(*id) != Some(sig))
                .map(|(id, _)| id)
                .chain(after.keys().filter(|id| !before.contains_key(*id)))
                .collect();
            let detail = format!(
                "modules outside the edited segment changed: {}",
                changed
                    .iter()
                    .map(|s| if s.is_empty() { "<root>" } else { s.as_str() })
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            (changed.is_empty(), Some(detail), Some(new_tree))
        }
        Some(Err(e)) => (false, Some(format!("re-extraction failed: {e}")), None),
        None => (
            false,
            Some("re-extraction skipped: candidate does not parse".into()),
            None,
        ),
    };
    checks.push(Check::new(CHECK_SIBLINGS, siblings_ok, detail));

    let ok = errors.is_empty() && checks.iter().all(|c| c.passed);
    Ok(Evaluation {
        report: ValidationReport {
            ok,
            base_version: tree.version,
            errors,
            checks,
        },
        candidate_text,
        candidate_tree,
        old_text,
        span: resolved.span,
    })
}

/// Validates replacing `patch.module_id`'s segment with `patch.new_text`.
pub fn validate_patch(tree: &ModuleTree, patch: &CodePatch) -> Result<ValidationReport, PatchError> {
    evaluate(tree, patch).map(|e| e.report)
}

/// Applies a patch to an in-memory tree. Persistence and version
/// arbitration live in [`ModelWorkspace`].
pub fn apply_patch(
    tree: &ModuleTree,
    patch: &CodePatch,
) -> Result<(ModuleTree, PatchRecord), PatchError> {
    let eval = evaluate(tree, patch)?;
    commit(tree, patch, eval)
}

pub(crate) fn commit(
    tree: &ModuleTree,
    patch: &CodePatch,
    eval: Evaluation,
) -> Result<(ModuleTree, PatchRecord), PatchError> {
    if !eval.report.ok {
        return Err(PatchError::Rejected(Box::new(eval.report)));
    }
    let mut new_tree = eval
        .candidate_tree
        .ok_or_else(|| PatchError::Rejected(Box::new(eval.report.clone())))?;
    new_tree.version = tree.version + 1;
    let record = PatchRecord {
        patch_id: ids::new_id(),
        patch: patch.clone(),
        applied_at: ids::now_ms(),
        old_version: tree.version,
        new_version: new_tree.version,
        old_text: eval.old_text,
        span: eval.span,
    };
    Ok((new_tree, record))
}

type Signature = (String, Vec<Value>);

/// `(kind, params)` by id for every node not produced by the edited
/// definition.
fn unaffected(root: &ModuleNode, target: &Target) -> BTreeMap<String, Signature> {
    fn is_affected(node: &ModuleNode, target: &Target) -> bool {
        match target {
            Target::Class { name } => !node.is_builtin() && &node.kind == name,
            Target::Leaf { class, attr } => {
                node.declared_in.as_ref()
                    == Some(&DeclSite {
                        class: class.clone(),
                        attr: attr.clone(),
                    })
            }
        }
    }
    fn visit(node: &ModuleNode, target: &Target, out: &mut BTreeMap<String, Signature>) {
        if is_affected(node, target) {
            return;
        }
        out.insert(node.id.clone(), (node.kind.clone(), node.params.clone()));
        for child in &node.children {
            visit(child, target, out);
        }
    }
    let mut out = BTreeMap::new();
    visit(root, target, &mut out);
    out
}

fn code_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().filter(|l| {
        let t = l.trim_start();
        !t.is_empty() && !t.starts_with('#')
    })
}

fn lexical_class_name(text: &str) -> Option<String> {
    let header = code_lines(text).next()?.strip_prefix("class ")?;
    let name: String = header
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    (!name.is_empty()).then_some(name)
}

fn lexical_assigns(text: &str) -> Vec<String> {
    code_lines(text)
        .filter_map(|l| {
            let rest = l.trim_start().strip_prefix("self.")?;
            let attr: String = rest
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                .collect();
            rest[attr.len()..]
                .trim_start()
                .starts_with('=')
                .then_some(attr)
        })
        .collect()
}

/// Scans the class enclosing `line` for `def __init__` and `def forward`
/// headers using indentation alone.
fn lexical_methods_present(text: &str, line: usize) -> bool {
    let lines: Vec<&str> = text.lines().collect();
    let Some(header) = (0..line.min(lines.len()))
        .rev()
        .find(|&i| lines[i].starts_with("class "))
    else {
        return false;
    };
    let (mut init, mut forward) = (false, false);
    for l in &lines[header + 1..] {
        let t = l.trim_start();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !l.starts_with(' ') {
            break;
        }
        init |= t.starts_with("def __init__");
        forward |= t.starts_with("def forward");
    }
    init && forward
}
