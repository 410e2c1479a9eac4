//! Hierarchical module trees.
//!
//! A tree is the containment hierarchy of a model: the root class, its
//! submodule assignments, and recursively the assignments of every
//! in-file class they instantiate. Node ids are dotted attribute paths
//! (`blocks.1.attn`) with the root at the empty path. `Stack(n, C)` yields
//! `n` siblings `attr.0 .. attr.{n-1}` directly under the owning node.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::spikedef::{builtins, ClassDef, Literal, SourceFile, SourceIndex, Span};

/// Upper bound on expanded nodes; guards against `Stack` blow-ups.
pub const MAX_NODES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("source defines no classes")]
    NoClasses,
    #[error("no class named `{0}`")]
    UnknownModel(String),
    #[error("class instantiation cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("`{class}.{attr}` uses unknown constructor `{ctor}`")]
    UnknownConstructor {
        class: String,
        attr: String,
        ctor: String,
    },
    #[error("expanded tree exceeds {MAX_NODES} nodes")]
    TooLarge,
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("unknown module id `{0}`")]
    NotFound(String),
    #[error("module `{0}` has no source attached")]
    NoSource(String),
}

/// The assignment that created a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclSite {
    pub class: String,
    pub attr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleNode {
    pub id: String,
    pub kind: String,
    pub params: Vec<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_class: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub declared_in: Option<DeclSite>,
    pub children: Vec<ModuleNode>,
}

impl ModuleNode {
    pub fn is_builtin(&self) -> bool {
        builtins::is_builtin(&self.kind)
    }

    /// Last dotted segment; empty for the root.
    pub fn label(&self) -> &str {
        self.id.rsplit('.').next().unwrap_or("")
    }

    /// Depth-first, declaration-order traversal including `self`.
    pub fn walk(&self) -> impl Iterator<Item = &ModuleNode> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let node = stack.pop()?;
            stack.extend(node.children.iter().rev());
            Some(node)
        })
    }

    pub fn size(&self) -> usize {
        self.walk().count()
    }
}

#[derive(Debug, Clone)]
pub struct ModuleTree {
    pub model_name: String,
    pub root: ModuleNode,
    pub source: Option<SourceIndex>,
    pub version: u64,
}

impl ModuleTree {
    pub fn file(&self) -> Option<&Arc<SourceFile>> {
        self.source.as_ref().map(|s| &s.file)
    }

    pub fn node(&self, id: &str) -> Option<&ModuleNode> {
        self.root.walk().find(|n| n.id == id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ModuleNode> {
        self.root.walk()
    }

    pub fn len(&self) -> usize {
        self.root.size()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(id, kind, params)` of every node, in display order.
    pub fn signature(&self) -> Vec<(String, String, Vec<Value>)> {
        self.nodes()
            .map(|n| (n.id.clone(), n.kind.clone(), n.params.clone()))
            .collect()
    }
}

fn join(prefix: &str, segment: &str) -> String {
    if prefix.is_empty() {
        segment.to_string()
    } else {
        format!("{prefix}.{segment}")
    }
}

/// Builds the module tree rooted at `model_name`, or at the last class of the
/// file when no name is given.
pub fn extract_static(
    index: &SourceIndex,
    model_name: Option<&str>,
) -> Result<ModuleTree, ExtractError> {
    let root_class = match model_name {
        Some(name) => index
            .class(name)
            .ok_or_else(|| ExtractError::UnknownModel(name.to_string()))?,
        None => index.classes.last().ok_or(ExtractError::NoClasses)?,
    };
    check_acyclic(index, root_class)?;

    let mut expander = Expander { index, count: 0 };
    let root = expander.class_node(root_class, String::new(), &HashMap::new(), None)?;
    Ok(ModuleTree {
        model_name: root_class.name.clone(),
        root,
        source: Some(index.clone()),
        version: 1,
    })
}

fn check_acyclic(index: &SourceIndex, root: &ClassDef) -> Result<(), ExtractError> {
    fn visit<'a>(
        index: &'a SourceIndex,
        class: &'a ClassDef,
        path: &mut Vec<&'a str>,
        done: &mut HashSet<&'a str>,
    ) -> Result<(), ExtractError> {
        if done.contains(class.name.as_str()) {
            return Ok(());
        }
        path.push(&class.name);
        for assign in &class.assigns {
            if builtins::is_builtin(&assign.ctor_name) {
                continue;
            }
            let Some(target) = index.class(&assign.ctor_name) else {
                return Err(ExtractError::UnknownConstructor {
                    class: class.name.clone(),
                    attr: assign.attr.clone(),
                    ctor: assign.ctor_name.clone(),
                });
            };
            if let Some(pos) = path.iter().position(|c| *c == target.name) {
                let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
                cycle.push(target.name.clone());
                return Err(ExtractError::Cycle(cycle));
            }
            visit(index, target, path, done)?;
        }
        path.pop();
        done.insert(&class.name);
        Ok(())
    }
    visit(index, root, &mut Vec::new(), &mut HashSet::new())
}

struct Expander<'a> {
    index: &'a SourceIndex,
    count: usize,
}

impl Expander<'_> {
    fn bump(&mut self) -> Result<(), ExtractError> {
        self.count += 1;
        if self.count > MAX_NODES {
            return Err(ExtractError::TooLarge);
        }
        Ok(())
    }

    fn class_node(
        &mut self,
        class: &ClassDef,
        id: String,
        bindings: &HashMap<String, Value>,
        declared_in: Option<DeclSite>,
    ) -> Result<ModuleNode, ExtractError> {
        self.bump()?;
        let mut children = Vec::with_capacity(class.assigns.len());
        for assign in &class.assigns {
            let args: Vec<Value> = assign
                .args
                .iter()
                .map(|arg| match arg {
                    Literal::Ident(name) => bindings
                        .get(name)
                        .cloned()
                        .unwrap_or_else(|| Value::from(name.as_str())),
                    other => other.to_value(),
                })
                .collect();
            let site = DeclSite {
                class: class.name.clone(),
                attr: assign.attr.clone(),
            };
            let ids: Vec<String> = match assign.stack_count {
                Some(n) => (0..n)
                    .map(|i| join(&id, &format!("{}.{i}", assign.attr)))
                    .collect(),
                None => vec![join(&id, &assign.attr)],
            };
            for child_id in ids {
                if builtins::is_builtin(&assign.ctor_name) {
                    self.bump()?;
                    children.push(ModuleNode {
                        id: child_id,
                        kind: assign.ctor_name.clone(),
                        params: args.clone(),
                        span: Some(assign.span),
                        source_class: Some(class.name.clone()),
                        declared_in: Some(site.clone()),
                        children: Vec::new(),
                    });
                } else {
                    let target = self.index.class(&assign.ctor_name).ok_or_else(|| {
                        ExtractError::UnknownConstructor {
                            class: class.name.clone(),
                            attr: assign.attr.clone(),
                            ctor: assign.ctor_name.clone(),
                        }
                    })?;
                    let inner: HashMap<String, Value> = target
                        .init_params
                        .iter()
                        .cloned()
                        .zip(args.iter().cloned())
                        .collect();
                    children.push(self.class_node(target, child_id, &inner, Some(site.clone()))?);
                }
            }
        }
        Ok(ModuleNode {
            id,
            kind: class.name.clone(),
            params: Vec::new(),
            span: Some(class.span),
            source_class: Some(class.name.clone()),
            declared_in,
            children,
        })
    }
}

/// Wire form of a module hierarchy exported by a running model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleManifest {
    pub model_name: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: Vec<Value>,
}

impl ModuleManifest {
    /// Flattens a tree into manifest entries in display order.
    pub fn from_tree(tree: &ModuleTree) -> Self {
        Self {
            model_name: tree.model_name.clone(),
            entries: tree
                .nodes()
                .map(|n| ManifestEntry {
                    id: n.id.clone(),
                    kind: n.kind.clone(),
                    params: n.params.clone(),
                })
                .collect(),
        }
    }
}

/// Parent of `id` within a manifest. A numeric last segment whose direct
/// prefix is absent hangs off the prefix's parent, which is how `Stack`
/// children (`blocks.0`) sit under the owning module.
fn manifest_parent(id: &str, present: &HashSet<&str>) -> Result<String, ExtractError> {
    let (prefix, last) = match id.rsplit_once('.') {
        Some((p, l)) => (p, l),
        None => ("", id),
    };
    if present.contains(prefix) {
        return Ok(prefix.to_string());
    }
    if last.bytes().all(|b| b.is_ascii_digit()) {
        let grand = prefix.rsplit_once('.').map(|(p, _)| p).unwrap_or("");
        if present.contains(grand) {
            return Ok(grand.to_string());
        }
    }
    Err(ExtractError::Manifest(format!(
        "entry `{id}` has no parent entry `{prefix}`"
    )))
}

pub fn extract_from_manifest(
    manifest: &ModuleManifest,
    index: Option<&SourceIndex>,
) -> Result<ModuleTree, ExtractError> {
    let mut present = HashSet::new();
    for entry in &manifest.entries {
        if entry.id.split('.').any(str::is_empty) && !entry.id.is_empty() {
            return Err(ExtractError::Manifest(format!(
                "malformed id `{}`",
                entry.id
            )));
        }
        if !present.insert(entry.id.as_str()) {
            return Err(ExtractError::Manifest(format!(
                "duplicate id `{}`",
                entry.id
            )));
        }
    }
    let root_entry = manifest
        .entries
        .iter()
        .find(|e| e.id.is_empty())
        .ok_or_else(|| ExtractError::Manifest("root entry (id \"\") required".into()))?;
    if !manifest.model_name.is_empty() && manifest.model_name != root_entry.kind {
        return Err(ExtractError::Manifest(format!(
            "model_name `{}` does not match root kind `{}`",
            manifest.model_name, root_entry.kind
        )));
    }

    let mut children: HashMap<String, Vec<usize>> = HashMap::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        if entry.id.is_empty() {
            continue;
        }
        let parent = manifest_parent(&entry.id, &present)?;
        children.entry(parent).or_default().push(i);
    }

    fn build(
        manifest: &ModuleManifest,
        children: &HashMap<String, Vec<usize>>,
        index: Option<&SourceIndex>,
        entry: &ManifestEntry,
        parent: Option<(&str, &str)>,
    ) -> ModuleNode {
        let owner = parent.and_then(|(pid, pkind)| {
            let class = index?.class(pkind)?;
            let rel = entry.id.strip_prefix(pid)?.trim_start_matches('.');
            let attr = rel.split('.').next()?;
            Some((class, attr.to_string()))
        });
        let declared_in = owner.as_ref().and_then(|(class, attr)| {
            class.assign(attr).map(|_| DeclSite {
                class: class.name.clone(),
                attr: attr.clone(),
            })
        });
        let own_class = index.and_then(|ix| ix.class(&entry.kind));
        let (span, source_class) = match own_class {
            Some(class) if !builtins::is_builtin(&entry.kind) => {
                (Some(class.span), Some(class.name.clone()))
            }
            _ => match &owner {
                Some((class, attr)) => match class.assign(attr) {
                    Some(a) => (Some(a.span), Some(class.name.clone())),
                    None => (None, None),
                },
                None => (None, None),
            },
        };
        let kids = children
            .get(&entry.id)
            .map(|ix| {
                ix.iter()
                    .map(|&i| {
                        build(
                            manifest,
                            children,
                            index,
                            &manifest.entries[i],
                            Some((&entry.id, &entry.kind)),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default();
        ModuleNode {
            id: entry.id.clone(),
            kind: entry.kind.clone(),
            params: entry.params.clone(),
            span,
            source_class,
            declared_in,
            children: kids,
        }
    }

    let root = build(manifest, &children, index, root_entry, None);
    Ok(ModuleTree {
        model_name: root_entry.kind.clone(),
        root,
        source: index.cloned(),
        version: 1,
    })
}

/// A code segment shown for a selected module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSegment {
    pub span: Span,
    pub text: String,
    pub kind: String,
}

pub fn get_code(tree: &ModuleTree, module_id: &str) -> Result<CodeSegment, ExtractError> {
    let node = tree
        .node(module_id)
        .ok_or_else(|| ExtractError::NotFound(module_id.to_string()))?;
    let no_source = || ExtractError::NoSource(module_id.to_string());
    let span = node.span.ok_or_else(no_source)?;
    let file = tree.file().ok_or_else(no_source)?;
    let text = file.slice(span).map_err(|_| no_source())?;
    Ok(CodeSegment {
        span,
        text: text.to_string(),
        kind: node.kind.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayEntry {
    pub id: String,
    pub kind: String,
    pub label: String,
    pub child_count: usize,
    pub depth: usize,
}

/// Depth-first serialization of a tree for display. Each entry carries its
/// depth, so the nesting is recoverable from the flat list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplayTree {
    pub model_name: String,
    pub version: u64,
    pub nodes: Vec<DisplayEntry>,
}

pub fn to_display_tree(tree: &ModuleTree) -> DisplayTree {
    let mut nodes = Vec::new();
    let mut stack = vec![(&tree.root, 0usize)];
    while let Some((node, depth)) = stack.pop() {
        let label = if node.id.is_empty() {
            tree.model_name.clone()
        } else {
            node.label().to_string()
        };
        nodes.push(DisplayEntry {
            id: node.id.clone(),
            kind: node.kind.clone(),
            label,
            child_count: node.children.len(),
            depth,
        });
        stack.extend(node.children.iter().rev().map(|c| (c, depth + 1)));
    }
    DisplayTree {
        model_name: tree.model_name.clone(),
        version: tree.version,
        nodes,
    }
}
