//! Flow graphs: typed block DAGs designed on a canvas or in a document,
//! validated, shape-checked and compiled to SpikeDef source.

mod codegen;
mod shapes;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::spikedef::builtins::{self, ArgType};

pub use codegen::compile_to_source;
pub use shapes::{infer_shapes, Dim, ShapeError, ShapeVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowKind {
    Input,
    Output,
    Embedding,
    Linear,
    LIF,
    Attention,
    LayerNorm,
    Add,
}

impl FlowKind {
    pub const ALL: [FlowKind; 8] = [
        FlowKind::Input,
        FlowKind::Output,
        FlowKind::Embedding,
        FlowKind::Linear,
        FlowKind::LIF,
        FlowKind::Attention,
        FlowKind::LayerNorm,
        FlowKind::Add,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::Input => "Input",
            FlowKind::Output => "Output",
            FlowKind::Embedding => "Embedding",
            FlowKind::Linear => "Linear",
            FlowKind::LIF => "LIF",
            FlowKind::Attention => "Attention",
            FlowKind::LayerNorm => "LayerNorm",
            FlowKind::Add => "Add",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Input, Output and Add carry no parameters and compile to no submodule.
    pub fn is_structural(&self) -> bool {
        matches!(self, FlowKind::Input | FlowKind::Output | FlowKind::Add)
    }

    pub fn builtin(&self) -> Option<&'static builtins::Builtin> {
        builtins::builtin(self.as_str())
    }

    fn in_degree(&self) -> usize {
        match self {
            FlowKind::Input => 0,
            FlowKind::Add => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl FlowNode {
    pub fn new(id: impl Into<String>, kind: FlowKind, params: Value) -> Self {
        Self {
            id: id.into(),
            kind: kind.as_str().to_string(),
            params: match params {
                Value::Object(map) => map,
                _ => Map::new(),
            },
        }
    }

    pub fn flow_kind(&self) -> Option<FlowKind> {
        FlowKind::parse(&self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowEdge {
    pub from: String,
    pub to: String,
}

impl FlowEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for FlowEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

/// A flow document (`*.flow.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub name: String,
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
}

impl FlowGraph {
    pub fn node(&self, id: &str) -> Option<&FlowNode> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationCode {
    /// Input/Output count or duplicate node ids.
    #[serde(rename = "F001")]
    Multiplicity,
    #[serde(rename = "F002")]
    Cycle,
    #[serde(rename = "F003")]
    Degree,
    #[serde(rename = "F004")]
    Unreachable,
    #[serde(rename = "F005")]
    BadParams,
    /// Edge naming a missing node, or repeated edge.
    #[serde(rename = "F006")]
    BadEdge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<FlowEdge>,
}

impl Violation {
    fn node(code: ViolationCode, node: &str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            node: Some(node.to_string()),
            edge: None,
        }
    }

    fn edge(code: ViolationCode, edge: &FlowEdge, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            node: None,
            edge: Some(edge.clone()),
        }
    }

    fn graph(code: ViolationCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            node: None,
            edge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("flow graph is invalid: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "class" | "def" | "return")
}

fn check_params(node: &FlowNode, kind: FlowKind) -> Vec<Violation> {
    let mut out = Vec::new();
    let bad = |msg: String| Violation::node(ViolationCode::BadParams, &node.id, msg);
    let schema: &[(&str, ArgType)] = kind.builtin().map(|b| b.params).unwrap_or(&[]);
    for key in node.params.keys() {
        if !schema.iter().any(|(name, _)| name == key) {
            out.push(bad(format!("{kind} `{}` has no parameter `{key}`", node.id)));
        }
    }
    for (name, ty) in schema {
        match (node.params.get(*name), ty) {
            (None, _) => out.push(bad(format!(
                "{kind} `{}` is missing parameter `{name}`",
                node.id
            ))),
            (Some(v), ArgType::Int) if v.as_u64().is_some_and(|n| n >= 1) => {}
            (Some(_), ArgType::Int) => out.push(bad(format!(
                "parameter `{name}` of `{}` must be a positive integer",
                node.id
            ))),
            (Some(v), ArgType::Float) if v.as_f64().is_some_and(f64::is_finite) => {}
            (Some(_), ArgType::Float) => out.push(bad(format!(
                "parameter `{name}` of `{}` must be a finite number",
                node.id
            ))),
        }
    }
    if kind == FlowKind::Attention && out.is_empty() {
        let dim = node.params["dim"].as_u64().unwrap_or(0);
        let heads = node.params["heads"].as_u64().unwrap_or(1);
        if !dim.is_multiple_of(heads) {
            out.push(bad(format!(
                "Attention `{}`: dim {dim} is not divisible by heads {heads}",
                node.id
            )));
        }
    }
    out
}

/// Edges that survive endpoint, self-loop and duplicate checks.
fn usable_edges(g: &FlowGraph) -> Vec<&FlowEdge> {
    let ids: HashSet<&str> = g.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut seen = HashSet::new();
    g.edges
        .iter()
        .filter(|e| ids.contains(e.from.as_str()) && ids.contains(e.to.as_str()))
        .filter(|e| e.from != e.to)
        .filter(|e| seen.insert((e.from.as_str(), e.to.as_str())))
        .collect()
}

/// Returns every invariant violation of `g`; empty means valid.
pub fn validate_graph(g: &FlowGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if !is_identifier(&g.name) || builtins::is_reserved(&g.name) {
        out.push(Violation::graph(
            ViolationCode::BadParams,
            format!("graph name `{}` must be an identifier and not a block name", g.name),
        ));
    }

    let mut ids = HashSet::new();
    let mut counts: HashMap<FlowKind, usize> = HashMap::new();
    for node in &g.nodes {
        if !ids.insert(node.id.as_str()) {
            out.push(Violation::node(
                ViolationCode::Multiplicity,
                &node.id,
                format!("node id `{}` is used more than once", node.id),
            ));
        }
        if !is_identifier(&node.id) {
            out.push(Violation::node(
                ViolationCode::BadParams,
                &node.id,
                format!("node id `{}` must be an identifier", node.id),
            ));
        }
        match node.flow_kind() {
            Some(kind) => {
                *counts.entry(kind).or_default() += 1;
                out.extend(check_params(node, kind));
            }
            None => out.push(Violation::node(
                ViolationCode::BadParams,
                &node.id,
                format!("unknown node kind `{}`", node.kind),
            )),
        }
    }
    for kind in [FlowKind::Input, FlowKind::Output] {
        let n = counts.get(&kind).copied().unwrap_or(0);
        if n != 1 {
            out.push(Violation::graph(
                ViolationCode::Multiplicity,
                format!("graph needs exactly one {kind} node, found {n}"),
            ));
        }
    }

    let mut seen = HashSet::new();
    for edge in &g.edges {
        if !ids.contains(edge.from.as_str()) || !ids.contains(edge.to.as_str()) {
            out.push(Violation::edge(
                ViolationCode::BadEdge,
                edge,
                format!("edge {edge} names a missing node"),
            ));
        } else if edge.from == edge.to {
            out.push(Violation::edge(
                ViolationCode::Cycle,
                edge,
                format!("edge {edge} is a self-loop"),
            ));
        } else if !seen.insert((edge.from.as_str(), edge.to.as_str())) {
            out.push(Violation::edge(
                ViolationCode::BadEdge,
                edge,
                format!("edge {edge} is repeated"),
            ));
        }
    }

    let edges = usable_edges(g);
    let mut indeg: HashMap<&str, usize> = HashMap::new();
    let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
    let mut pred: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &edges {
        *indeg.entry(e.to.as_str()).or_default() += 1;
        succ.entry(e.from.as_str()).or_default().push(&e.to);
        pred.entry(e.to.as_str()).or_default().push(&e.from);
    }
    let mut first_seen = HashSet::new();
    for node in &g.nodes {
        let Some(kind) = node.flow_kind() else { continue };
        if !first_seen.insert(node.id.as_str()) {
            continue;
        }
        let have = indeg.get(node.id.as_str()).copied().unwrap_or(0);
        if have != kind.in_degree() {
            out.push(Violation::node(
                ViolationCode::Degree,
                &node.id,
                format!(
                    "{kind} `{}` needs {} inbound edge(s), has {have}",
                    node.id,
                    kind.in_degree()
                ),
            ));
        }
    }

    // nodes that can reach themselves
    let mut cyclic: BTreeSet<&str> = BTreeSet::new();
    for node in &g.nodes {
        let start = node.id.as_str();
        let mut stack: Vec<&str> = succ.get(start).cloned().unwrap_or_default();
        let mut visited = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == start {
                cyclic.insert(start);
                break;
            }
            if visited.insert(n) {
                stack.extend(succ.get(n).cloned().unwrap_or_default());
            }
        }
    }
    for id in &cyclic {
        out.push(Violation::node(
            ViolationCode::Cycle,
            id,
            format!("node `{id}` lies on a cycle"),
        ));
    }

    let single = |kind: FlowKind| {
        let mut it = g.nodes.iter().filter(|n| n.flow_kind() == Some(kind));
        match (it.next(), it.next()) {
            (Some(n), None) => Some(n.id.as_str()),
            _ => None,
        }
    };
    if let (Some(input), Some(output)) = (single(FlowKind::Input), single(FlowKind::Output)) {
        let reach = |start: &str, adj: &HashMap<&str, Vec<&str>>| -> HashSet<String> {
            let mut seen = HashSet::from([start.to_string()]);
            let mut queue = VecDeque::from([start.to_string()]);
            while let Some(n) = queue.pop_front() {
                for m in adj.get(n.as_str()).into_iter().flatten() {
                    if seen.insert(m.to_string()) {
                        queue.push_back(m.to_string());
                    }
                }
            }
            seen
        };
        let forward = reach(input, &succ);
        let backward = reach(output, &pred);
        let mut reported = HashSet::new();
        for node in &g.nodes {
            if !(forward.contains(&node.id) && backward.contains(&node.id))
                && reported.insert(node.id.as_str())
            {
                out.push(Violation::node(
                    ViolationCode::Unreachable,
                    &node.id,
                    format!("node `{}` is not on any Input -> Output path", node.id),
                ));
            }
        }
    }
    out
}

/// Kahn's algorithm; ready nodes are taken in ascending id order.
/// Only meaningful for graphs that validate.
pub(crate) fn topo_order(g: &FlowGraph) -> Vec<&FlowNode> {
    let edges = usable_edges(g);
    let by_id: BTreeMap<&str, &FlowNode> = g.nodes.iter().map(|n| (n.id.as_str(), n)).collect();
    let mut indeg: BTreeMap<&str, usize> = by_id.keys().map(|k| (*k, 0)).collect();
    let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
    for e in &edges {
        *indeg.get_mut(e.to.as_str()).unwrap() += 1;
        succ.entry(e.from.as_str()).or_default().push(&e.to);
    }
    let mut ready: BTreeSet<&str> = indeg
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut order = Vec::with_capacity(by_id.len());
    while let Some(id) = ready.pop_first() {
        order.push(by_id[id]);
        for next in succ.get(id).into_iter().flatten() {
            let d = indeg.get_mut(next).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(next);
            }
        }
    }
    order
}

/// Predecessor ids of `id`, ascending.
pub(crate) fn preds<'a>(g: &'a FlowGraph, id: &str) -> Vec<&'a str> {
    let mut p: Vec<&str> = usable_edges(g)
        .into_iter()
        .filter(|e| e.to == id)
        .map(|e| e.from.as_str())
        .collect();
    p.sort_unstable();
    p
}
