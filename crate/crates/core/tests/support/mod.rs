//! Generators and independent oracles shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

use darkit_core::extract::{extract_static, get_code, ModuleTree};
use darkit_core::fixtures;
use darkit_core::flow::{FlowEdge, FlowGraph, FlowKind, FlowNode};
use darkit_core::forge::{Axis, CommandRequest, Mode, ParamSpec, ParamType, SearchSpace};
use darkit_core::patch::{validate_patch, CodePatch, PatchRecord};
use darkit_core::spikedef::{parse_str, SourceIndex};
use darkit_core::tracker::Point;

/// Class layout found by scanning lines and indentation only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScannedClass {
    pub name: String,
    pub span: (usize, usize),
    pub init_span: (usize, usize),
    pub forward_span: (usize, usize),
    /// `(attr, line)` of each `self.<attr> = ...` line in `__init__`.
    pub assigns: Vec<(String, usize)>,
}

/// The parser's view in the scanner's terms.
pub fn parser_spans(index: &SourceIndex) -> Vec<ScannedClass> {
    index
        .classes
        .iter()
        .map(|c| ScannedClass {
            name: c.name.clone(),
            span: (c.span.start_line, c.span.end_line),
            init_span: (c.init_span.start_line, c.init_span.end_line),
            forward_span: (c.forward_span.start_line, c.forward_span.end_line),
            assigns: c
                .assigns
                .iter()
                .map(|a| {
                    assert_eq!(a.span.start_line, a.span.end_line, "{}", a.attr);
                    (a.attr.clone(), a.span.start_line)
                })
                .collect(),
        })
        .collect()
}

fn is_code(line: &str) -> bool {
    let t = line.trim_start();
    !t.is_empty() && !t.starts_with('#')
}

fn indent(line: &str) -> usize {
    line.len() - line.trim_start_matches(' ').len()
}

/// Last code line in `lines[from..]` before the first code line indented at
/// most `level` (1-based result).
fn block_end(lines: &[&str], from: usize, level: usize) -> usize {
    let mut end = from;
    for (i, line) in lines.iter().enumerate().skip(from + 1) {
        if !is_code(line) {
            continue;
        }
        if indent(line) <= level {
            break;
        }
        end = i;
    }
    end + 1
}

fn between<'a>(text: &'a str, open: &str, close: char) -> &'a str {
    let rest = &text[text.find(open).map(|i| i + open.len()).unwrap_or(0)..];
    rest.split(close).next().unwrap_or("").trim()
}

pub fn scan_classes(text: &str) -> Vec<ScannedClass> {
    let lines: Vec<&str> = text.lines().collect();
    let mut classes = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if !(is_code(line) && indent(line) == 0 && line.starts_with("class ")) {
            continue;
        }
        let end = block_end(&lines, i, 0);
        let mut init_span = (0, 0);
        let mut forward_span = (0, 0);
        let mut assigns = Vec::new();
        for j in i + 1..end {
            let l = lines[j];
            if !(is_code(l) && indent(l) == 4 && l.trim_start().starts_with("def ")) {
                continue;
            }
            let def_end = block_end(&lines, j, 4).min(end);
            match between(l, "def ", '(') {
                "__init__" => {
                    init_span = (j + 1, def_end);
                    for (k, a) in lines.iter().enumerate().take(def_end).skip(j + 1) {
                        if is_code(a) && indent(a) == 8 && a.trim_start().starts_with("self.") {
                            assigns.push((between(a, "self.", '=').to_string(), k + 1));
                        }
                    }
                }
                "forward" => forward_span = (j + 1, def_end),
                _ => {}
            }
        }
        classes.push(ScannedClass {
            name: between(line, "class ", '(').to_string(),
            span: (i + 1, end),
            init_span,
            forward_span,
            assigns,
        });
    }
    classes
}

/// Number form of a literal or JSON number, for comparing params across
/// flow documents and extracted trees.
fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(f) => format!("{f:?}"),
        None => v.to_string(),
    }
}

pub fn param_order(kind: &str) -> &'static [&'static str] {
    match kind {
        "Embedding" => &["vocab", "dim"],
        "Linear" => &["in", "out"],
        "LIF" => &["threshold", "beta"],
        "Attention" => &["dim", "heads"],
        "LayerNorm" => &["dim"],
        _ => &[],
    }
}

/// Sorted `(kind, params)` of the flow's non-structural nodes.
pub fn flow_multiset(g: &FlowGraph) -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = g
        .nodes
        .iter()
        .filter(|n| !matches!(n.kind.as_str(), "Input" | "Output" | "Add"))
        .map(|n| {
            let params = param_order(&n.kind).iter().map(|k| num(&n.params[*k])).collect();
            (n.kind.clone(), params)
        })
        .collect();
    out.sort();
    out
}

/// Sorted `(kind, params)` of every non-root tree node.
pub fn tree_multiset(tree: &ModuleTree) -> Vec<(String, Vec<String>)> {
    let mut out: Vec<(String, Vec<String>)> = tree
        .nodes()
        .filter(|n| !n.id.is_empty())
        .map(|n| (n.kind.clone(), n.params.iter().map(num).collect()))
        .collect();
    out.sort();
    out
}

fn node(id: &str, kind: FlowKind, params: Value) -> FlowNode {
    FlowNode::new(id, kind, params)
}

/// A shape-preserving block for width `dim`.
fn preserving(rng: &mut impl Rng, id: &str, dim: u64) -> FlowNode {
    match rng.gen_range(0..3) {
        0 => node(
            id,
            FlowKind::LIF,
            json!({"threshold": rng.gen_range(0.05..4.0f64), "beta": rng.gen_range(0.01..1.0f64)}),
        ),
        1 => node(id, FlowKind::LayerNorm, json!({"dim": dim})),
        _ => {
            let divisors: Vec<u64> = (1..=dim).filter(|h| dim.is_multiple_of(*h)).collect();
            node(id, FlowKind::Attention, json!({"dim": dim, "heads": *divisors.choose(rng).unwrap()}))
        }
    }
}

/// A random valid flow graph with at most `max_nodes` nodes: a chain
/// starting with an Embedding, with optional residual Add branches.
pub fn random_flow(rng: &mut impl Rng, name: &str, max_nodes: usize) -> FlowGraph {
    let names = ["alpha", "b", "c2", "delta", "e_x", "f", "gamma", "h9", "iota", "k", "lam", "mu", "nu", "omega"];
    let mut pool: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    pool.shuffle(rng);
    let mut fresh = move || pool.pop().expect("enough ids");

    let mut nodes = vec![node("inp", FlowKind::Input, json!({}))];
    let mut edges = Vec::new();
    let mut dim: u64 = [8, 12, 16, 32][rng.gen_range(0..4)];
    let emb = fresh();
    nodes.push(node(&emb, FlowKind::Embedding, json!({"vocab": rng.gen_range(2..5000u64), "dim": dim})));
    edges.push(FlowEdge::new("inp", emb.as_str()));
    let mut cur = emb;

    // room for the Output node
    while nodes.len() + 1 < max_nodes {
        let room = max_nodes - 1 - nodes.len();
        let choice = rng.gen_range(0..4);
        if choice == 0 && room >= 2 {
            let branch = fresh();
            let add = fresh();
            nodes.push(preserving(rng, &branch, dim));
            nodes.push(node(&add, FlowKind::Add, json!({})));
            edges.push(FlowEdge::new(cur.as_str(), branch.as_str()));
            edges.push(FlowEdge::new(branch.as_str(), add.as_str()));
            edges.push(FlowEdge::new(cur.as_str(), add.as_str()));
            cur = add;
        } else if choice == 1 {
            let id = fresh();
            let out = [4, 8, 16, 24][rng.gen_range(0..4)];
            nodes.push(node(&id, FlowKind::Linear, json!({"in": dim, "out": out})));
            edges.push(FlowEdge::new(cur.as_str(), id.as_str()));
            dim = out;
            cur = id;
        } else {
            let id = fresh();
            nodes.push(preserving(rng, &id, dim));
            edges.push(FlowEdge::new(cur.as_str(), id.as_str()));
            cur = id;
        }
        if rng.gen_bool(0.2) {
            break;
        }
    }
    nodes.push(node("outp", FlowKind::Output, json!({})));
    edges.push(FlowEdge::new(cur.as_str(), "outp"));
    FlowGraph {
        name: name.to_string(),
        nodes,
        edges,
    }
}

pub fn shuffled(rng: &mut impl Rng, g: &FlowGraph) -> FlowGraph {
    let mut g = g.clone();
    g.nodes.shuffle(rng);
    g.edges.shuffle(rng);
    g
}

/// Words of a SpikeDef line: identifiers, numbers, strings, single
/// punctuation characters and runs of spaces.
pub fn lex_words(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c.is_ascii_alphanumeric() || c == '_' || c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
                i += 1;
            }
        } else if c == '"' || c == '\'' {
            i += 1;
            while i < chars.len() && chars[i] != c && chars[i] != '\n' {
                i += 1;
            }
            i = (i + 1).min(chars.len());
        } else if c == ' ' {
            while i < chars.len() && chars[i] == ' ' {
                i += 1;
            }
        } else {
            i += 1;
        }
        out.push(chars[start..i].iter().collect());
    }
    out
}

const VOCAB: &[&str] = &[
    "(", ")", ",", "=", ":", ".", "+", "self", "class", "def", "return", "Stack", "Module", "Linear", "LIF", "Block",
    "foo", "0", "7", "1.5", "\"s\"", "'", "    ", " ", "\n", "__init__", "forward", "-",
];

/// One single-word corruption of `text`: delete, duplicate, or replace a
/// non-newline word.
pub fn corrupt(rng: &mut impl Rng, text: &str) -> String {
    let mut words = lex_words(text);
    let candidates: Vec<usize> = (0..words.len()).filter(|&i| words[i] != "\n").collect();
    let i = *candidates.choose(rng).expect("non-empty text");
    match rng.gen_range(0..3) {
        0 => {
            words.remove(i);
        }
        1 => {
            let w = words[i].clone();
            words.insert(i, w);
        }
        _ => words[i] = VOCAB.choose(rng).unwrap().to_string(),
    }
    words.concat()
}

/// Replaces lines `start..=end` (1-based) of `text` with `new`.
pub fn splice_lines(text: &str, start: usize, end: usize, new: &str) -> String {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let mut out = String::new();
    for l in &lines[..start - 1] {
        out.push_str(l);
    }
    out.push_str(new);
    for l in &lines[end..] {
        out.push_str(l);
    }
    out
}

/// Bucketing oracle: assigns each point to a bucket by walking the
/// bucket sizes, then reports (last step, mean) per bucket.
pub fn bucket_oracle(points: &[Point], n: usize) -> Vec<(u64, f64)> {
    if points.len() <= n {
        return points.iter().map(|p| (p.step, p.value)).collect();
    }
    let big = points.len() % n;
    let small = points.len() / n;
    let mut buckets: Vec<Vec<Point>> = vec![Vec::new(); n];
    let mut b = 0;
    for p in points {
        let cap = if b < big { small + 1 } else { small };
        if buckets[b].len() == cap {
            b += 1;
        }
        buckets[b].push(*p);
    }
    buckets
        .iter()
        .map(|bucket| {
            let mut sum = 0.0;
            for p in bucket {
                sum += p.value;
            }
            (bucket.last().unwrap().step, sum / bucket.len() as f64)
        })
        .collect()
}

/// A valid value for `spec`, drawn at random.
pub fn random_value(rng: &mut impl Rng, spec: &ParamSpec) -> Value {
    match spec.ty {
        ParamType::Int => {
            let lo = spec.min.unwrap_or(-1000.0) as i64;
            let hi = spec.max.unwrap_or(1000.0) as i64;
            Value::from(rng.gen_range(lo..=hi))
        }
        ParamType::Float => {
            let lo = spec.min.unwrap_or(-1e3);
            let hi = spec.max.unwrap_or(1e3);
            Value::from(rng.gen_range(lo..=hi))
        }
        ParamType::String => {
            let pool = ["run", "a b", "it's", "x\"y", "$HOME", "--lr", "", "ünï", "semi;colon"];
            Value::from(*pool.choose(rng).unwrap())
        }
        ParamType::Choice => spec.choices.choose(rng).unwrap().clone(),
        ParamType::Flag => Value::from(rng.gen_bool(0.5)),
    }
}

/// Random search space over `schema`, with distinct axis values.
pub fn random_space(rng: &mut impl Rng, schema: &[ParamSpec], model: &str) -> SearchSpace {
    let mut specs: Vec<&ParamSpec> = schema.iter().collect();
    specs.shuffle(rng);
    let n_axes = rng.gen_range(0..=specs.len().min(4));
    let mut axes = Vec::new();
    for spec in &specs[..n_axes] {
        let want = rng.gen_range(1..=4);
        let mut values: Vec<Value> = Vec::new();
        for _ in 0..want * 4 {
            let v = random_value(rng, spec);
            if !values.contains(&v) {
                values.push(v);
            }
            if values.len() == want {
                break;
            }
        }
        axes.push(Axis {
            param: spec.name.clone(),
            values,
        });
    }
    let mut base_values = BTreeMap::new();
    for spec in &specs[n_axes..] {
        if rng.gen_bool(0.5) {
            base_values.insert(spec.name.clone(), random_value(rng, spec));
        }
    }
    SearchSpace {
        base: CommandRequest {
            model: model.to_string(),
            dataset: "wikitext".into(),
            tokenizer: "gpt2-small".into(),
            values: base_values,
            mode: if rng.gen_bool(0.5) { Mode::Train } else { Mode::Test },
        },
        axes,
    }
}

/// Every point of the space by nested recursion, first axis outermost.
pub fn cartesian(space: &SearchSpace) -> Vec<BTreeMap<String, Value>> {
    fn go(axes: &[Axis], acc: &BTreeMap<String, Value>, out: &mut Vec<BTreeMap<String, Value>>) {
        let Some((first, rest)) = axes.split_first() else {
            out.push(acc.clone());
            return;
        };
        for v in &first.values {
            let mut next = acc.clone();
            next.insert(first.param.clone(), v.clone());
            go(rest, &next, out);
        }
    }
    let mut out = Vec::new();
    go(&space.axes, &space.base.values, &mut out);
    out
}

/// NDJSON metric lines for `name` at steps `from..from + count`.
pub fn metric_lines(name: &str, from: u64, count: u64, value: impl Fn(u64) -> f64) -> String {
    (from..from + count)
        .map(|s| format!("{{\"type\":\"metric\",\"step\":{s},\"name\":\"{name}\",\"value\":{:?}}}\n", value(s)))
        .collect()
}

/// Independent undo: newest first, put each `old_text` back over the lines
/// its patch wrote.
pub fn undo(current: &str, records: &[PatchRecord]) -> String {
    let mut text = current.to_string();
    for r in records.iter().rev() {
        let written = r.patch.new_text.lines().count();
        text = splice_lines(&text, r.span.start_line, r.span.start_line + written - 1, &r.old_text);
    }
    text
}

/// A random valid edit: new numbers in a builtin leaf's constructor.
pub fn random_leaf_edit(rng: &mut impl Rng, tree: &ModuleTree) -> (String, String) {
    let leaves: Vec<_> = tree.nodes().filter(|n| n.is_builtin() && !n.params.is_empty()).collect();
    let leaf = leaves.choose(rng).unwrap();
    let seg = get_code(tree, &leaf.id).unwrap();
    let head = &seg.text[..seg.text.rfind('(').unwrap()];
    let args: Vec<String> = leaf
        .params
        .iter()
        .map(|p| match p.as_i64() {
            Some(_) => rng.gen_range(1..512).to_string(),
            None => format!("{:.2}", rng.gen_range(0.01..3.0f64)),
        })
        .collect();
    let text = if head.contains("Stack(") {
        format!("{head}({}))\n", args.join(", "))
    } else {
        format!("{head}({})\n", args.join(", "))
    };
    (leaf.id.clone(), text)
}

#[derive(Debug, Default)]
pub struct FuzzTally {
    pub accepted: usize,
    pub rejected: usize,
    /// Candidates the validator accepted but the parser rejects.
    pub false_accepts: Vec<String>,
}

/// Corrupts one word of an existing module's code, `cases` times over the
/// fixture corpus, and checks every accepted patch against the parser.
pub fn fuzz_patches(rng: &mut impl Rng, cases: usize) -> FuzzTally {
    let trees: Vec<(&str, ModuleTree)> = fixtures::ALL
        .iter()
        .map(|(_, t)| (*t, extract_static(&parse_str(t).unwrap(), None).unwrap()))
        .collect();
    let mut tally = FuzzTally::default();
    for _ in 0..cases {
        let (text, tree) = trees.choose(rng).unwrap();
        let ids: Vec<&str> = tree.nodes().map(|n| n.id.as_str()).collect();
        let id = *ids.choose(rng).unwrap();
        let seg = get_code(tree, id).unwrap();
        let bad = corrupt(rng, &seg.text);
        let Ok(patch) = CodePatch::new(&tree.model_name, id, bad.as_str(), "", "") else {
            tally.rejected += 1;
            continue;
        };
        if validate_patch(tree, &patch).unwrap().ok {
            tally.accepted += 1;
            let candidate = splice_lines(text, seg.span.start_line, seg.span.end_line, &bad);
            if parse_str(&candidate).is_err() {
                tally.false_accepts.push(candidate);
            }
        } else {
            tally.rejected += 1;
        }
    }
    tally
}
