use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{preds, topo_order, validate_graph, FlowEdge, FlowError, FlowGraph, FlowKind};

/// One tensor dimension: the symbolic sequence length `T` or a fixed size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dim {
    Seq,
    Size(u64),
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dim::Seq => f.write_str("T"),
            Dim::Size(n) => write!(f, "{n}"),
        }
    }
}

impl Serialize for Dim {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Dim::Seq => s.serialize_str("T"),
            Dim::Size(n) => s.serialize_u64(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Dim {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) if s == "T" => Ok(Dim::Seq),
            serde_json::Value::Number(n) if n.as_u64().is_some_and(|v| v > 0) => {
                Ok(Dim::Size(n.as_u64().unwrap_or_default()))
            }
            other => Err(serde::de::Error::custom(format!("invalid dim {other}"))),
        }
    }
}

/// Leading `T` followed by fixed sizes, e.g. `[T, 16]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeVector(pub Vec<Dim>);

impl ShapeVector {
    pub fn seq() -> Self {
        Self(vec![Dim::Seq])
    }

    pub fn last(&self) -> Dim {
        *self.0.last().unwrap_or(&Dim::Seq)
    }

    fn with_last(&self, dim: Dim) -> Self {
        let mut dims = self.0.clone();
        if let Some(last) = dims.last_mut() {
            *last = dim;
        }
        Self(dims)
    }
}

impl fmt::Display for ShapeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.0.iter().map(Dim::to_string).collect();
        write!(f, "[{}]", dims.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("shape mismatch on edge {edge}: expected {expected}, got {actual}")]
pub struct ShapeError {
    pub edge: FlowEdge,
    pub expected: String,
    pub actual: ShapeVector,
}

/// Propagates shapes from `Input = [T]` in topological order.
pub fn infer_shapes(g: &FlowGraph) -> Result<BTreeMap<String, ShapeVector>, FlowError> {
    let violations = validate_graph(g);
    if !violations.is_empty() {
        return Err(FlowError::Invalid(violations));
    }
    let mut shapes: BTreeMap<String, ShapeVector> = BTreeMap::new();
    for node in topo_order(g) {
        let kind = node.flow_kind().expect("validated");
        let inputs = preds(g, &node.id);
        let int = |name: &str| node.params.get(name).and_then(|v| v.as_u64()).unwrap_or(0);
        let mismatch = |from: &str, expected: String, actual: &ShapeVector| ShapeError {
            edge: FlowEdge::new(from, node.id.as_str()),
            expected,
            actual: actual.clone(),
        };
        let shape = if kind == FlowKind::Input {
            ShapeVector::seq()
        } else {
            let from = inputs[0];
            let first = &shapes[from];
            match kind {
                FlowKind::Input => unreachable!(),
                FlowKind::Embedding => {
                    if *first != ShapeVector::seq() {
                        return Err(mismatch(from, "[T]".into(), first).into());
                    }
                    ShapeVector(vec![Dim::Seq, Dim::Size(int("dim"))])
                }
                FlowKind::Linear => {
                    let want = Dim::Size(int("in"));
                    if first.last() != want {
                        return Err(mismatch(from, format!("last dim {want}"), first).into());
                    }
                    first.with_last(Dim::Size(int("out")))
                }
                FlowKind::LayerNorm | FlowKind::Attention => {
                    let want = Dim::Size(int("dim"));
                    if first.last() != want {
                        return Err(mismatch(from, format!("last dim {want}"), first).into());
                    }
                    first.clone()
                }
                FlowKind::LIF | FlowKind::Output => first.clone(),
                FlowKind::Add => {
                    let second = &shapes[inputs[1]];
                    if first != second {
                        return Err(mismatch(inputs[1], first.to_string(), second).into());
                    }
                    first.clone()
                }
            }
        };
        shapes.insert(node.id.clone(), shape);
    }
    Ok(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowNode, FlowEdge};
    use serde_json::json;

    fn chain(nodes: Vec<FlowNode>) -> FlowGraph {
        let mut all = vec![FlowNode::new("in", FlowKind::Input, json!({}))];
        all.extend(nodes);
        all.push(FlowNode::new("out", FlowKind::Output, json!({})));
        let edges = all
            .windows(2)
            .map(|w| FlowEdge::new(w[0].id.as_str(), w[1].id.as_str()))
            .collect();
        FlowGraph {
            name: "Chain".into(),
            nodes: all,
            edges,
        }
    }

    fn s(dims: &[Option<u64>]) -> ShapeVector {
        ShapeVector(
            dims.iter()
                .map(|d| d.map(Dim::Size).unwrap_or(Dim::Seq))
                .collect(),
        )
    }

    #[test]
    fn chain_shapes() {
        let g = chain(vec![
            FlowNode::new("emb", FlowKind::Embedding, json!({"vocab": 128, "dim": 16})),
            FlowNode::new("lif", FlowKind::LIF, json!({"threshold": 1.0, "beta": 0.9})),
            FlowNode::new("head", FlowKind::Linear, json!({"in": 16, "out": 128})),
        ]);
        let shapes = infer_shapes(&g).unwrap();
        assert_eq!(shapes["in"], s(&[None]));
        assert_eq!(shapes["emb"], s(&[None, Some(16)]));
        assert_eq!(shapes["lif"], s(&[None, Some(16)]));
        assert_eq!(shapes["head"], s(&[None, Some(128)]));
        assert_eq!(shapes["out"], s(&[None, Some(128)]));
        assert_eq!(serde_json::to_value(&shapes["head"]).unwrap(), json!(["T", 128]));
    }

    #[test]
    fn linear_mismatch() {
        let g = chain(vec![
            FlowNode::new("emb", FlowKind::Embedding, json!({"vocab": 10, "dim": 16})),
            FlowNode::new("fc", FlowKind::Linear, json!({"in": 8, "out": 4})),
        ]);
        match infer_shapes(&g).unwrap_err() {
            FlowError::Shape(e) => {
                assert_eq!(e.edge, FlowEdge::new("emb", "fc"));
                assert_eq!(e.expected, "last dim 8");
                assert_eq!(e.actual, s(&[None, Some(16)]));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn embedding_needs_token_input() {
        let g = chain(vec![
            FlowNode::new("e1", FlowKind::Embedding, json!({"vocab": 10, "dim": 16})),
            FlowNode::new("e2", FlowKind::Embedding, json!({"vocab": 10, "dim": 16})),
        ]);
        assert!(matches!(infer_shapes(&g), Err(FlowError::Shape(_))));
    }

    #[test]
    fn residual_add() {
        let mut g = chain(vec![
            FlowNode::new("emb", FlowKind::Embedding, json!({"vocab": 10, "dim": 16})),
            FlowNode::new("sum", FlowKind::Add, json!({})),
        ]);
        g.nodes.push(FlowNode::new("ln", FlowKind::LayerNorm, json!({"dim": 16})));
        g.edges.push(FlowEdge::new("emb", "ln"));
        g.edges.push(FlowEdge::new("ln", "sum"));
        let shapes = infer_shapes(&g).unwrap();
        assert_eq!(shapes["sum"], s(&[None, Some(16)]));
    }

    #[test]
    fn add_mismatch() {
        let mut g = chain(vec![
            FlowNode::new("emb", FlowKind::Embedding, json!({"vocab": 10, "dim": 16})),
            FlowNode::new("sum", FlowKind::Add, json!({})),
        ]);
        g.nodes.push(FlowNode::new("up", FlowKind::Linear, json!({"in": 16, "out": 32})));
        g.edges.push(FlowEdge::new("emb", "up"));
        g.edges.push(FlowEdge::new("up", "sum"));
        assert!(matches!(infer_shapes(&g), Err(FlowError::Shape(_))));
    }

    #[test]
    fn invalid_graph_is_reported_first() {
        let mut g = chain(vec![]);
        g.edges.clear();
        assert!(matches!(infer_shapes(&g), Err(FlowError::Invalid(_))));
    }
}
