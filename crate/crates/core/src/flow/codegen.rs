use std::fmt::Write;

use serde_json::Value;

use super::{infer_shapes, preds, topo_order, FlowError, FlowGraph, FlowKind, Violation, ViolationCode};
use crate::spikedef::builtins::ArgType;
use crate::spikedef::SourceFile;

/// Float literal that always re-lexes as a float (`1.0`, not `1`).
fn float_literal(v: f64) -> String {
    format!("{v:?}")
}

fn arg_literal(v: &Value, ty: ArgType) -> String {
    match ty {
        ArgType::Int => v.as_u64().unwrap_or_default().to_string(),
        ArgType::Float => float_literal(v.as_f64().unwrap_or_default()),
    }
}

/// Compiles a valid, shape-consistent flow graph to a one-class SpikeDef
/// file. Output is a pure function of the graph's content: node and edge
/// list order do not matter.
pub fn compile_to_source(g: &FlowGraph) -> Result<SourceFile, FlowError> {
    infer_shapes(g)?;
    let order = topo_order(g);
    if order.iter().all(|n| {
        n.flow_kind()
            .map(|k| k.is_structural())
            .unwrap_or(true)
    }) {
        return Err(FlowError::Invalid(vec![Violation {
            code: ViolationCode::Unreachable,
            message: "empty body: the graph has no computational node".into(),
            node: None,
            edge: None,
        }]));
    }

    let var = |id: &str| -> String {
        match g.node(id).and_then(|n| n.flow_kind()) {
            Some(FlowKind::Input) => "x".to_string(),
            _ => format!("h_{id}"),
        }
    };

    let mut init = String::new();
    let mut forward = String::new();
    let mut ret = String::new();
    for node in &order {
        let kind = node.flow_kind().expect("validated");
        let inputs = preds(g, &node.id);
        match kind {
            FlowKind::Input => {}
            FlowKind::Output => ret = var(inputs[0]),
            FlowKind::Add => {
                let _ = writeln!(
                    forward,
                    "        {} = {} + {}",
                    var(&node.id),
                    var(inputs[0]),
                    var(inputs[1])
                );
            }
            _ => {
                let builtin = kind.builtin().expect("parameterized kinds are builtins");
                let args: Vec<String> = builtin
                    .params
                    .iter()
                    .map(|(name, ty)| arg_literal(&node.params[*name], *ty))
                    .collect();
                let _ = writeln!(
                    init,
                    "        self.{} = {}({})",
                    node.id,
                    builtin.name,
                    args.join(", ")
                );
                let _ = writeln!(
                    forward,
                    "        {} = self.{}({})",
                    var(&node.id),
                    node.id,
                    var(inputs[0])
                );
            }
        }
    }

    let text = format!(
        "class {}(Module):\n    def __init__(self):\n{init}\n    def forward(self, x):\n{forward}        return {ret}\n",
        g.name
    );
    Ok(SourceFile::new(format!("{}.sd", g.name), text).expect("generated source is LF-only"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::extract_static;
    use crate::flow::tests::tiny_flow;
    use crate::spikedef::parse;

    const TINY_FLOW_SOURCE: &str = "class TinyFlow(Module):\n    def __init__(self):\n        self.emb = Embedding(128, 16)\n        self.head = Linear(16, 128)\n\n    def forward(self, x):\n        h_emb = self.emb(x)\n        h_head = self.head(h_emb)\n        return h_head\n";

    #[test]
    fn tiny_flow_compiles_exactly() {
        let file = compile_to_source(&tiny_flow()).unwrap();
        assert_eq!(file.text(), TINY_FLOW_SOURCE);
        assert_eq!(file.text(), crate::fixtures::TINY_FLOW);
        let tree = extract_static(&parse(&file).unwrap(), None).unwrap();
        assert_eq!(tree.len(), 3);
        assert_eq!(file.lines(), 9);
    }

    #[test]
    fn shuffled_document_is_byte_identical() {
        let mut g = tiny_flow();
        g.nodes.reverse();
        g.edges.reverse();
        assert_eq!(compile_to_source(&g).unwrap().text(), TINY_FLOW_SOURCE);
    }

    #[test]
    fn input_to_output_is_empty_body() {
        let g: FlowGraph = serde_json::from_value(serde_json::json!({
            "name": "Empty",
            "nodes": [{"id": "in", "kind": "Input"}, {"id": "out", "kind": "Output"}],
            "edges": [{"from": "in", "to": "out"}]
        }))
        .unwrap();
        match compile_to_source(&g).unwrap_err() {
            FlowError::Invalid(v) => {
                assert_eq!(v[0].code, ViolationCode::Unreachable);
                assert!(v[0].message.contains("empty body"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residual_compiles_to_addition() {
        let g: FlowGraph = serde_json::from_value(serde_json::json!({
            "name": "Res",
            "nodes": [
                {"id": "in", "kind": "Input"},
                {"id": "emb", "kind": "Embedding", "params": {"vocab": 32, "dim": 8}},
                {"id": "lif", "kind": "LIF", "params": {"threshold": 1, "beta": 0.5}},
                {"id": "sum", "kind": "Add"},
                {"id": "out", "kind": "Output"}
            ],
            "edges": [
                {"from": "in", "to": "emb"},
                {"from": "emb", "to": "lif"},
                {"from": "lif", "to": "sum"},
                {"from": "emb", "to": "sum"},
                {"from": "sum", "to": "out"}
            ]
        }))
        .unwrap();
        let file = compile_to_source(&g).unwrap();
        assert!(file.text().contains("        self.lif = LIF(1.0, 0.5)\n"));
        assert!(file.text().contains("        h_sum = h_emb + h_lif\n"));
        assert!(file.text().ends_with("        return h_sum\n"));
        parse(&file).unwrap();
    }
}
