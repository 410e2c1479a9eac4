mod support;

use std::time::Instant;

use proptest::prelude::*;

use darkit_core::extract::{
    extract_from_manifest, extract_static, get_code, to_display_tree, ModuleManifest, ModuleTree,
};
use darkit_core::fixtures;
use darkit_core::spikedef::{builtins, parse_str, SourceIndex};

#[test]
fn corpus_spans_match_line_scanner() {
    assert!(fixtures::ALL.len() >= 10);
    let started = Instant::now();
    for (name, text) in fixtures::ALL {
        let index = parse_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(support::parser_spans(&index), support::scan_classes(text), "{name}");
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn scanner_sees_comment_and_blank_layout() {
    let classes = support::scan_classes(fixtures::ALL.iter().find(|(n, _)| *n == "commented.sd").unwrap().1);
    assert_eq!(classes[0].span, (4, 14));
    assert_eq!(classes[0].init_span, (6, 10));
    assert_eq!(classes[0].assigns, [("emb".to_string(), 8), ("lif".to_string(), 10)]);
    assert_eq!(classes[1].span, (19, 24));
}

/// Node count from the index alone: one per node, classes expanded.
fn expected_nodes(index: &SourceIndex, class: &str) -> usize {
    let c = index.class(class).unwrap();
    1 + c
        .assigns
        .iter()
        .map(|a| {
            let size = if builtins::is_builtin(&a.ctor_name) {
                1
            } else {
                expected_nodes(index, &a.ctor_name)
            };
            a.stack_count.map_or(size, |n| n as usize * size)
        })
        .sum::<usize>()
}

fn signature(tree: &ModuleTree) -> Vec<(String, String, Vec<serde_json::Value>)> {
    tree.nodes().map(|n| (n.id.clone(), n.kind.clone(), n.params.clone())).collect()
}

#[test]
fn node_count_law_manifest_agreement_and_code_totality() {
    for (name, text) in fixtures::ALL {
        let index = parse_str(text).unwrap();
        let tree = extract_static(&index, None).unwrap();
        assert_eq!(tree.len(), expected_nodes(&index, &tree.model_name), "{name}");

        let manifest = ModuleManifest::from_tree(&tree);
        let wire = serde_json::to_string(&manifest).unwrap();
        let back = extract_from_manifest(&serde_json::from_str(&wire).unwrap(), None).unwrap();
        assert_eq!(signature(&back), signature(&tree), "{name}");

        let display = to_display_tree(&tree);
        assert_eq!(display.nodes.len(), tree.len());
        for entry in &display.nodes {
            let seg = get_code(&tree, &entry.id).unwrap_or_else(|e| panic!("{name} {}: {e}", entry.id));
            assert_eq!(seg.text, index.file.slice(seg.span).unwrap());
        }
    }
}

#[test]
fn tiny_spike_gpt_tree() {
    let tree = extract_static(&parse_str(fixtures::TINY_SPIKE_GPT).unwrap(), None).unwrap();
    assert_eq!(tree.len(), 11);
    let block = get_code(&tree, "blocks.1").unwrap();
    assert!(block.text.starts_with("class Block(Module):"));
    assert_eq!(get_code(&tree, "blocks.0").unwrap(), block);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Reordering classes never changes the tree rooted at a named class.
    #[test]
    fn class_order_is_irrelevant(seed in 0usize..1000) {
        let text = fixtures::ALL.iter().find(|(n, _)| *n == "nested.sd").unwrap().1;
        let mut chunks: Vec<String> = text.split("\n\n").map(|c| format!("{}\n", c.trim_end())).collect();
        let k = seed % chunks.len();
        chunks.rotate_left(k);
        let rotated = chunks.join("\n");
        let a = extract_static(&parse_str(text).unwrap(), Some("DeepSpiker")).unwrap();
        let b = extract_static(&parse_str(&rotated).unwrap(), Some("DeepSpiker")).unwrap();
        prop_assert_eq!(signature(&a), signature(&b));
    }

    /// Parsing is a pure function of the bytes.
    #[test]
    fn parse_is_deterministic(i in 0usize..11) {
        let text = fixtures::ALL[i].1;
        prop_assert_eq!(parse_str(text).unwrap(), parse_str(text).unwrap());
    }
}
