//! SpikeDef files bundled with the crate.

pub const TINY_SPIKE_GPT: &str = include_str!("../fixtures/tiny_spike_gpt.sd");
pub const SINGLE_LINEAR: &str = include_str!("../fixtures/m.sd");
pub const TINY_FLOW: &str = include_str!("../fixtures/tiny_flow.sd");
/// Flow document that compiles to [`TINY_FLOW`].
pub const TINY_FLOW_GRAPH: &str = include_str!("../fixtures/tiny_flow.flow.json");

pub const ALL: &[(&str, &str)] = &[
    ("tiny_spike_gpt.sd", TINY_SPIKE_GPT),
    ("m.sd", SINGLE_LINEAR),
    ("tiny_flow.sd", TINY_FLOW),
    ("spiking_mlp.sd", include_str!("../fixtures/spiking_mlp.sd")),
    ("parametric_block.sd", include_str!("../fixtures/parametric_block.sd")),
    ("nested.sd", include_str!("../fixtures/nested.sd")),
    ("commented.sd", include_str!("../fixtures/commented.sd")),
    ("builtin_stack.sd", include_str!("../fixtures/builtin_stack.sd")),
    ("spike_bert.sd", include_str!("../fixtures/spike_bert.sd")),
    ("single_lif.sd", include_str!("../fixtures/single_lif.sd")),
    ("named_layers.sd", include_str!("../fixtures/named_layers.sd")),
];
