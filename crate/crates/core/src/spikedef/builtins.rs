use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgType {
    Int,
    Float,
}

impl fmt::Display for ArgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgType::Int => f.write_str("int"),
            ArgType::Float => f.write_str("float"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Builtin {
    pub name: &'static str,
    pub params: &'static [(&'static str, ArgType)],
}

impl Builtin {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// `Linear(in: int, out: int)`
    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|(name, ty)| format!("{name}: {ty}"))
            .collect();
        format!("{}({})", self.name, params.join(", "))
    }

    pub fn arity_hint(&self) -> String {
        let noun = if self.arity() == 1 {
            "argument"
        } else {
            "arguments"
        };
        format!("{} takes {} {noun}", self.name, self.arity())
    }
}

pub const BUILTINS: &[Builtin] = &[
    Builtin {
        name: "Embedding",
        params: &[("vocab", ArgType::Int), ("dim", ArgType::Int)],
    },
    Builtin {
        name: "Linear",
        params: &[("in", ArgType::Int), ("out", ArgType::Int)],
    },
    Builtin {
        name: "LIF",
        params: &[("threshold", ArgType::Float), ("beta", ArgType::Float)],
    },
    Builtin {
        name: "Attention",
        params: &[("dim", ArgType::Int), ("heads", ArgType::Int)],
    },
    Builtin {
        name: "LayerNorm",
        params: &[("dim", ArgType::Int)],
    },
];

/// Repeat container: `Stack(n, Ctor(...))`.
pub const STACK: &str = "Stack";
/// The only legal base class.
pub const MODULE_BASE: &str = "Module";

pub fn builtin(name: &str) -> Option<&'static Builtin> {
    BUILTINS.iter().find(|b| b.name == name)
}

pub fn is_builtin(name: &str) -> bool {
    builtin(name).is_some()
}

/// Names a class may not take.
pub fn is_reserved(name: &str) -> bool {
    is_builtin(name) || name == STACK || name == MODULE_BASE
}
