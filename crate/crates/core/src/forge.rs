//! Tuning-command generation from model parameter schemas.
//!
//! Commands have the shape
//! `darkit <mode> <model> --dataset <d> --tokenizer <t> [--<param> <value>]...`
//! with parameters emitted in schema order. Flags render as `--name` when
//! true and `--no-name` when false.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Upper bound on grid expansion size.
pub const MAX_GRID: usize = 100_000;

/// Flag names that would collide with the fixed part of the command.
const RESERVED: &[&str] = &["dataset", "tokenizer", "help", "server", "data_dir", "format"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamType {
    Int,
    Float,
    String,
    Choice,
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub default: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Value>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl ParamSpec {
    pub fn new(name: &str, ty: ParamType, default: Value) -> Self {
        Self {
            name: name.to_string(),
            ty,
            default,
            min: None,
            max: None,
            choices: Vec::new(),
            description: String::new(),
        }
    }

    pub fn bounds(mut self, min: f64, max: f64) -> Self {
        self.min = Some(min);
        self.max = Some(max);
        self
    }

    pub fn choices(mut self, choices: impl IntoIterator<Item = Value>) -> Self {
        self.choices = choices.into_iter().collect();
        self
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = text.to_string();
        self
    }

    /// Checks one value against this spec.
    pub fn check(&self, value: &Value) -> Option<ValueViolation> {
        let fail = |code: ViolationKind, message: String| {
            Some(ValueViolation {
                param: self.name.clone(),
                code,
                message,
            })
        };
        let numeric = match self.ty {
            ParamType::Int => match value.as_i64() {
                Some(v) => Some(v as f64),
                None => return fail(ViolationKind::Type, format!("`{}` must be an integer", self.name)),
            },
            ParamType::Float => match value.as_f64().filter(|v| v.is_finite()) {
                Some(v) => Some(v),
                None => return fail(ViolationKind::Type, format!("`{}` must be a finite number", self.name)),
            },
            ParamType::String => {
                if !value.is_string() {
                    return fail(ViolationKind::Type, format!("`{}` must be a string", self.name));
                }
                None
            }
            ParamType::Flag => {
                if !value.is_boolean() {
                    return fail(ViolationKind::Type, format!("`{}` must be true or false", self.name));
                }
                None
            }
            ParamType::Choice => {
                if !self.choices.contains(value) {
                    let options: Vec<String> = self.choices.iter().map(display_value).collect();
                    return fail(
                        ViolationKind::Choice,
                        format!("`{}` must be one of {}", self.name, options.join(", ")),
                    );
                }
                None
            }
        };
        if let Some(v) = numeric {
            if self.min.is_some_and(|min| v < min) || self.max.is_some_and(|max| v > max) {
                return fail(
                    ViolationKind::Bounds,
                    format!(
                        "`{}` = {} is outside [{}, {}]",
                        self.name,
                        display_value(value),
                        self.min.map(|m| m.to_string()).unwrap_or_else(|| "-inf".into()),
                        self.max.map(|m| m.to_string()).unwrap_or_else(|| "inf".into()),
                    ),
                );
            }
        }
        None
    }

    /// Checks that the declaration is self-consistent.
    pub fn check_spec(&self) -> Result<(), ForgeError> {
        let valid_name = {
            let mut c = self.name.chars();
            matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
                && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
        };
        if !valid_name || RESERVED.contains(&self.name.as_str()) {
            return Err(ForgeError::Schema(format!(
                "parameter name `{}` is not a usable identifier",
                self.name
            )));
        }
        if self.ty == ParamType::Choice && self.choices.is_empty() {
            return Err(ForgeError::Schema(format!(
                "choice parameter `{}` has no choices",
                self.name
            )));
        }
        if let Some(v) = self.check(&self.default) {
            return Err(ForgeError::Schema(format!("invalid default: {}", v.message)));
        }
        Ok(())
    }
}

pub fn check_schema(schema: &[ParamSpec]) -> Result<(), ForgeError> {
    let mut names = HashSet::new();
    for spec in schema {
        spec.check_spec()?;
        if !names.insert(spec.name.as_str()) {
            return Err(ForgeError::Schema(format!(
                "parameter `{}` declared twice",
                spec.name
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    UnknownName,
    Type,
    Bounds,
    Choice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueViolation {
    pub param: String,
    pub code: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForgeError {
    #[error("invalid parameter values: {}", .0.iter().map(|v| v.message.as_str()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ValueViolation>),
    #[error("invalid parameter schema: {0}")]
    Schema(String),
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("grid of {0} commands exceeds the limit of {MAX_GRID}")]
    TooLarge(u128),
    #[error("cannot parse command: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Train,
    Test,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Test => "test",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRequest {
    pub model: String,
    pub dataset: String,
    pub tokenizer: String,
    #[serde(default)]
    pub values: BTreeMap<String, Value>,
    #[serde(default)]
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub base: CommandRequest,
    #[serde(default)]
    pub axes: Vec<Axis>,
}

pub fn validate_values(schema: &[ParamSpec], values: &BTreeMap<String, Value>) -> Vec<ValueViolation> {
    values
        .iter()
        .filter_map(|(name, value)| match schema.iter().find(|s| &s.name == name) {
            Some(spec) => spec.check(value),
            None => Some(ValueViolation {
                param: name.clone(),
                code: ViolationKind::UnknownName,
                message: format!("unknown parameter `{name}`"),
            }),
        })
        .collect()
}

fn display_value(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.to_string(),
            (None, Some(f)) => f.to_string(),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn quote(word: &str) -> String {
    shlex::try_quote(word)
        .map(|q| q.into_owned())
        .unwrap_or_else(|_| word.to_string())
}

/// Renders one parameter for the command line.
fn render_value(spec: &ParamSpec, value: &Value) -> Option<String> {
    let word = match spec.ty {
        ParamType::Flag => {
            return Some(if value.as_bool() == Some(true) {
                format!("--{}", spec.name)
            } else {
                format!("--no-{}", spec.name)
            })
        }
        ParamType::Int => value.as_i64()?.to_string(),
        // Display for f64 is the shortest decimal that round-trips.
        ParamType::Float => value.as_f64()?.to_string(),
        ParamType::String | ParamType::Choice => quote(&display_value(value)),
    };
    Some(format!("--{} {word}", spec.name))
}

pub fn render_command(req: &CommandRequest, schema: &[ParamSpec]) -> Result<String, ForgeError> {
    let violations = validate_values(schema, &req.values);
    if !violations.is_empty() {
        return Err(ForgeError::Invalid(violations));
    }
    let mut parts = vec![
        "darkit".to_string(),
        req.mode.to_string(),
        quote(&req.model),
        "--dataset".into(),
        quote(&req.dataset),
        "--tokenizer".into(),
        quote(&req.tokenizer),
    ];
    for spec in schema {
        if let Some(value) = req.values.get(&spec.name) {
            parts.extend(render_value(spec, value));
        }
    }
    Ok(parts.join(" "))
}

/// Expands the cartesian product of `space.axes` in odometer order (the
/// last axis varies fastest), rendering one command per point.
pub fn expand_grid(space: &SearchSpace, schema: &[ParamSpec]) -> Result<Vec<String>, ForgeError> {
    let mut names = HashSet::new();
    let mut violations = Vec::new();
    for axis in &space.axes {
        if axis.values.is_empty() {
            return Err(ForgeError::Space(format!("axis `{}` has no values", axis.param)));
        }
        if !names.insert(axis.param.as_str()) {
            return Err(ForgeError::Space(format!("axis `{}` appears twice", axis.param)));
        }
        for value in &axis.values {
            let single = BTreeMap::from([(axis.param.clone(), value.clone())]);
            violations.extend(validate_values(schema, &single));
        }
    }
    if !violations.is_empty() {
        return Err(ForgeError::Invalid(violations));
    }
    let total: u128 = space.axes.iter().map(|a| a.values.len() as u128).product();
    if total > MAX_GRID as u128 {
        return Err(ForgeError::TooLarge(total));
    }

    let mut out = Vec::with_capacity(total as usize);
    let mut digits = vec![0usize; space.axes.len()];
    for _ in 0..total {
        let mut req = space.base.clone();
        for (axis, &i) in space.axes.iter().zip(&digits) {
            req.values.insert(axis.param.clone(), axis.values[i].clone());
        }
        out.push(render_command(&req, schema)?);
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < space.axes[pos].values.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(out)
}

/// Parses a typed value for `spec` from its command-line spelling.
pub fn parse_value(spec: &ParamSpec, text: &str) -> Result<Value, ForgeError> {
    let bad = || ForgeError::Syntax(format!("invalid value `{text}` for --{}", spec.name));
    Ok(match spec.ty {
        ParamType::Int => Value::from(text.parse::<i64>().map_err(|_| bad())?),
        ParamType::Float => {
            let v: f64 = text.parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            Value::from(v)
        }
        ParamType::String => Value::from(text),
        ParamType::Flag => Value::from(text.parse::<bool>().map_err(|_| bad())?),
        ParamType::Choice => spec
            .choices
            .iter()
            .find(|c| display_value(c) == text)
            .cloned()
            .unwrap_or_else(|| Value::from(text)),
    })
}

/// Parses `--name value` / `--flag` / `--no-flag` words against a schema.
pub fn parse_param_args(
    args: &[String],
    schema: &[ParamSpec],
) -> Result<BTreeMap<String, Value>, ForgeError> {
    let mut values = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let word = &args[i];
        let Some(name) = word.strip_prefix("--") else {
            return Err(ForgeError::Syntax(format!("unexpected argument `{word}`")));
        };
        let name = name.replace('-', "_");
        let (spec, negated) = match schema.iter().find(|s| s.name == name) {
            Some(spec) => (spec, false),
            None => match name
                .strip_prefix("no_")
                .and_then(|n| schema.iter().find(|s| s.name == n && s.ty == ParamType::Flag))
            {
                Some(spec) => (spec, true),
                None => return Err(ForgeError::Syntax(format!("unknown parameter `{word}`"))),
            },
        };
        if values.contains_key(&spec.name) {
            return Err(ForgeError::Syntax(format!("`--{}` given twice", spec.name)));
        }
        let value = if spec.ty == ParamType::Flag {
            Value::from(!negated)
        } else {
            i += 1;
            let text = args
                .get(i)
                .ok_or_else(|| ForgeError::Syntax(format!("`{word}` needs a value")))?;
            parse_value(spec, text)?
        };
        values.insert(spec.name.clone(), value);
        i += 1;
    }
    Ok(values)
}

/// Splits a rendered command back into a request (the inverse of
/// [`render_command`]).
pub fn parse_command(command: &str, schema: &[ParamSpec]) -> Result<CommandRequest, ForgeError> {
    let words = shlex::split(command).ok_or_else(|| ForgeError::Syntax("unbalanced quotes".into()))?;
    let syntax = |m: &str| ForgeError::Syntax(m.to_string());
    match words.first().map(String::as_str) {
        Some("darkit") => {}
        _ => return Err(syntax("command must start with `darkit`")),
    }
    let mode = match words.get(1).map(String::as_str) {
        Some("train") => Mode::Train,
        Some("test") => Mode::Test,
        _ => return Err(syntax("mode must be `train` or `test`")),
    };
    let model = words.get(2).ok_or_else(|| syntax("missing model"))?.clone();
    let (mut dataset, mut tokenizer) = (None, None);
    let mut rest = Vec::new();
    let mut i = 3;
    while i < words.len() {
        match words[i].as_str() {
            "--dataset" => {
                dataset = words.get(i + 1).cloned();
                i += 2;
            }
            "--tokenizer" => {
                tokenizer = words.get(i + 1).cloned();
                i += 2;
            }
            _ => {
                rest.push(words[i].clone());
                i += 1;
            }
        }
    }
    Ok(CommandRequest {
        model,
        dataset: dataset.ok_or_else(|| syntax("missing --dataset"))?,
        tokenizer: tokenizer.ok_or_else(|| syntax("missing --tokenizer"))?,
        values: parse_param_args(&rest, schema)?,
        mode,
    })
}

/// Parameter schema of the bundled `tiny-spike-gpt` model.
pub fn tiny_spike_gpt_schema() -> Vec<ParamSpec> {
    use serde_json::json;
    vec![
        ParamSpec::new("lr", ParamType::Float, json!(0.001))
            .bounds(1e-6, 1.0)
            .describe("learning rate"),
        ParamSpec::new("batch_size", ParamType::Int, json!(8))
            .bounds(1.0, 1024.0)
            .describe("sequences per step"),
        ParamSpec::new("steps", ParamType::Int, json!(100))
            .bounds(1.0, 1_000_000.0)
            .describe("training steps"),
        ParamSpec::new("seq_len", ParamType::Int, json!(64))
            .bounds(1.0, 4096.0)
            .describe("context length"),
        ParamSpec::new("optimizer", ParamType::Choice, json!("adam"))
            .choices([json!("adam"), json!("adamw"), json!("sgd")]),
        ParamSpec::new("run_name", ParamType::String, json!("")).describe("free-form label"),
        ParamSpec::new("verbose", ParamType::Flag, json!(false)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn req(values: Value) -> CommandRequest {
        CommandRequest {
            model: "tiny-spike-gpt".into(),
            dataset: "wikitext".into(),
            tokenizer: "gpt2-small".into(),
            values: serde_json::from_value(values).unwrap(),
            mode: Mode::Train,
        }
    }

    #[test]
    fn schema_is_valid() {
        check_schema(&tiny_spike_gpt_schema()).unwrap();
    }

    #[test]
    fn value_checks() {
        let schema = tiny_spike_gpt_schema();
        let v = |j: Value| validate_values(&schema, &serde_json::from_value(j).unwrap());
        assert!(v(json!({"lr": 0.001})).is_empty());
        let bounds = v(json!({"lr": 2.0}));
        assert_eq!(bounds.len(), 1);
        assert_eq!(bounds[0].code, ViolationKind::Bounds);
        assert_eq!(v(json!({"foo": 1}))[0].code, ViolationKind::UnknownName);
        assert_eq!(v(json!({"batch_size": 1.5}))[0].code, ViolationKind::Type);
        assert_eq!(v(json!({"optimizer": "lion"}))[0].code, ViolationKind::Choice);
        assert_eq!(v(json!({"verbose": "yes"}))[0].code, ViolationKind::Type);
    }

    #[test]
    fn render_examples() {
        let schema = tiny_spike_gpt_schema();
        assert_eq!(
            render_command(&req(json!({"lr": 0.001})), &schema).unwrap(),
            "darkit train tiny-spike-gpt --dataset wikitext --tokenizer gpt2-small --lr 0.001"
        );
        assert_eq!(
            render_command(&req(json!({})), &schema).unwrap(),
            "darkit train tiny-spike-gpt --dataset wikitext --tokenizer gpt2-small"
        );
        assert!(render_command(&req(json!({"verbose": true})), &schema)
            .unwrap()
            .ends_with(" --verbose"));
        assert!(render_command(&req(json!({"verbose": false})), &schema)
            .unwrap()
            .ends_with(" --no-verbose"));
        assert!(matches!(
            render_command(&req(json!({"lr": 2.0})), &schema),
            Err(ForgeError::Invalid(_))
        ));
    }

    #[test]
    fn values_follow_schema_order_and_quote() {
        let schema = tiny_spike_gpt_schema();
        let cmd = render_command(
            &req(json!({"verbose": true, "run_name": "warm up", "batch_size": 16, "lr": 1e-5})),
            &schema,
        )
        .unwrap();
        assert_eq!(
            cmd,
            "darkit train tiny-spike-gpt --dataset wikitext --tokenizer gpt2-small --lr 0.00001 --batch_size 16 --run_name 'warm up' --verbose"
        );
        assert_eq!(parse_command(&cmd, &schema).unwrap(), req(json!({"verbose": true, "run_name": "warm up", "batch_size": 16, "lr": 1e-5})));
    }

    #[test]
    fn grid_odometer() {
        let schema = tiny_spike_gpt_schema();
        let space = SearchSpace {
            base: req(json!({})),
            axes: vec![
                Axis {
                    param: "lr".into(),
                    values: vec![json!(0.001), json!(0.0001)],
                },
                Axis {
                    param: "batch_size".into(),
                    values: vec![json!(8), json!(16)],
                },
            ],
        };
        let tails: Vec<String> = expand_grid(&space, &schema)
            .unwrap()
            .into_iter()
            .map(|c| c.split_once("gpt2-small ").unwrap().1.to_string())
            .collect();
        assert_eq!(
            tails,
            [
                "--lr 0.001 --batch_size 8",
                "--lr 0.001 --batch_size 16",
                "--lr 0.0001 --batch_size 8",
                "--lr 0.0001 --batch_size 16"
            ]
        );
    }

    #[test]
    fn grid_edge_cases() {
        let schema = tiny_spike_gpt_schema();
        let mut space = SearchSpace {
            base: req(json!({"lr": 0.01})),
            axes: vec![],
        };
        assert_eq!(expand_grid(&space, &schema).unwrap().len(), 1);
        space.axes.push(Axis {
            param: "steps".into(),
            values: vec![json!(1), json!(2), json!(3)],
        });
        assert_eq!(expand_grid(&space, &schema).unwrap().len(), 3);
        space.axes.push(Axis {
            param: "seq_len".into(),
            values: vec![],
        });
        assert!(matches!(expand_grid(&space, &schema), Err(ForgeError::Space(_))));
    }

    #[test]
    fn parse_args_round_trip() {
        let schema = tiny_spike_gpt_schema();
        let args: Vec<String> = ["--lr", "0.5", "--no-verbose", "--optimizer", "sgd"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let values = parse_param_args(&args, &schema).unwrap();
        assert_eq!(values["lr"], json!(0.5));
        assert_eq!(values["verbose"], json!(false));
        assert_eq!(values["optimizer"], json!("sgd"));
        assert!(parse_param_args(&["--bogus".to_string()], &schema).is_err());
        assert!(parse_param_args(&["--lr".to_string()], &schema).is_err());
    }

    #[test]
    fn float_formatting_is_shortest_round_trip() {
        for v in [0.1, 1e-6, 0.30000000000000004, 123.456, 1.0] {
            let spec = ParamSpec::new("lr", ParamType::Float, json!(0.1));
            let word = render_value(&spec, &json!(v)).unwrap();
            let text = word.strip_prefix("--lr ").unwrap();
            assert_eq!(text.parse::<f64>().unwrap(), v);
        }
    }
}
