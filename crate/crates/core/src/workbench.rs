//! One data directory's worth of registry, editable models and runs.
//!
//! The HTTP service and the local CLI both go through this type, so the two
//! surfaces return the same documents.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::extract::{get_code, to_display_tree, CodeSegment, DisplayTree, ExtractError};
use crate::flow::{compile_to_source, infer_shapes, validate_graph, FlowError, FlowGraph, ShapeVector, Violation};
use crate::forge::{self, CommandRequest, ForgeError, ParamSpec, SearchSpace};
use crate::patch::{CodePatch, ModelWorkspace, PatchError, PatchRecord, ValidationReport};
use crate::registry::{EntryKind, Registry, RegistryEntry, RegistryError};
use crate::spikedef::ParseError;
use crate::tracker::{RunRecord, SynthSpec, Tracker, TrackerError};

pub const DATA_DIR_ENV: &str = "DARKIT_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "darkit-data";
pub const DEFAULT_PORT: u16 = 8080;
/// Path alias for the root module, whose id is the empty string.
pub const ROOT_ALIAS: &str = "~";
/// Steps of a `train`/`test` run when the command sets none.
pub const DEFAULT_STEPS: u64 = 100;

/// `flag` if given, else `$DARKIT_DATA_DIR`, else `./darkit-data`.
pub fn resolve_data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

pub fn module_id_from_path(segment: &str) -> &str {
    if segment == ROOT_ALIAS {
        ""
    } else {
        segment
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkbenchError {
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Invalid(String),
}

impl WorkbenchError {
    /// HTTP status of the error class.
    pub fn status(&self) -> u16 {
        use WorkbenchError as W;
        match self {
            W::NotFound(_) => 404,
            W::BadRequest(_) => 400,
            W::Invalid(_) | W::Parse(_) | W::Flow(_) => 422,
            W::Patch(e) => match e {
                PatchError::NotFound(_) => 404,
                PatchError::Conflict { .. } => 409,
                PatchError::InvalidPatch(_) => 400,
                PatchError::Rejected(_) | PatchError::NoSource(_) | PatchError::Source(_) | PatchError::Extract(_) => 422,
                PatchError::Corrupt(_) | PatchError::Io(_) => 500,
            },
            W::Extract(e) => match e {
                ExtractError::NotFound(_) | ExtractError::UnknownModel(_) => 404,
                _ => 422,
            },
            W::Forge(e) => match e {
                ForgeError::Syntax(_) => 400,
                _ => 422,
            },
            W::Registry(e) => match e {
                RegistryError::NotFound(_) => 404,
                RegistryError::Conflict(_) => 409,
                RegistryError::Invalid(_) | RegistryError::Checksum(_) => 422,
                RegistryError::Io(_) => 500,
            },
            W::Tracker(e) => match e {
                TrackerError::RunNotFound(_) | TrackerError::MetricNotFound { .. } => 404,
                TrackerError::Invalid(_) => 422,
                TrackerError::Corrupt { .. } | TrackerError::Io(_) => 500,
            },
        }
    }

    /// Machine-readable code. Module codes (`E00x`, `F00x`) pass through.
    pub fn code(&self) -> String {
        use WorkbenchError as W;
        let generic = match self.status() {
            400 => "BAD_REQUEST",
            404 => "NOT_FOUND",
            409 => "CONFLICT",
            422 => "VALIDATION_FAILED",
            _ => "INTERNAL",
        };
        match self {
            W::Parse(e) | W::Patch(PatchError::Source(e)) => e.code.as_str().to_string(),
            W::Patch(PatchError::Rejected(report)) => report
                .errors
                .first()
                .map(|e| e.code.as_str().to_string())
                .unwrap_or_else(|| "PATCH_REJECTED".into()),
            W::Flow(FlowError::Invalid(v)) => v
                .first()
                .and_then(|v| serde_json::to_value(v.code).ok())
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| generic.into()),
            W::Flow(FlowError::Shape(_)) => "SHAPE_MISMATCH".into(),
            W::Registry(RegistryError::Checksum(_)) => "CHECKSUM_MISMATCH".into(),
            _ => generic.into(),
        }
    }

    /// Message with enough detail to act on.
    pub fn detailed_message(&self) -> String {
        match self {
            WorkbenchError::Patch(PatchError::Rejected(report)) => describe_report(report),
            other => other.to_string(),
        }
    }
}

pub fn describe_report(report: &ValidationReport) -> String {
    let mut parts: Vec<String> = report
        .errors
        .iter()
        .map(|e| format!("{e} (hint: {})", e.hint))
        .collect();
    parts.extend(report.checks.iter().filter(|c| !c.passed).map(|c| match &c.detail {
        Some(d) => format!("check {} failed: {d}", c.name),
        None => format!("check {} failed", c.name),
    }));
    format!("patch rejected: {}", parts.join("; "))
}

/// Patch request document; `module_id` is optional when the route names it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRequest {
    #[serde(default)]
    pub module_id: Option<String>,
    pub new_text: String,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub note: String,
    #[serde(default)]
    pub base_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchOutcome {
    pub version: u64,
    pub record: PatchRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapesReport {
    pub shapes: std::collections::BTreeMap<String, ShapeVector>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledSource {
    pub name: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedCommand {
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandGrid {
    pub count: usize,
    pub commands: Vec<String>,
}

pub fn flow_validate(graph: &FlowGraph) -> FlowReport {
    let violations = validate_graph(graph);
    FlowReport {
        ok: violations.is_empty(),
        violations,
    }
}

pub fn flow_shapes(graph: &FlowGraph) -> Result<ShapesReport, WorkbenchError> {
    Ok(ShapesReport {
        shapes: infer_shapes(graph)?,
    })
}

pub fn flow_compile(graph: &FlowGraph) -> Result<CompiledSource, WorkbenchError> {
    let file = compile_to_source(graph)?;
    Ok(CompiledSource {
        name: graph.name.clone(),
        source: file.text().to_string(),
    })
}

pub struct Workbench {
    data_dir: PathBuf,
    registry: Registry,
    tracker: Tracker,
    models: Mutex<HashMap<String, Arc<ModelWorkspace>>>,
}

impl Workbench {
    /// Opens `data_dir`, seeding the built-in registry entries.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, WorkbenchError> {
        let data_dir = data_dir.into();
        let registry = Registry::open(data_dir.join("registry"))?;
        registry.seed_builtin()?;
        let tracker = Tracker::open(data_dir.join("runs"))?;
        Ok(Self {
            data_dir,
            registry,
            tracker,
            models: Mutex::new(HashMap::new()),
        })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    fn model_entry(&self, name: &str) -> Result<RegistryEntry, WorkbenchError> {
        self.registry
            .latest(EntryKind::Model, name)
            .ok_or_else(|| WorkbenchError::NotFound(format!("unknown model `{name}`")))
    }

    /// The editable workspace of a registry model, created on first use
    /// from the model's bundled source file.
    pub fn model(&self, name: &str) -> Result<Arc<ModelWorkspace>, WorkbenchError> {
        let mut models = self.models.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(ws) = models.get(name) {
            return Ok(ws.clone());
        }
        let entry = self.model_entry(name)?;
        let source = entry
            .files
            .iter()
            .find(|f| f.path.ends_with(".sd"))
            .ok_or_else(|| WorkbenchError::Invalid(format!("model `{name}` bundles no .sd source")))?
            .path
            .clone();
        let registry = &self.registry;
        let ws = ModelWorkspace::open_dir(self.data_dir.join("models").join(name), name, None, || {
            let bytes = registry
                .read_file(&entry.key(), &source)
                .map_err(|e| PatchError::Corrupt(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| PatchError::Corrupt(e.to_string()))
        })?;
        let ws = Arc::new(ws);
        models.insert(name.to_string(), ws.clone());
        Ok(ws)
    }

    pub fn model_tree(&self, name: &str) -> Result<DisplayTree, WorkbenchError> {
        Ok(to_display_tree(&self.model(name)?.tree()))
    }

    pub fn module_code(&self, name: &str, module_id: &str) -> Result<CodeSegment, WorkbenchError> {
        Ok(get_code(&self.model(name)?.tree(), module_id)?)
    }

    fn to_patch(name: &str, module_id: &str, req: &PatchRequest) -> Result<CodePatch, WorkbenchError> {
        if let Some(body_id) = &req.module_id {
            if body_id != module_id {
                return Err(WorkbenchError::BadRequest(format!(
                    "body names module `{body_id}` but the path names `{module_id}`"
                )));
            }
        }
        Ok(CodePatch::new(name, module_id, req.new_text.as_str(), req.author.as_str(), req.note.as_str())?)
    }

    pub fn validate_patch(&self, name: &str, module_id: &str, req: &PatchRequest) -> Result<ValidationReport, WorkbenchError> {
        let ws = self.model(name)?;
        let patch = Self::to_patch(name, module_id, req)?;
        Ok(ws.validate(&patch)?)
    }

    pub fn apply_patch(&self, name: &str, module_id: &str, req: &PatchRequest) -> Result<PatchOutcome, WorkbenchError> {
        let ws = self.model(name)?;
        let patch = Self::to_patch(name, module_id, req)?;
        let (tree, record) = ws.apply(&patch, req.base_version)?;
        Ok(PatchOutcome {
            version: tree.version,
            record,
        })
    }

    pub fn patch_history(&self, name: &str) -> Result<Vec<PatchRecord>, WorkbenchError> {
        Ok(self.model(name)?.history()?)
    }

    /// Schema of `req.model` after checking every referenced registry name.
    fn command_schema(&self, req: &CommandRequest) -> Result<Vec<ParamSpec>, WorkbenchError> {
        let entry = self.model_entry(&req.model)?;
        for (kind, name) in [(EntryKind::Dataset, &req.dataset), (EntryKind::Tokenizer, &req.tokenizer)] {
            if self.registry.latest(kind, name).is_none() {
                return Err(WorkbenchError::NotFound(format!("unknown {kind} `{name}`")));
            }
        }
        Ok(entry.params_schema.unwrap_or_default())
    }

    pub fn render_command(&self, req: &CommandRequest) -> Result<RenderedCommand, WorkbenchError> {
        let schema = self.command_schema(req)?;
        Ok(RenderedCommand {
            command: forge::render_command(req, &schema)?,
        })
    }

    pub fn expand_grid(&self, space: &SearchSpace) -> Result<CommandGrid, WorkbenchError> {
        let schema = self.command_schema(&space.base)?;
        let commands = forge::expand_grid(space, &schema)?;
        Ok(CommandGrid {
            count: commands.len(),
            commands,
        })
    }

    /// Runs a rendered `train`/`test` request as a synthetic run.
    pub fn train(&self, req: &CommandRequest) -> Result<RunRecord, WorkbenchError> {
        let schema = self.command_schema(req)?;
        let violations = forge::validate_values(&schema, &req.values);
        if !violations.is_empty() {
            return Err(ForgeError::Invalid(violations).into());
        }
        let steps = req
            .values
            .get("steps")
            .and_then(Value::as_u64)
            .unwrap_or(DEFAULT_STEPS);
        let seed = req.values.get("seed").and_then(Value::as_u64).unwrap_or(0);
        let mut config: Map<String, Value> = req.values.clone().into_iter().collect();
        config.insert("mode".into(), Value::from(req.mode.as_str()));
        config.insert("dataset".into(), Value::from(req.dataset.as_str()));
        config.insert("tokenizer".into(), Value::from(req.tokenizer.as_str()));
        Ok(self.tracker.synth_run(&SynthSpec {
            model: req.model.clone(),
            steps,
            seed,
            noise: 0.0,
            config,
        })?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn bundled_model_tree_and_patch() {
        let dir = tempfile::tempdir().unwrap();
        let wb = Workbench::open(dir.path()).unwrap();
        let tree = wb.model_tree("tiny-spike-gpt").unwrap();
        assert_eq!(tree.nodes.len(), 11);
        assert_eq!(tree.version, 1);
        let code = wb.module_code("tiny-spike-gpt", "blocks.0.lif").unwrap();
        let req = PatchRequest {
            module_id: None,
            new_text: code.text.replace("1.0", "0.5"),
            author: "t".into(),
            note: String::new(),
            base_version: Some(1),
        };
        assert!(wb.validate_patch("tiny-spike-gpt", "blocks.0.lif", &req).unwrap().ok);
        assert_eq!(wb.apply_patch("tiny-spike-gpt", "blocks.0.lif", &req).unwrap().version, 2);
        let err = wb.apply_patch("tiny-spike-gpt", "blocks.0.lif", &req).unwrap_err();
        assert_eq!((err.status(), err.code().as_str()), (409, "CONFLICT"));
        assert_eq!(wb.patch_history("tiny-spike-gpt").unwrap().len(), 1);

        let reopened = Workbench::open(dir.path()).unwrap();
        assert_eq!(reopened.model_tree("tiny-spike-gpt").unwrap().version, 2);
    }

    #[test]
    fn error_codes_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let wb = Workbench::open(dir.path()).unwrap();
        let req = PatchRequest {
            module_id: None,
            new_text: "        self.head = Linear(16)\n".into(),
            author: String::new(),
            note: String::new(),
            base_version: None,
        };
        let err = wb.apply_patch("tiny-spike-gpt", "head", &req).unwrap_err();
        assert_eq!((err.status(), err.code().as_str()), (422, "E005"));
        assert!(err.detailed_message().contains("Linear takes 2 arguments"));
        let err = wb.model_tree("nope").unwrap_err();
        assert_eq!(err.status(), 404);
    }

    #[test]
    fn commands_check_registry_names() {
        let dir = tempfile::tempdir().unwrap();
        let wb = Workbench::open(dir.path()).unwrap();
        let mut req: CommandRequest = serde_json::from_value(json!({
            "model": "tiny-spike-gpt", "dataset": "wikitext", "tokenizer": "gpt2-small",
            "values": {"lr": 0.001, "steps": 5}
        }))
        .unwrap();
        assert_eq!(
            wb.render_command(&req).unwrap().command,
            "darkit train tiny-spike-gpt --dataset wikitext --tokenizer gpt2-small --lr 0.001 --steps 5"
        );
        let run = wb.train(&req).unwrap();
        assert_eq!(wb.tracker().get_series(&run.run_id, "loss", 100).unwrap().points.len(), 5);
        req.dataset = "imagenet".into();
        assert_eq!(wb.render_command(&req).unwrap_err().status(), 404);
    }

    #[test]
    fn data_dir_precedence() {
        assert_eq!(resolve_data_dir(Some("x".into())), PathBuf::from("x"));
    }
}
