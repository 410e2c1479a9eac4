//! The `darkit` command line: every workbench feature, run against the local
//! data directory or, with `--server URL`, against a running service.

pub mod args;
mod backend;
mod render;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Parser;
use serde::de::DeserializeOwned;
use serde_json::Value;

use darkit_api::UploadRequest;
use darkit_core::extract::{extract_from_manifest, extract_static, get_code, to_display_tree, ModuleManifest, ModuleTree};
use darkit_core::flow::FlowGraph;
use darkit_core::forge::{self, Axis, CommandRequest, Mode, ParamSpec, SearchSpace};
use darkit_core::patch::{CodePatch, ModelWorkspace, PatchError};
use darkit_core::registry::{latest_of, EntryKey, EntryKind, RegistryEntry};
use darkit_core::spikedef::{parse, SourceFile, SourceReadError};
use darkit_core::tracker::{Event, EventKind, SynthSpec, LOG_FILE};
use darkit_core::workbench::{self, resolve_data_dir, PatchOutcome, PatchRequest, WorkbenchError, ROOT_ALIAS};

pub use args::Cli;
use args::*;
use backend::{encode, to_json, Backend, Body};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("[{code}] {message}")]
    Domain { code: String, message: String },
    #[error("{0}")]
    Usage(String),
    /// The report is already on stdout; the command still failed.
    #[error("{0}")]
    Failed(String),
    #[error("cannot reach server: {0}")]
    Remote(String),
    #[error("{0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
    /// The reader of stdout went away.
    #[error("output closed")]
    ClosedOutput,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<WorkbenchError> for CliError {
    fn from(e: WorkbenchError) -> Self {
        CliError::Domain {
            code: e.code(),
            message: e.detailed_message(),
        }
    }
}

impl From<PatchError> for CliError {
    fn from(e: PatchError) -> Self {
        WorkbenchError::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::ClosedOutput;
        }
        CliError::Io(e.to_string())
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) | Err(CliError::ClosedOutput) => 0,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let backend = match &cli.server {
        Some(url) => Backend::remote(url),
        None => Backend::local(resolve_data_dir(cli.data_dir.clone())),
    };
    match cli.command {
        Command::Serve { port } => serve(&cli, port),
        Command::Extract {
            file,
            model,
            manifest,
            out: o,
        } => extract(&file, model.as_deref(), manifest, o.format, out),
        Command::Code {
            file,
            module,
            model,
            out: o,
        } => {
            let tree = load_tree(&file, model.as_deref())?;
            let seg = get_code(&tree, workbench::module_id_from_path(&module)).map_err(WorkbenchError::from)?;
            render::code(out, o.format, &to_json(&seg)?)
        }
        Command::Patch {
            file,
            module,
            patch_file,
            check_only,
            model,
            base_version,
            author,
            note,
            out: o,
        } => {
            let ws = ModelWorkspace::open_file(&file, model)?;
            let text = read_text(&patch_file)?;
            let patch = CodePatch::new(ws.name(), workbench::module_id_from_path(&module), text, author, note)?;
            if check_only {
                let report = ws.validate(&patch)?;
                render::validation(out, o.format, &to_json(&report)?)
            } else {
                let (tree, record) = ws.apply(&patch, base_version)?;
                let outcome = PatchOutcome {
                    version: tree.version,
                    record,
                };
                render::patch_outcome(out, o.format, &to_json(&outcome)?)
            }
        }
        Command::Models(cmd) => models(&backend, cmd, out),
        Command::Flow(cmd) => flow(&backend, cmd, out),
        Command::Cmd(cmd) => commands(&backend, cmd, out),
        Command::Run(RunCommand::Simulate {
            model,
            steps,
            seed,
            noise,
            out: o,
        }) => {
            let spec = SynthSpec {
                model,
                steps,
                seed,
                noise,
                config: Default::default(),
            };
            let doc = backend.call(|wb| Ok(wb.tracker().synth_run(&spec)?), "POST", "/api/runs/simulate", Body::json(&spec)?)?;
            render::run_created(out, o.format, &doc)
        }
        Command::Train(a) => train(&backend, a, Mode::Train, out),
        Command::Test(a) => train(&backend, a, Mode::Test, out),
        Command::Runs(cmd) => runs(&backend, cmd, out),
        Command::Registry(cmd) => registry(&backend, cmd, out),
    }
}

fn serve(cli: &Cli, port: u16) -> Result<(), CliError> {
    if cli.server.is_some() {
        return Err(CliError::Usage("`serve` runs a server; it cannot target one with --server".into()));
    }
    let data_dir = resolve_data_dir(cli.data_dir.clone());
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(darkit_api::serve(port, data_dir))
        .map_err(|e| CliError::Io(e.to_string()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn parse_doc<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Domain {
        code: "BAD_REQUEST".into(),
        message: format!("{} is not a valid document: {e}", path.display()),
    })
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Tree of a SpikeDef file, or of a module manifest when the file is JSON.
fn load_tree(path: &Path, model: Option<&str>) -> Result<ModuleTree, CliError> {
    if is_json(path) {
        let manifest: ModuleManifest = parse_doc(path)?;
        return Ok(extract_from_manifest(&manifest, None).map_err(WorkbenchError::from)?);
    }
    let file = SourceFile::read(path).map_err(|e| match e {
        SourceReadError::Parse(e) => WorkbenchError::from(e).into(),
        other => CliError::Io(format!("cannot read {}: {other}", path.display())),
    })?;
    let index = parse(&file).map_err(WorkbenchError::from)?;
    Ok(extract_static(&index, model).map_err(WorkbenchError::from)?)
}

fn extract(path: &Path, model: Option<&str>, manifest: bool, format: Format, out: &mut dyn Write) -> Result<(), CliError> {
    let tree = load_tree(path, model)?;
    if manifest {
        return render::json(out, &to_json(&ModuleManifest::from_tree(&tree))?);
    }
    render::tree(out, format, &to_json(&to_display_tree(&tree))?)
}

fn module_path(name: &str, module: &str, tail: &str) -> String {
    let id = if module.is_empty() { ROOT_ALIAS } else { module };
    format!("/api/models/{}/modules/{}/{tail}", encode(name), encode(id))
}

fn models(backend: &Backend, cmd: ModelsCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ModelsCommand::Tree { name, out: o } => {
            let path = format!("/api/models/{}/tree", encode(&name));
            let doc = backend.call(|wb| wb.model_tree(&name), "GET", &path, Body::None)?;
            render::tree(out, o.format, &doc)
        }
        ModelsCommand::Code { name, module, out: o } => {
            let id = workbench::module_id_from_path(&module);
            let doc = backend.call(|wb| wb.module_code(&name, id), "GET", &module_path(&name, id, "code"), Body::None)?;
            render::code(out, o.format, &doc)
        }
        ModelsCommand::Patch {
            name,
            module,
            patch_file,
            check_only,
            base_version,
            author,
            note,
            out: o,
        } => {
            let id = workbench::module_id_from_path(&module);
            let req = PatchRequest {
                module_id: None,
                new_text: read_text(&patch_file)?,
                author,
                note,
                base_version,
            };
            if check_only {
                let path = module_path(&name, id, "validate");
                let doc = backend.call(|wb| wb.validate_patch(&name, id, &req), "POST", &path, Body::json(&req)?)?;
                render::validation(out, o.format, &doc)
            } else {
                let path = module_path(&name, id, "patch");
                let doc = backend.call(|wb| wb.apply_patch(&name, id, &req), "POST", &path, Body::json(&req)?)?;
                render::patch_outcome(out, o.format, &doc)
            }
        }
        ModelsCommand::History { name, out: o } => {
            let path = format!("/api/models/{}/patches", encode(&name));
            let doc = backend.call(|wb| wb.patch_history(&name), "GET", &path, Body::None)?;
            render::history(out, o.format, &doc)
        }
    }
}

fn flow(backend: &Backend, cmd: FlowCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        FlowCommand::Validate { file, out: o } => {
            let graph: FlowGraph = parse_doc(&file)?;
            let doc = backend.call_free(|| Ok(workbench::flow_validate(&graph)), "/api/flows/validate", Body::json(&graph)?)?;
            render::flow_report(out, o.format, &doc)
        }
        FlowCommand::Shapes { file, out: o } => {
            let graph: FlowGraph = parse_doc(&file)?;
            let doc = backend.call_free(|| workbench::flow_shapes(&graph), "/api/flows/shapes", Body::json(&graph)?)?;
            render::shapes(out, o.format, &doc)
        }
        FlowCommand::Compile { file, output, out: o } => {
            let graph: FlowGraph = parse_doc(&file)?;
            let doc = backend.call_free(|| workbench::flow_compile(&graph), "/api/flows/compile", Body::json(&graph)?)?;
            render::compiled(out, o.format, &doc, output.as_deref())
        }
    }
}

/// Parameter schema of a registry model, read through the backend.
fn model_schema(backend: &Backend, model: &str) -> Result<Vec<ParamSpec>, CliError> {
    let doc = backend.call(
        |wb| Ok(wb.registry().list_entries(Some(EntryKind::Model))),
        "GET",
        "/api/registry?kind=model",
        Body::None,
    )?;
    let entries: Vec<RegistryEntry> = render::decode(&doc)?;
    let entry = latest_of(&entries, EntryKind::Model, model).ok_or_else(|| CliError::Domain {
        code: "NOT_FOUND".into(),
        message: format!("unknown model `{model}`"),
    })?;
    Ok(entry.params_schema.clone().unwrap_or_default())
}

fn spec<'a>(schema: &'a [ParamSpec], name: &str) -> Result<&'a ParamSpec, CliError> {
    schema
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| CliError::Usage(format!("unknown parameter `{name}`")))
}

fn split_assign(text: &str, flag: &str) -> Result<(String, String), CliError> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("{flag} expects NAME=VALUE, got `{text}`")))?;
    Ok((name.replace('-', "_"), value.to_string()))
}

fn usage(e: forge::ForgeError) -> CliError {
    CliError::Usage(e.to_string())
}

fn command_request(req: RequestArgs, schema: &[ParamSpec]) -> Result<CommandRequest, CliError> {
    let mut values = BTreeMap::new();
    for item in &req.set {
        let (name, text) = split_assign(item, "--set")?;
        let value = forge::parse_value(spec(schema, &name)?, &text).map_err(usage)?;
        values.insert(name, value);
    }
    Ok(CommandRequest {
        model: req.model,
        dataset: req.dataset,
        tokenizer: req.tokenizer,
        values,
        mode: match req.mode {
            ModeArg::Train => Mode::Train,
            ModeArg::Test => Mode::Test,
        },
    })
}

fn commands(backend: &Backend, cmd: CmdCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        CmdCommand::Render { req, out: o } => {
            let schema = model_schema(backend, &req.model)?;
            let req = command_request(req, &schema)?;
            let doc = backend.call(|wb| wb.render_command(&req), "POST", "/api/commands/render", Body::json(&req)?)?;
            render::rendered(out, o.format, &doc)
        }
        CmdCommand::Grid { req, grid, out: o } => {
            let schema = model_schema(backend, &req.model)?;
            let base = command_request(req, &schema)?;
            let mut axes = Vec::new();
            for item in &grid {
                let (name, list) = split_assign(item, "--grid")?;
                let spec = spec(&schema, &name)?;
                let values = list
                    .split(',')
                    .map(|t| forge::parse_value(spec, t))
                    .collect::<Result<Vec<Value>, _>>()
                    .map_err(usage)?;
                axes.push(Axis { param: name, values });
            }
            let space = SearchSpace { base, axes };
            let doc = backend.call(|wb| wb.expand_grid(&space), "POST", "/api/commands/grid", Body::json(&space)?)?;
            render::grid(out, o.format, &doc)
        }
    }
}

/// Pulls global flags that landed among trailing parameter words.
fn split_trailing(params: Vec<String>) -> Result<(Vec<String>, Option<Format>), CliError> {
    let mut rest = Vec::new();
    let mut format = None;
    let mut words = params.into_iter();
    while let Some(word) = words.next() {
        let (flag, inline) = match word.split_once('=') {
            Some((f, v)) if f.starts_with("--") => (f.to_string(), Some(v.to_string())),
            _ => (word.clone(), None),
        };
        if flag == "--format" {
            let value = inline.or_else(|| words.next()).unwrap_or_default();
            format = Some(match value.as_str() {
                "json" => Format::Json,
                "text" | "tree" => Format::Text,
                other => return Err(CliError::Usage(format!("invalid --format `{other}`"))),
            });
        } else if flag == "--server" || flag == "--data-dir" {
            return Err(CliError::Usage(format!("{flag} must come before the subcommand")));
        } else if flag == "--help" || flag == "-h" {
            return Err(CliError::Usage("parameters follow the model schema; see `darkit registry list --kind model --format json`".into()));
        } else {
            rest.push(word);
        }
    }
    Ok((rest, format))
}

/// The request a `train`/`test` invocation stands for, plus any `--format`
/// given among the trailing parameters.
pub fn train_request(a: TrainArgs, mode: Mode, schema: &[ParamSpec]) -> Result<(CommandRequest, Format), CliError> {
    let (params, format) = split_trailing(a.params)?;
    let req = CommandRequest {
        values: forge::parse_param_args(&params, schema).map_err(usage)?,
        model: a.model,
        dataset: a.dataset,
        tokenizer: a.tokenizer,
        mode,
    };
    Ok((req, format.unwrap_or(a.format)))
}

fn train(backend: &Backend, a: TrainArgs, mode: Mode, out: &mut dyn Write) -> Result<(), CliError> {
    let schema = model_schema(backend, &a.model)?;
    let (req, format) = train_request(a, mode, &schema)?;
    let doc = backend.call(|wb| wb.train(&req), "POST", "/api/commands/run", Body::json(&req)?)?;
    render::run_created(out, format, &doc)
}

fn runs(backend: &Backend, cmd: RunsCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        RunsCommand::List { model, status, out: o } => {
            let status = status.map(|s| match s {
                StatusArg::Running => darkit_core::tracker::RunStatus::Running,
                StatusArg::Completed => darkit_core::tracker::RunStatus::Completed,
                StatusArg::Failed => darkit_core::tracker::RunStatus::Failed,
            });
            let mut query = Vec::new();
            if let Some(m) = &model {
                query.push(format!("model={}", encode(m)));
            }
            if let Some(s) = status {
                query.push(format!("status={}", s.as_str()));
            }
            let path = with_query("/api/runs", &query);
            let filter = darkit_core::tracker::RunFilter { model, status };
            let doc = backend.call(|wb| Ok(wb.tracker().list_runs(&filter)), "GET", &path, Body::None)?;
            render::run_list(out, o.format, &doc)
        }
        RunsCommand::Show { id, out: o } => {
            let path = format!("/api/runs/{}", encode(&id));
            let doc = backend.call(|wb| Ok(wb.tracker().run_detail(&id)?), "GET", &path, Body::None)?;
            render::run_detail(out, o.format, &doc)
        }
        RunsCommand::Watch { id } => watch(backend, &id, out),
        RunsCommand::Metrics {
            id,
            metric,
            max_points,
            out: o,
        } => {
            let path = format!(
                "/api/runs/{}/metrics?name={}&max_points={max_points}",
                encode(&id),
                encode(&metric)
            );
            let doc = backend.call(|wb| Ok(wb.tracker().get_series(&id, &metric, max_points)?), "GET", &path, Body::None)?;
            render::series(out, o.format, &doc)
        }
        RunsCommand::Compare {
            ids,
            metric,
            max_points,
            out: o,
        } => {
            let joined: Vec<String> = ids.iter().map(|i| encode(i)).collect();
            let path = format!(
                "/api/runs/compare?ids={}&name={}&max_points={max_points}",
                joined.join(","),
                encode(&metric)
            );
            let doc = backend.call(|wb| Ok(wb.tracker().compare_runs(&ids, &metric, max_points)?), "GET", &path, Body::None)?;
            render::chart(out, o.format, &doc)
        }
        RunsCommand::Export { id, format } => {
            let fmt = match format {
                ExportArg::Csv => darkit_core::tracker::ExportFormat::Csv,
                ExportArg::Json => darkit_core::tracker::ExportFormat::Json,
            };
            let name = match format {
                ExportArg::Csv => "csv",
                ExportArg::Json => "json",
            };
            let path = format!("/api/runs/{}/export?format={name}", encode(&id));
            let text = backend.call_text(|wb| Ok(wb.tracker().export_run(&id, fmt)?), &path)?;
            render::raw(out, &text)
        }
    }
}

fn with_query(path: &str, query: &[String]) -> String {
    if query.is_empty() {
        path.to_string()
    } else {
        format!("{path}?{}", query.join("&"))
    }
}

fn is_run_end(line: &str) -> bool {
    serde_json::from_str::<Event>(line).is_ok_and(|e| matches!(e.kind, EventKind::RunEnd { .. }))
}

/// Prints events accepted after the call, one NDJSON line each, until the
/// run ends.
fn watch(backend: &Backend, id: &str, out: &mut dyn Write) -> Result<(), CliError> {
    if backend.is_remote() {
        let reader = BufReader::new(backend.stream(&format!("/api/runs/{}/stream", encode(id)))?);
        for line in reader.lines() {
            let line = line.map_err(|e| CliError::Remote(e.to_string()))?;
            let Some(data) = line.strip_prefix("data:") else {
                continue;
            };
            let data = data.strip_prefix(' ').unwrap_or(data);
            writeln!(out, "{data}")?;
            out.flush()?;
            if is_run_end(data) {
                break;
            }
        }
        return Ok(());
    }
    let wb = backend.workbench()?;
    let record = wb.tracker().get_run(id).map_err(WorkbenchError::from)?;
    if record.status.is_terminal() {
        return Ok(());
    }
    let path = wb.tracker().dir().join(id).join(LOG_FILE);
    let mut file = fs::File::open(&path)?;
    let mut pos = file.seek(SeekFrom::End(0))?;
    let mut pending = String::new();
    loop {
        file.seek(SeekFrom::Start(pos))?;
        let mut chunk = String::new();
        pos += file.read_to_string(&mut chunk)? as u64;
        pending.push_str(&chunk);
        while let Some(end) = pending.find('\n') {
            let line: String = pending.drain(..=end).collect();
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            writeln!(out, "{line}")?;
            out.flush()?;
            if is_run_end(line) {
                return Ok(());
            }
        }
        std::thread::sleep(Duration::from_millis(100));
    }
}

fn entry_key(name: String, kind: KindArg, version: String) -> EntryKey {
    let kind = match kind {
        KindArg::Dataset => EntryKind::Dataset,
        KindArg::Tokenizer => EntryKind::Tokenizer,
        KindArg::Model => EntryKind::Model,
    };
    EntryKey { kind, name, version }
}

fn entry_path(key: &EntryKey) -> String {
    format!("/api/registry/{}/{}/{}", key.kind, encode(&key.name), encode(&key.version))
}

/// Reads an entry manifest and its payload files, which sit next to it.
fn load_upload(manifest: &Path) -> Result<(RegistryEntry, BTreeMap<String, Vec<u8>>), CliError> {
    let entry: RegistryEntry = parse_doc(manifest)?;
    let base: PathBuf = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut files = BTreeMap::new();
    for record in &entry.files {
        let path = base.join(&record.path);
        let bytes = fs::read(&path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        files.insert(record.path.clone(), bytes);
    }
    Ok((entry, files))
}

fn registry(backend: &Backend, cmd: RegistryCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        RegistryCommand::List { kind, out: o } => {
            let kind = kind.map(|k| entry_key(String::new(), k, String::new()).kind);
            let path = match kind {
                Some(k) => format!("/api/registry?kind={k}"),
                None => "/api/registry".to_string(),
            };
            let doc = backend.call(|wb| Ok(wb.registry().list_entries(kind)), "GET", &path, Body::None)?;
            render::registry_list(out, o.format, &doc)
        }
        RegistryCommand::Add { manifest, out: o } => {
            let (entry, files) = load_upload(&manifest)?;
            let upload = UploadRequest::new(entry.clone(), &files);
            let doc = backend.call(
                move |wb| Ok(wb.registry().add_entry(entry, &files)?),
                "POST",
                "/api/registry",
                Body::json(&upload)?,
            )?;
            render::entry_changed(out, o.format, &doc, "installed")
        }
        RegistryCommand::Verify {
            name,
            kind,
            version,
            out: o,
        } => {
            let key = entry_key(name, kind, version);
            let path = format!("{}/verify", entry_path(&key));
            let doc = backend.call(|wb| Ok(wb.registry().verify_entry(&key)?), "POST", &path, Body::None)?;
            render::verify(out, o.format, &doc)
        }
        RegistryCommand::Remove {
            name,
            kind,
            version,
            out: o,
        } => {
            let key = entry_key(name, kind, version);
            let doc = backend.call(|wb| Ok(wb.registry().remove_entry(&key)?), "DELETE", &entry_path(&key), Body::None)?;
            render::entry_changed(out, o.format, &doc, "removed")
        }
    }
}
