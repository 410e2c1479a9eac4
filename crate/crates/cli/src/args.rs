use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "darkit", version, about = "Workbench for spiking language-model engineering")]
pub struct Cli {
    /// Talk to a running service instead of the local data directory.
    #[arg(long, global = true, value_name = "URL")]
    pub server: Option<String>,
    /// Data directory (default: $DARKIT_DATA_DIR, then ./darkit-data).
    #[arg(long, global = true, value_name = "PATH")]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    #[value(alias = "tree")]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct Output {
    /// Output format; `json` prints the document the HTTP API returns.
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = darkit_core::workbench::DEFAULT_PORT)]
        port: u16,
    },
    /// Print the module tree of a SpikeDef file or module manifest.
    Extract {
        file: PathBuf,
        /// Root class (default: the last class in the file).
        #[arg(long)]
        model: Option<String>,
        /// Print the module manifest instead of the display tree.
        #[arg(long)]
        manifest: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Print the code segment of one module.
    Code {
        file: PathBuf,
        #[arg(long)]
        module: String,
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        out: Output,
    },
    /// Validate and re-inject an edit of one module's code segment.
    Patch {
        file: PathBuf,
        #[arg(long)]
        module: String,
        /// File holding the replacement text.
        #[arg(long = "patch", value_name = "FILE")]
        patch_file: PathBuf,
        #[arg(long)]
        check_only: bool,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        base_version: Option<u64>,
        #[arg(long, default_value = "")]
        author: String,
        #[arg(long, default_value = "")]
        note: String,
        #[command(flatten)]
        out: Output,
    },
    /// Registry models: tree, code, patches.
    #[command(subcommand)]
    Models(ModelsCommand),
    /// Validate or compile a flow document.
    #[command(subcommand)]
    Flow(FlowCommand),
    /// Generate tuning commands.
    #[command(subcommand)]
    Cmd(CmdCommand),
    /// Record runs.
    #[command(subcommand)]
    Run(RunCommand),
    /// Train a registry model (a synthetic run at desk scale).
    Train(TrainArgs),
    /// Evaluate a registry model (a synthetic run at desk scale).
    Test(TrainArgs),
    /// Inspect recorded runs.
    #[command(subcommand)]
    Runs(RunsCommand),
    /// Manage datasets, tokenizers and model plugins.
    #[command(subcommand)]
    Registry(RegistryCommand),
}

#[derive(Debug, Subcommand)]
pub enum ModelsCommand {
    Tree {
        name: String,
        #[command(flatten)]
        out: Output,
    },
    Code {
        name: String,
        #[arg(long)]
        module: String,
        #[command(flatten)]
        out: Output,
    },
    Patch {
        name: String,
        #[arg(long)]
        module: String,
        #[arg(long = "patch", value_name = "FILE")]
        patch_file: PathBuf,
        #[arg(long)]
        check_only: bool,
        #[arg(long)]
        base_version: Option<u64>,
        #[arg(long, default_value = "")]
        author: String,
        #[arg(long, default_value = "")]
        note: String,
        #[command(flatten)]
        out: Output,
    },
    History {
        name: String,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Subcommand)]
pub enum FlowCommand {
    Validate {
        file: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    Shapes {
        file: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    Compile {
        file: PathBuf,
        /// Write the source here instead of stdout.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, Args)]
pub struct RequestArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub tokenizer: String,
    #[arg(long, value_enum, default_value_t)]
    pub mode: ModeArg,
    /// Parameter value, `name=value`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum CmdCommand {
    Render {
        #[command(flatten)]
        req: RequestArgs,
        #[command(flatten)]
        out: Output,
    },
    Grid {
        #[command(flatten)]
        req: RequestArgs,
        /// Search axis, `name=v1,v2,...`; repeatable, in order.
        #[arg(long = "grid", value_name = "NAME=V1,V2")]
        grid: Vec<String>,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Subcommand)]
pub enum RunCommand {
    Simulate {
        #[arg(long)]
        model: String,
        #[arg(long)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    pub model: String,
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub tokenizer: String,
    /// Model parameters as `--name value`, `--flag` or `--no-flag`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "PARAMS")]
    pub params: Vec<String>,
    #[arg(long, value_enum, default_value_t, hide = true)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatusArg {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Subcommand)]
pub enum RunsCommand {
    List {
        #[arg(long)]
        model: Option<String>,
        #[arg(long, value_enum)]
        status: Option<StatusArg>,
        #[command(flatten)]
        out: Output,
    },
    Show {
        id: String,
        #[command(flatten)]
        out: Output,
    },
    Watch {
        id: String,
    },
    Metrics {
        id: String,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = darkit_core::tracker::DEFAULT_MAX_POINTS)]
        max_points: usize,
        #[command(flatten)]
        out: Output,
    },
    Compare {
        #[arg(required = true)]
        ids: Vec<String>,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = darkit_core::tracker::DEFAULT_MAX_POINTS)]
        max_points: usize,
        #[command(flatten)]
        out: Output,
    },
    Export {
        id: String,
        #[arg(long, value_enum)]
        format: ExportArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Dataset,
    Tokenizer,
    Model,
}

#[derive(Debug, Subcommand)]
pub enum RegistryCommand {
    List {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[command(flatten)]
        out: Output,
    },
    /// Install an entry from a manifest.json; payload paths are relative to it.
    Add {
        manifest: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    Verify {
        name: String,
        #[arg(value_enum)]
        kind: KindArg,
        version: String,
        #[command(flatten)]
        out: Output,
    },
    Remove {
        name: String,
        #[arg(value_enum)]
        kind: KindArg,
        version: String,
        #[command(flatten)]
        out: Output,
    },
}
