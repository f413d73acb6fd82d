//! Command-line drivers: `plan`, `eval`, `mock-serve` and `export`.
//!
//! Settings come from flags, then `HYPERRETRO_*` environment variables, then
//! an optional flat TOML file given with `--config`, then built-in defaults.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

pub mod eval;
pub mod export;
pub mod plan;
pub mod routes;
pub mod serve;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NO_ROUTE: u8 = 3;
pub const EXIT_EMPTY_EVAL: u8 = 4;

/// Bad flags, manifest, or input files. Exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "hyperretro", version, about = "Multi-step retrosynthesis planning over a reaction hypergraph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Plan synthesis routes for a target molecule
    Plan(PlanArgs),
    /// Evaluate a single-step retro model on a test set
    Eval(EvalArgs),
    /// Serve the toy chemistry over the model wire protocol
    MockServe(ServeArgs),
    /// Convert a saved graph snapshot to DOT or JSON
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizerChoice {
    /// The toy chemistry's own grammar when the manifest uses it, else strict.
    Auto,
    Strict,
    Placeholder,
    Inchified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FragmentMode {
    Whole,
    PerFragment,
}

#[derive(Args, Debug, Clone)]
pub struct PlanArgs {
    /// Target molecule SMILES
    #[arg(env = "HYPERRETRO_TARGET")]
    pub target: String,

    /// Flat TOML file with defaults for any of these flags
    #[arg(long, env = "HYPERRETRO_CONFIG")]
    pub config: Option<PathBuf>,

    /// Model manifest (TOML)
    #[arg(long, env = "HYPERRETRO_MODELS")]
    pub models: Option<PathBuf>,

    /// Stock file, one SMILES per line; repeat to take the union
    #[arg(long, action = ArgAction::Append, env = "HYPERRETRO_STOCK", value_delimiter = ',')]
    pub stock: Vec<PathBuf>,

    #[arg(long, env = "HYPERRETRO_MAX_STEPS", default_value_t = 6)]
    pub max_steps: usize,

    /// Pathway beam width
    #[arg(long, env = "HYPERRETRO_BEAMS", default_value_t = 10)]
    pub beams: usize,

    /// Retro suggestions per expanded molecule
    #[arg(long, env = "HYPERRETRO_RETRO_BEAMS", default_value_t = 15)]
    pub retro_beams: usize,

    /// Auto-accept likelihood threshold
    #[arg(long, env = "HYPERRETRO_THETA_HI", default_value_t = 0.6)]
    pub theta_hi: f64,

    /// Selectivity gap between forward top-1 and top-2
    #[arg(long, env = "HYPERRETRO_GAP", default_value_t = 0.2)]
    pub gap: f64,

    /// Forward predictions requested by the selectivity check
    #[arg(long, env = "HYPERRETRO_TOPK", default_value_t = 3)]
    pub topk: usize,

    /// Worker threads for model calls (0: one per CPU)
    #[arg(long, env = "HYPERRETRO_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Heavy-atom count that maps to the maximum surrogate complexity
    #[arg(long, env = "HYPERRETRO_COMPLEXITY_TMAX", default_value_t = 40.0)]
    pub complexity_tmax: f64,

    #[arg(long, env = "HYPERRETRO_NORMALIZER", value_enum, default_value_t = NormalizerChoice::Auto)]
    pub normalizer: NormalizerChoice,

    /// How `~`-bound molecules are matched against the stock
    #[arg(long, env = "HYPERRETRO_FRAGMENT_LOOKUP", value_enum, default_value_t = FragmentMode::Whole)]
    pub fragment_lookup: FragmentMode,

    /// Routes written to the output (best first)
    #[arg(long, env = "HYPERRETRO_MAX_ROUTES", default_value_t = 20)]
    pub max_routes: usize,

    #[arg(long, env = "HYPERRETRO_FORMAT", value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    /// Output file (stdout when absent)
    #[arg(long, short, env = "HYPERRETRO_OUT")]
    pub out: Option<PathBuf>,

    /// Also write the explored graph snapshot here
    #[arg(long, env = "HYPERRETRO_GRAPH")]
    pub graph: Option<PathBuf>,

    /// Also write the per-candidate expansion trace (JSON lines) here
    #[arg(long, env = "HYPERRETRO_TRACE")]
    pub trace: Option<PathBuf>,

    /// Reserved for randomized tie-breaks; recorded in the output
    #[arg(long, env = "HYPERRETRO_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long, env = "HYPERRETRO_CONFIG")]
    pub config: Option<PathBuf>,

    /// Test set: one target per line, or JSON lines with a `target` field
    #[arg(long, env = "HYPERRETRO_TEST")]
    pub test: Option<PathBuf>,

    #[arg(long, env = "HYPERRETRO_MODELS")]
    pub models: Option<PathBuf>,

    /// Retro suggestions per target
    #[arg(long, env = "HYPERRETRO_BEAMS", default_value_t = 10)]
    pub beams: usize,

    /// Histogram bins over (0.5, 1.0]
    #[arg(long, env = "HYPERRETRO_BINS", default_value_t = 50)]
    pub bins: usize,

    /// Entropy logarithm base: e, 2 or 10
    #[arg(long, env = "HYPERRETRO_LOG_BASE", default_value = "e")]
    pub log_base: String,

    /// Let the unrecognized superclass take part in the divergence
    #[arg(long, env = "HYPERRETRO_INCLUDE_UNRECOGNIZED")]
    pub include_unrecognized: bool,

    #[arg(long, env = "HYPERRETRO_NORMALIZER", value_enum, default_value_t = NormalizerChoice::Auto)]
    pub normalizer: NormalizerChoice,

    /// Report JSON (stdout when absent)
    #[arg(long, short, env = "HYPERRETRO_OUT")]
    pub out: Option<PathBuf>,

    /// Per-class histogram CSV
    #[arg(long, env = "HYPERRETRO_CSV")]
    pub csv: Option<PathBuf>,

    /// Per-suggestion audit JSON lines
    #[arg(long, env = "HYPERRETRO_AUDIT")]
    pub audit: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ServeTransport {
    Stdio,
    Http,
}

#[derive(Args, Debug, Clone)]
pub struct ServeArgs {
    #[arg(long, env = "HYPERRETRO_CONFIG")]
    pub config: Option<PathBuf>,

    /// Toy chemistry template file (JSON)
    #[arg(long, env = "HYPERRETRO_TEMPLATES")]
    pub templates: Option<PathBuf>,

    #[arg(long, env = "HYPERRETRO_TRANSPORT", value_enum, default_value_t = ServeTransport::Stdio)]
    pub transport: ServeTransport,

    /// Listen address for the HTTP transport
    #[arg(long, env = "HYPERRETRO_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: String,

    /// Requests handled at once
    #[arg(long, env = "HYPERRETRO_MAX_IN_FLIGHT", default_value_t = 8)]
    pub max_in_flight: usize,

    #[arg(long, env = "HYPERRETRO_COMPLEXITY_TMAX", default_value_t = 40.0)]
    pub complexity_tmax: f64,
}

#[derive(Args, Debug, Clone)]
pub struct ExportArgs {
    #[arg(long, env = "HYPERRETRO_CONFIG")]
    pub config: Option<PathBuf>,

    /// Graph snapshot written by `plan --graph`
    #[arg(long, env = "HYPERRETRO_GRAPH")]
    pub graph: Option<PathBuf>,

    /// Route file written by `plan`; highlights one of its routes
    #[arg(long, env = "HYPERRETRO_ROUTES")]
    pub routes: Option<PathBuf>,

    /// Which route to highlight (1-based)
    #[arg(long, env = "HYPERRETRO_RANK", default_value_t = 1)]
    pub rank: usize,

    #[arg(long, env = "HYPERRETRO_FORMAT", value_enum, default_value_t = OutputFormat::Dot)]
    pub format: OutputFormat,

    #[arg(long, short, env = "HYPERRETRO_OUT")]
    pub out: Option<PathBuf>,
}

/// Parses arguments, filling anything not given on the command line or in
/// the environment from the `--config` file.
pub fn parse_args<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let matches = Cli::command().try_get_matches_from(&args)?;
    let extra = match matches.subcommand() {
        Some((name, sub)) => match sub.get_one::<PathBuf>("config") {
            Some(path) => config_file_args(name, sub, path)?,
            None => Vec::new(),
        },
        None => Vec::new(),
    };
    if extra.is_empty() {
        return Cli::from_arg_matches(&matches);
    }
    let matches = Cli::command().try_get_matches_from(args.into_iter().chain(extra))?;
    Cli::from_arg_matches(&matches)
}

fn config_file_args(sub_name: &str, sub: &clap::ArgMatches, path: &Path) -> Result<Vec<OsString>, clap::Error> {
    let invalid = |msg: String| clap::Error::raw(clap::error::ErrorKind::InvalidValue, format!("{msg}\n"));
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("reading config {}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
    let cmd = Cli::command();
    let sub_cmd = cmd.find_subcommand(sub_name).expect("matched subcommand exists");
    let mut extra = Vec::new();
    for (key, value) in table {
        let id = key.replace('-', "_");
        let Some(arg) = sub_cmd.get_arguments().find(|a| a.get_id() == id.as_str()) else {
            return Err(invalid(format!("config {}: unknown key {key:?} for `{sub_name}`", path.display())));
        };
        if id == "config" {
            return Err(invalid(format!("config {}: nested `config` is not allowed", path.display())));
        }
        if matches!(sub.value_source(&id), Some(ValueSource::CommandLine | ValueSource::EnvVariable)) {
            continue;
        }
        let flag = match arg.get_long() {
            Some(long) => Some(format!("--{long}")),
            None => None,
        };
        let mut push = |v: String| {
            match &flag {
                Some(f) => {
                    extra.push(OsString::from(f));
                    extra.push(OsString::from(v));
                }
                None => extra.push(OsString::from(v)),
            }
        };
        match value {
            toml::Value::Boolean(b) => {
                if matches!(arg.get_action(), ArgAction::SetTrue) {
                    if b {
                        extra.push(OsString::from(flag.clone().expect("flags have a long name")));
                    }
                } else {
                    push(b.to_string());
                }
            }
            toml::Value::String(s) => push(s),
            toml::Value::Integer(i) => push(i.to_string()),
            toml::Value::Float(f) => push(f.to_string()),
            toml::Value::Array(items) => {
                for item in items {
                    match item {
                        toml::Value::String(s) => push(s),
                        other => push(other.to_string()),
                    }
                }
            }
            other => return Err(invalid(format!("config {}: unsupported value for {key:?}: {other}", path.display()))),
        }
    }
    Ok(extra)
}

/// Runs a parsed command and returns the process exit status.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Plan(a) => plan::run(&a),
        Command::Eval(a) => eval::run(&a),
        Command::MockServe(a) => serve::run(&a),
        Command::Export(a) => export::run(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_FAILURE
            }
        }
    }
}

/// Writes to `path`, or stdout when absent.
pub fn write_output(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    use anyhow::Context;
    use std::io::Write;
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}
