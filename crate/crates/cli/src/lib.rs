//! Command-line front end: argument parsing, run manifests, output routing
//! and exit codes. Subcommand bodies live in [`commands`] and [`verify`].

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

pub mod commands;
pub mod verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_SINGULAR: i32 = 3;

/// Environment override for the exhaustive size bounds.
pub const MAX_N_ENV: &str = "BULLETS_MAX_N";

#[derive(Debug, Parser, Serialize)]
#[command(name = "bullets", version, about = "Exact and stochastic experiments on colliding bullets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct Common {
    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Write the result payload here and the manifest next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Size bound for exhaustive or exact computations.
    #[arg(long = "max-n", global = true)]
    pub max_n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Exact survivor-count law q_n, or its floating moments.
    Dist {
        #[arg(long)]
        n: usize,
        /// Report double-precision moments instead of the exact law.
        #[arg(long)]
        floating: bool,
    },
    /// Exhaustive counts over all configurations of a parameter.
    Enumerate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value_t = EnumModel::Ff)]
        model: EnumModel,
        /// Segment height: a rational, `H` or `H/2`.
        #[arg(long, default_value = "0")]
        s: String,
        #[arg(long = "A", value_enum, default_value_t = CrossingArg::All)]
        a: CrossingArg,
    },
    /// Monte Carlo of the bullet models.
    Simulate {
        #[arg(long, value_enum)]
        model: SimModel,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Fixed parameter for ff/faf; drawn from the seed when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AccelerationArg::Identity)]
        acceleration: AccelerationArg,
    },
    /// Monte Carlo of the equivalent combinatorial models.
    Alt {
        #[arg(long, value_enum)]
        model: AltModel,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Slowest speed for the destruction-time model.
        #[arg(long, default_value_t = 0.5)]
        x: f64,
    },
    /// Genericity verdict and critical patterns of a parameter.
    Analyze {
        #[arg(long)]
        params: PathBuf,
    },
    /// Survivor counts |S_j| of every prefix of one shot sequence.
    Trajectory {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        /// Speeds in shot order and delays; uniform speeds with unit delays
        /// when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Lift the default size cap.
        #[arg(long = "long-run")]
        long_run: bool,
    },
    /// Executable verification suites.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnumModel {
    Ff,
    Lr,
    Rr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossingArg {
    Zero,
    All,
    Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimModel {
    Ru,
    Rr,
    Ff,
    Faf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AltModel {
    Flock,
    Cycles,
    Matrix,
    TwoStep,
    Markov,
    Destruction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccelerationArg {
    Identity,
    Square,
    Sqrt,
    OneMinusExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Qn,
    Lrrr,
    Tcs,
    Faf,
    Clt,
    Flock,
    Models,
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Dist { .. } => "dist",
            Command::Enumerate { .. } => "enumerate",
            Command::Simulate { .. } => "simulate",
            Command::Alt { .. } => "alt",
            Command::Analyze { .. } => "analyze",
            Command::Trajectory { .. } => "trajectory",
            Command::Verify { .. } => "verify",
        }
    }
}

/// A subcommand's result before routing.
#[derive(Debug, Clone)]
pub struct Output {
    pub result: Value,
    /// CSV rendering; subcommands without one fall back to JSON.
    pub csv: Option<String>,
    pub parameter_hash: Option<String>,
    pub exit_code: i32,
    /// Human-readable lines for standard error.
    pub log: String,
}

impl Output {
    pub fn new(result: Value) -> Self {
        Output {
            result,
            csv: None,
            parameter_hash: None,
            exit_code: EXIT_OK,
            log: String::new(),
        }
    }
}

/// Failures that map to a specific exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Carries the payload to print (for example a pattern report).
    #[error("{message}")]
    Singular {
        message: String,
        report: Option<Value>,
        parameter_hash: Option<String>,
    },
}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    CliError::Usage(message.into()).into()
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    if let Some(e) = err.downcast_ref::<CliError>() {
        return match e {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Singular { .. } => EXIT_SINGULAR,
        };
    }
    match err.downcast_ref::<bullets::Error>() {
        Some(bullets::Error::SingularParameter { .. })
        | Some(bullets::Error::DegenerateConstraint { .. })
        | Some(bullets::Error::NotGeneric { .. }) => EXIT_SINGULAR,
        _ => EXIT_USAGE,
    }
}

/// Bound precedence: `--max-n`, then the environment, then `default`.
pub fn max_n(common: &Common, default: usize) -> anyhow::Result<usize> {
    if let Some(m) = common.max_n {
        return Ok(m);
    }
    match std::env::var(MAX_N_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| usage(format!("{MAX_N_ENV} must be a non-negative integer, got {text:?}"))),
        Err(_) => Ok(default),
    }
}

fn execute(cli: &Cli) -> anyhow::Result<Output> {
    let body = || commands::dispatch(cli);
    match cli.common.jobs {
        Some(0) => Err(usage("--jobs must be positive")),
        Some(jobs) => rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?.install(body),
        None => body(),
    }
}

fn manifest(cli: &Cli, hash: Option<&str>, started: Instant) -> Value {
    json!({
        "subcommand": cli.command.name(),
        "flags": serde_json::to_value(cli).unwrap_or(Value::Null),
        "seed": cli.common.seed,
        "parameter_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "duration_ms": started.elapsed().as_millis() as u64,
    })
}

fn render(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    text
}

/// Parses `args` (including the program name), runs the subcommand and
/// writes the payload to `stdout` (or `--out`) and diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    let started = Instant::now();
    let _ = writeln!(stderr, "bullets {}: seed {}", cli.command.name(), cli.common.seed);

    let output = match execute(&cli) {
        Ok(o) => o,
        Err(err) => {
            let code = exit_code_for(&err);
            let _ = writeln!(stderr, "error: {err:#}");
            if let Some(CliError::Singular {
                report: Some(report),
                parameter_hash,
                ..
            }) = err.downcast_ref::<CliError>()
            {
                let mut o = Output::new(report.clone());
                o.exit_code = code;
                o.parameter_hash = parameter_hash.clone();
                return emit(&cli, o, started, stdout, stderr);
            }
            return code;
        }
    };
    emit(&cli, output, started, stdout, stderr)
}

fn emit(cli: &Cli, output: Output, started: Instant, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let _ = stderr.write_all(output.log.as_bytes());
    let manifest = manifest(cli, output.parameter_hash.as_deref(), started);
    let payload = match (cli.common.format, &output.csv) {
        (Format::Csv, Some(csv)) => csv.clone(),
        _ => render(&output.result),
    };
    let written = match &cli.common.out {
        Some(path) => {
            let mut manifest_path = path.clone().into_os_string();
            manifest_path.push(".manifest.json");
            std::fs::write(path, &payload)
                .and_then(|_| std::fs::write(&manifest_path, render(&manifest)))
                .map(|_| {
                    let _ = writeln!(stderr, "wrote {}", path.display());
                })
        }
        None => match cli.common.format {
            Format::Csv if output.csv.is_some() => {
                let _ = stderr.write_all(render(&manifest).as_bytes());
                stdout.write_all(payload.as_bytes())
            }
            _ => stdout.write_all(render(&json!({ "manifest": manifest, "result": output.result })).as_bytes()),
        },
    };
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: {e}");
        return EXIT_USAGE;
    }
    output.exit_code
}
