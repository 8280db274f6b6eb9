//! Command-line experiment runner.
//!
//! Parameters are resolved in three layers: built-in defaults, then the JSON
//! document given by `--config`, then command-line flags. The resolved
//! parameters are written to `config.json` next to the reports, so a run can
//! be replayed with `--config <out>/config.json`.
//!
//! Exit status: 0 when every checked claim holds, 1 on a falsification or a
//! numerical failure, 2 on a usage or configuration error.

mod chain;
mod counterexample;
mod smve;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::report::{write_json, CsvTable, Report};
use crate::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nlerg", version, about = "Ergodicity experiments for nonlinear Markov chains and mean-field diffusions")]
pub struct Cli {
    /// Directory for report files.
    #[arg(long, global = true, env = "NLERG_OUT_DIR", default_value = "nlerg-out")]
    pub out: PathBuf,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// JSON file with parameters for the chosen command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a kernel, propagate a law and check the rate bound.
    Chain(chain::ChainArgs),
    /// Reproduce one of the non-ergodic constructions.
    #[command(subcommand)]
    Counterexample(counterexample::CounterexampleCommand),
    /// Simulate the mean-field particle system and run a diagnostic.
    #[command(subcommand)]
    Smve(smve::SmveMode),
    /// Weighted-TV contraction certificate for a Markov kernel.
    Hm(chain::HmArgs),
}

/// Failure of a command, mapped onto the exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::InvalidMeasure(_)
            | Error::DimensionMismatch { .. }
            | Error::Expression { .. }
            | Error::RowValidation { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

pub(crate) type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// What a command produces.
pub(crate) struct Output {
    pub command: String,
    pub config: Value,
    pub findings: Vec<String>,
    pub result: Value,
    pub tables: Vec<CsvTable>,
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Defaults overlaid with the `--config` document, if any.
pub(crate) fn load_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<C> {
    let Some(path) = path else { return Ok(C::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    // accept the config.json written by a previous run
    if let Some(params) = doc.get_mut("params") {
        doc = params.take();
    }
    serde_json::from_value(doc).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Replaces config fields with the flags that were given.
macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() {
            $cfg.$field = v;
        })*
    };
}
pub(crate) use overlay;

/// Parses `args` and runs the command; returns the exit status.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("failed: {msg}");
            EXIT_FALSIFIED
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn execute(cli: &Cli) -> CliResult<i32> {
    if cli.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let cfg = cli.config.as_deref();
    let output = pool.install(|| match &cli.command {
        Command::Chain(a) => chain::run_chain(a, cfg),
        Command::Hm(a) => chain::run_hm(a, cfg),
        Command::Counterexample(c) => counterexample::run(c, cfg),
        Command::Smve(mode) => smve::run(mode, cfg),
    })?;
    let elapsed = clock.elapsed().as_secs_f64();
    write_outputs(cli, &output, started, elapsed).map_err(|e| usage(format!("cannot write to {}: {e}", cli.out.display())))?;
    let report = Report::new(output.command.clone(), output.findings.clone(), ());
    println!("{}: {:?} ({} finding(s)); reports in {}", output.command, report.status, output.findings.len(), cli.out.display());
    for f in &output.findings {
        println!("  - {f}");
    }
    Ok(if output.findings.is_empty() { EXIT_PASS } else { EXIT_FALSIFIED })
}

fn write_outputs(cli: &Cli, output: &Output, started: SystemTime, elapsed: f64) -> std::io::Result<()> {
    std::fs::create_dir_all(&cli.out)?;
    let config = json!({
        "command": output.command,
        "workers": cli.workers,
        "params": output.config,
    });
    write_json(&cli.out.join("config.json"), &config)?;
    let report = Report::new(output.command.clone(), output.findings.clone(), output.result.clone());
    write_json(&cli.out.join("report.json"), &report)?;
    for t in &output.tables {
        t.write(&cli.out)?;
    }
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_seconds": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "elapsed_seconds": elapsed,
        "argv": std::env::args().collect::<Vec<_>>(),
    });
    write_json(&cli.out.join("metadata.json"), &meta)
}
