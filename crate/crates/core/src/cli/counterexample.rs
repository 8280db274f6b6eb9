use std::path::Path;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_config, overlay, to_value, CliResult, Output};
use crate::counterexamples::{
    continuum_interval, demonstrate_no_convergence, geometric_profile, verify_continuum, verify_no_invariant_recursion,
    verify_oscillation, CounterexampleReport,
};
use crate::measures::DiscreteMeasure;
use crate::report::{fmt_f64, CsvTable};

#[derive(Debug, Clone, Subcommand)]
pub enum CounterexampleCommand {
    /// Two-state chain whose law oscillates with period two.
    Oscillation(OscillationArgs),
    /// Two-state chain with a whole interval of invariant laws.
    Continuum(ContinuumArgs),
    /// Replays the stationarity recursion of the chain without invariant laws.
    NoInvariant(NoInvariantArgs),
    /// Evolves the truncated chain without invariant laws.
    NoConvergence(NoConvergenceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OscillationArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillationConfig {
    pub gamma: f64,
    pub a: f64,
    pub steps: usize,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            a: 0.25,
            steps: 100,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ContinuumArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated mixing weights `a` of the sampled invariant laws.
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuumConfig {
    pub alpha: f64,
    pub lambda: f64,
    /// Five evenly spaced points of the invariant interval when unset.
    pub a: Option<Vec<f64>>,
    pub steps: usize,
}

impl Default for ContinuumConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            lambda: 0.8,
            a: None,
            steps: 100,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct NoInvariantArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoInvariantConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub n_max: usize,
}

impl Default for NoInvariantConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            lambda: 0.6,
            n_max: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    /// All mass on state 1.
    Dirac,
    /// The geometric profile suggested by the stationarity recursion.
    Geometric,
}

#[derive(Debug, Clone, Args)]
pub struct NoConvergenceArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, value_enum)]
    start: Option<Start>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoConvergenceConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub truncation: usize,
    pub steps: usize,
    pub start: Start,
}

impl Default for NoConvergenceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            lambda: 0.6,
            truncation: 200,
            steps: 500,
            start: Start::Dirac,
        }
    }
}

fn claims_output(command: &str, config: serde_json::Value, report: &CounterexampleReport) -> Output {
    let mut t = CsvTable::new("claims", &["name", "passed", "witness"]);
    for c in &report.claims {
        t.push(vec![c.name.clone(), c.passed.to_string(), fmt_f64(c.witness)]);
    }
    Output {
        command: command.to_string(),
        config,
        findings: report
            .failed_claims()
            .map(|c| format!("claim `{}` not reproduced (witness {})", c.name, fmt_f64(c.witness)))
            .collect(),
        result: to_value(report),
        tables: vec![t],
    }
}

pub(crate) fn run(cmd: &CounterexampleCommand, config: Option<&Path>) -> CliResult<Output> {
    match cmd {
        CounterexampleCommand::Oscillation(args) => {
            let mut cfg: OscillationConfig = load_config(config)?;
            overlay!(cfg, args; gamma, a, steps);
            let report = verify_oscillation(cfg.gamma, cfg.a, cfg.steps)?;
            Ok(claims_output("counterexample oscillation", to_value(&cfg), &report))
        }
        CounterexampleCommand::Continuum(args) => {
            let mut cfg: ContinuumConfig = load_config(config)?;
            overlay!(cfg, args; alpha, lambda, steps);
            if args.a.is_some() {
                cfg.a = args.a.clone();
            }
            if cfg.a.is_none() {
                if !(cfg.alpha > 0.0 && cfg.alpha < cfg.lambda && cfg.lambda <= 1.0) {
                    return Err(super::usage(format!(
                        "need 0 < alpha < lambda <= 1, got alpha={}, lambda={}",
                        cfg.alpha, cfg.lambda
                    )));
                }
                let (lo, hi) = continuum_interval(cfg.alpha, cfg.lambda);
                cfg.a = Some((0..5).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect());
            }
            let report = verify_continuum(cfg.alpha, cfg.lambda, cfg.a.as_deref().unwrap_or_default(), cfg.steps)?;
            Ok(claims_output("counterexample continuum", to_value(&cfg), &report))
        }
        CounterexampleCommand::NoInvariant(args) => {
            let mut cfg: NoInvariantConfig = load_config(config)?;
            overlay!(cfg, args; alpha, lambda, n_max);
            let report = verify_no_invariant_recursion(cfg.alpha, cfg.lambda, cfg.n_max)?;
            Ok(claims_output("counterexample no-invariant", to_value(&cfg), &report))
        }
        CounterexampleCommand::NoConvergence(args) => {
            let mut cfg: NoConvergenceConfig = load_config(config)?;
            overlay!(cfg, args; alpha, lambda, truncation, steps, start);
            let mu0 = match cfg.start {
                Start::Dirac => DiscreteMeasure::dirac(cfg.truncation.max(1), 0)?,
                Start::Geometric => geometric_profile(cfg.alpha, cfg.lambda, cfg.truncation)?,
            };
            let (_, demo) = demonstrate_no_convergence(cfg.alpha, cfg.lambda, cfg.truncation, &mu0, cfg.steps)?;
            let mut t = CsvTable::new(
                "no_convergence",
                &["n", "step_distance", "threshold_state", "first_state_mass", "last_state_mass"],
            );
            for k in 0..demo.first_state_mass.len() {
                t.push(vec![
                    k.to_string(),
                    fmt_f64(demo.step_distances.get(k).copied().unwrap_or(f64::NAN)),
                    demo.threshold_states[k].map(|j| j.to_string()).unwrap_or_default(),
                    fmt_f64(demo.first_state_mass[k]),
                    fmt_f64(demo.last_state_mass[k]),
                ]);
            }
            Ok(Output {
                command: "counterexample no-convergence".to_string(),
                config: to_value(&cfg),
                findings: Vec::new(),
                result: json!({
                    "construction": demo.construction,
                    "parameters": demo.parameters,
                    "final_residual": demo.final_residual,
                    "final_threshold_state": demo.threshold_states.last().copied().flatten(),
                    "note": demo.note,
                }),
                tables: vec![t],
            })
        }
    }
}
