use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{load_config, overlay, to_value, usage, CliResult, Output};
use crate::ergodicity::{
    certify_hm_contraction, check_contraction_inequality, check_rate, default_beta_grid, evolve, find_invariant,
    HmOptions, RateOptions, DEFAULT_FIXED_POINT_TOL, DEFAULT_MAX_ITER, HM_VALIDATION_TOL,
};
use crate::kernels::{
    birth_death_with_reset, certify, continuum_kernel, cyclic_mixing_matrix, default_resolution, load_custom_kernel,
    markov_example, markov_kernel, mixture_kernel, no_invariant_kernel, oscillating_kernel, validate, CustomKernelSpec,
    MeasureGrid, NonlinearKernel, Regime, TransitionMatrix, DEFAULT_TIE_TOLERANCE,
};
use crate::measures::{random_measure_pairs, DiscreteMeasure};
use crate::report::{fmt_f64, CsvTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Continuum,
    Oscillating,
    Mixture,
    MarkovExample,
    NoInvariant,
    Custom,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    #[arg(long, value_enum)]
    kernel: Option<KernelName>,
    /// JSON kernel description (with `--kernel custom`).
    #[arg(long)]
    kernel_file: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Number of states of the mixture kernel.
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Grid resolution for the α̂ and λ̂ estimates.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    tie_tolerance: Option<f64>,
    /// Initial law as comma-separated weights.
    #[arg(long, value_delimiter = ',')]
    mu0: Option<Vec<f64>>,
    /// Random measure pairs for the contraction check.
    #[arg(long)]
    contraction_pairs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub kernel: Option<KernelName>,
    pub kernel_file: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub states: Option<usize>,
    pub truncation: Option<usize>,
    pub steps: usize,
    pub resolution: Option<usize>,
    pub tie_tolerance: f64,
    pub mu0: Option<Vec<f64>>,
    pub contraction_pairs: usize,
    pub seed: u64,
    pub fixed_point_tol: f64,
    pub rate_invariant_tol: f64,
    pub rate_slack: f64,
    pub max_iter: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        let rate = RateOptions::default();
        Self {
            kernel: None,
            kernel_file: None,
            alpha: None,
            lambda: None,
            gamma: None,
            states: None,
            truncation: None,
            steps: 50,
            resolution: None,
            tie_tolerance: DEFAULT_TIE_TOLERANCE,
            mu0: None,
            contraction_pairs: 10_000,
            seed: 0,
            fixed_point_tol: DEFAULT_FIXED_POINT_TOL,
            rate_invariant_tol: rate.invariant_tol,
            rate_slack: rate.slack,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

fn set_default<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

/// Fills kernel-specific defaults and builds the kernel.
fn build_kernel(cfg: &mut ChainConfig) -> CliResult<NonlinearKernel> {
    let kernel = cfg.kernel.ok_or_else(|| usage("missing required field `kernel`"))?;
    let k = match kernel {
        KernelName::Continuum => {
            set_default(&mut cfg.alpha, 0.2);
            set_default(&mut cfg.lambda, 0.8);
            continuum_kernel(cfg.alpha.unwrap(), cfg.lambda.unwrap())?
        }
        KernelName::Oscillating => {
            set_default(&mut cfg.gamma, 0.4);
            oscillating_kernel(cfg.gamma.unwrap())?
        }
        KernelName::Mixture => {
            set_default(&mut cfg.states, 2);
            set_default(&mut cfg.lambda, 0.15);
            mixture_kernel(cyclic_mixing_matrix(cfg.states.unwrap())?, cfg.lambda.unwrap())?
        }
        KernelName::MarkovExample => markov_example(),
        KernelName::NoInvariant => {
            set_default(&mut cfg.alpha, 0.3);
            set_default(&mut cfg.lambda, 0.6);
            set_default(&mut cfg.truncation, 60);
            no_invariant_kernel(cfg.alpha.unwrap(), cfg.lambda.unwrap(), cfg.truncation.unwrap())?
        }
        KernelName::Custom => {
            let path = cfg
                .kernel_file
                .as_ref()
                .ok_or_else(|| usage("`kernel_file` is required for a custom kernel"))?;
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let spec: CustomKernelSpec =
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            set_default(&mut cfg.resolution, default_resolution(spec.space_size));
            load_custom_kernel(&spec, cfg.resolution)?
        }
    };
    set_default(&mut cfg.resolution, default_resolution(k.space_size()));
    let n = k.space_size();
    set_default(&mut cfg.mu0, {
        let mut d = vec![0.0; n];
        d[0] = 1.0;
        d
    });
    Ok(k)
}

pub(crate) fn run_chain(args: &ChainArgs, config: Option<&Path>) -> CliResult<Output> {
    let mut cfg: ChainConfig = load_config(config)?;
    overlay!(cfg, args; steps, tie_tolerance, contraction_pairs, seed);
    for (slot, flag) in [
        (&mut cfg.alpha, args.alpha),
        (&mut cfg.lambda, args.lambda),
        (&mut cfg.gamma, args.gamma),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    if args.kernel.is_some() {
        cfg.kernel = args.kernel;
    }
    if args.kernel_file.is_some() {
        cfg.kernel_file = args.kernel_file.clone();
    }
    if args.states.is_some() {
        cfg.states = args.states;
    }
    if args.truncation.is_some() {
        cfg.truncation = args.truncation;
    }
    if args.resolution.is_some() {
        cfg.resolution = args.resolution;
    }
    if args.mu0.is_some() {
        cfg.mu0 = args.mu0.clone();
    }
    let kernel = build_kernel(&mut cfg)?;
    let n = kernel.space_size();
    let mu0 = DiscreteMeasure::new(cfg.mu0.clone().unwrap_or_default())?;
    let grid = MeasureGrid::new(n, cfg.resolution.unwrap_or(default_resolution(n)))?;
    let validation = validate(&kernel, &grid)?;
    let cert = certify(&kernel, &grid, cfg.tie_tolerance)?;
    let traj = evolve(&kernel, &mu0, cfg.steps)?;
    let fixed_point = find_invariant(&kernel, &mu0, cfg.fixed_point_tol, cfg.max_iter)?;

    let mut findings = Vec::new();
    let mut tables = Vec::new();
    let mut columns = vec!["n".to_string(), "step_distance".to_string()];
    columns.extend((1..=n).map(|i| format!("p{i}")));
    let mut t = CsvTable::with_columns("trajectory", columns);
    for (k, m) in traj.measures.iter().enumerate() {
        let mut row = vec![k.to_string(), fmt_f64(traj.step_distances.get(k).copied().unwrap_or(f64::NAN))];
        row.extend(m.probs().iter().map(|p| fmt_f64(*p)));
        t.push(row);
    }
    tables.push(t);

    let (rate, contraction) = if cert.regime == Regime::Uncertified {
        (None, None)
    } else {
        let opts = RateOptions {
            invariant_tol: cfg.rate_invariant_tol,
            max_iter: cfg.max_iter,
            slack: cfg.rate_slack,
        };
        let rate = check_rate(&kernel, &cert, &mu0, cfg.steps, opts)?;
        if rate.invariant.is_none() {
            findings.push("no invariant measure found for a certified kernel".to_string());
        }
        for n in &rate.violations {
            findings.push(format!("rate bound violated at n = {n}"));
        }
        let mut t = CsvTable::new("rate", &["n", "measured", "bound"]);
        for r in &rate.rows {
            t.push(vec![r.n.to_string(), fmt_f64(r.measured), fmt_f64(r.bound)]);
        }
        tables.push(t);
        let pairs = random_measure_pairs(n, cfg.contraction_pairs, cfg.seed);
        let c = check_contraction_inequality(&kernel, cert.alpha_hat, cert.lambda_hat, &pairs)?;
        if !c.passed() {
            findings.push(format!("contraction inequality violated on {} pair(s)", c.violations.len()));
        }
        (Some(rate), Some(c))
    };
    Ok(Output {
        command: "chain".to_string(),
        config: to_value(&cfg),
        findings,
        result: json!({
            "kernel": kernel.label(),
            "validation": to_value(&validation),
            "certificate": to_value(&cert),
            "fixed_point": to_value(&fixed_point),
            "final_measure": traj.last().probs(),
            "rate": rate.as_ref().map(to_value),
            "contraction": contraction.as_ref().map(|c| json!({
                "alpha": c.alpha,
                "lambda": c.lambda,
                "pairs_checked": c.pairs_checked,
                "max_excess": c.max_excess,
                "violations": c.violations.len(),
            })),
        }),
        tables,
    })
}

#[derive(Debug, Clone, Args)]
pub struct HmArgs {
    #[arg(long)]
    gamma: Option<f64>,
    /// Additive drift constant `K` in `QV ≤ γV + K`.
    #[arg(long = "K")]
    k: Option<f64>,
    #[arg(long)]
    alpha_local: Option<f64>,
    /// Random measure pairs used for validation and for the fresh check.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmConfig {
    /// Rows of the Markov kernel; the birth–death chain with reset by default.
    pub matrix: Vec<Vec<f64>>,
    /// Lyapunov function, one value per state.
    pub v: Vec<f64>,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha_local: f64,
    pub beta_grid: Vec<f64>,
    pub pairs: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for HmConfig {
    fn default() -> Self {
        let q = birth_death_with_reset();
        Self {
            matrix: q.rows().map(<[f64]>::to_vec).collect(),
            v: (0..q.size()).map(|i| 2f64.powi(i as i32)).collect(),
            gamma: 0.8,
            k: 2.0,
            alpha_local: 0.2,
            beta_grid: default_beta_grid(),
            pairs: 1000,
            seed: 7,
            tolerance: HM_VALIDATION_TOL,
        }
    }
}

pub(crate) fn run_hm(args: &HmArgs, config: Option<&Path>) -> CliResult<Output> {
    let mut cfg: HmConfig = load_config(config)?;
    overlay!(cfg, args; gamma, k, alpha_local, pairs, seed);
    let q = TransitionMatrix::from_rows(cfg.matrix.clone())?;
    if let (_, Some((row, reason))) = q.row_defect() {
        return Err(usage(format!("matrix row {row}: {reason}")));
    }
    let n = q.size();
    let kernel = markov_kernel("hm-kernel", q.clone());
    let opts = HmOptions {
        gamma: cfg.gamma,
        k: cfg.k,
        alpha_local: cfg.alpha_local,
        beta_grid: cfg.beta_grid.clone(),
    };
    let cert = certify_hm_contraction(&kernel, &cfg.v, &opts, &random_measure_pairs(n, cfg.pairs, cfg.seed))?;
    let fresh = random_measure_pairs(n, cfg.pairs, cfg.seed.wrapping_add(1));
    let violations = cert.violations(&q, &cfg.v, &fresh, cfg.tolerance);
    let findings = if violations.is_empty() {
        Vec::new()
    } else {
        vec![format!("weighted contraction violated on {} fresh pair(s)", violations.len())]
    };
    let mut t = CsvTable::new("beta_scan", &["beta", "lambda_w"]);
    for s in &cert.beta_scan {
        t.push_floats(&[s.beta, s.lambda_w]);
    }
    Ok(Output {
        command: "hm".to_string(),
        config: to_value(&cfg),
        findings,
        result: json!({
            "certificate": to_value(&cert),
            "fresh_pairs": fresh.len(),
            "fresh_violations": violations,
        }),
        tables: vec![t],
    })
}
