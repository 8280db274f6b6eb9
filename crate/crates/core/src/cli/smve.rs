use std::path::Path;
use std::sync::Arc;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{load_config, overlay, to_value, usage, CliResult, Output};
use crate::mckean_vlasov::{
    epsilon_zero, estimate_local_alpha, fit_decay, girsanov_bound_check, integral_i, lyapunov_diagnostic,
    make_weight_function, shell_points, simulate_from, verify_vh, Drift, GirsanovOptions, InitialLaw,
    LocalAlphaOptions, SMVESpec, SimulationConfig, SimulationRun, VhReport,
};
use crate::measures::{Binning, EmpiricalMeasure};
use crate::report::{fmt_f64, CsvTable};

#[derive(Debug, Clone, Subcommand)]
pub enum SmveMode {
    /// Simulate from one initial law and record moments.
    Simulate(SmveArgs),
    /// Two ensembles with common noise; fit the exponential decay of their TV.
    Decay(SmveArgs),
    /// Compare TV growth between two initial laws with the Girsanov bound.
    GirsanovCheck(SmveArgs),
    /// Overlap of the unperturbed diffusion started inside a ball.
    LocalAlpha(SmveArgs),
    /// Fit the drift inequality of the weight function along a run.
    Lyapunov(SmveArgs),
}

impl SmveMode {
    fn parts(&self) -> (&'static str, &SmveArgs) {
        match self {
            SmveMode::Simulate(a) => ("simulate", a),
            SmveMode::Decay(a) => ("decay", a),
            SmveMode::GirsanovCheck(a) => ("girsanov-check", a),
            SmveMode::LocalAlpha(a) => ("local-alpha", a),
            SmveMode::Lyapunov(a) => ("lyapunov", a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `b₁ = −r x / max(|x|, M)`.
    Vh,
    /// `b₁ = −x`.
    Ou,
}

#[derive(Debug, Clone, Args)]
pub struct SmveArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    /// Bound `D` of the interaction drift.
    #[arg(long = "D")]
    d: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of particles.
    #[arg(long = "n")]
    n_particles: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    /// Final time.
    #[arg(long = "t")]
    t_end: Option<f64>,
    #[arg(long)]
    snapshot_every: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    noise_floor: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long)]
    tv0: Option<f64>,
    #[arg(long)]
    allowance: Option<f64>,
    #[arg(long)]
    calibration_runs: Option<usize>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    alpha_time: Option<f64>,
    #[arg(long)]
    n_sims: Option<usize>,
    #[arg(long)]
    lag: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmveConfig {
    pub preset: Preset,
    pub dim: usize,
    pub r: f64,
    pub m: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub epsilon: f64,
    pub n_particles: usize,
    pub h: f64,
    pub t_end: Option<f64>,
    pub snapshot_every: f64,
    pub seed: u64,
    pub binning: Option<Binning>,
    pub initial: Option<InitialLaw>,
    /// Second initial law for `decay` and `girsanov-check`.
    pub second: Option<InitialLaw>,
    pub noise_floor: f64,
    pub times: Vec<f64>,
    pub tv0: Option<f64>,
    pub allowance: Option<f64>,
    pub calibration_runs: usize,
    pub calibration_quantile: f64,
    pub radius: f64,
    pub alpha_time: f64,
    pub n_sims: usize,
    pub starts: Option<Vec<Vec<f64>>>,
    pub oracle_tolerance: f64,
    pub lag: f64,
    pub vh_shells: usize,
    pub vh_directions: usize,
}

impl Default for SmveConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Vh,
            dim: 1,
            r: 1.0,
            m: 1.0,
            d: 1.0,
            epsilon: 0.05,
            n_particles: 10_000,
            h: 0.01,
            t_end: None,
            snapshot_every: 0.5,
            seed: 0,
            binning: None,
            initial: None,
            second: None,
            noise_floor: 0.02,
            times: vec![0.5, 1.0, 2.0],
            tv0: None,
            allowance: None,
            calibration_runs: 20,
            calibration_quantile: 0.99,
            radius: 1.0,
            alpha_time: 1.0,
            n_sims: 10_000,
            starts: None,
            oracle_tolerance: 0.05,
            lag: 1.0,
            vh_shells: 20,
            vh_directions: 64,
        }
    }
}

fn default_binning(dim: usize) -> Binning {
    let bins = match dim {
        1 => 200,
        2 => 40,
        _ => 16,
    };
    Binning {
        lower: vec![-10.0; dim],
        upper: vec![10.0; dim],
        bins: vec![bins; dim],
    }
}

fn set_default<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

fn point(dim: usize, first: f64) -> Vec<f64> {
    let mut p = vec![0.0; dim];
    p[0] = first;
    p
}

/// Exact `d_TV` between two atomic laws.
fn atomic_tv(a: &InitialLaw, b: &InitialLaw, dim: usize) -> Option<f64> {
    let (InitialLaw::Atomic { atoms: xa, weights: wa }, InitialLaw::Atomic { atoms: xb, weights: wb }) = (a, b) else {
        return None;
    };
    let mut mass: Vec<(&[f64], f64)> = Vec::new();
    for (x, w) in xa.chunks_exact(dim).zip(wa) {
        match mass.iter_mut().find(|(y, _)| *y == x) {
            Some(e) => e.1 += w,
            None => mass.push((x, *w)),
        }
    }
    for (x, w) in xb.chunks_exact(dim).zip(wb) {
        match mass.iter_mut().find(|(y, _)| *y == x) {
            Some(e) => e.1 -= w,
            None => mass.push((x, -w)),
        }
    }
    Some(mass.iter().map(|(_, w)| w.abs()).sum())
}

fn materialize(cfg: &mut SmveConfig, mode: &str) -> CliResult<()> {
    if cfg.preset == Preset::Ou {
        cfg.r = 1.0;
        cfg.m = 1.0;
    }
    let dim = cfg.dim;
    if !(1..=3).contains(&dim) {
        return Err(usage(format!("dim = {dim} outside 1..=3")));
    }
    set_default(&mut cfg.binning, default_binning(dim));
    match mode {
        "decay" => {
            set_default(&mut cfg.t_end, 20.0);
            set_default(&mut cfg.initial, InitialLaw::dirac(vec![0.0; dim]));
            set_default(&mut cfg.second, InitialLaw::Gaussian { mean: point(dim, 2.0), std: 1.0 });
        }
        "girsanov-check" => {
            set_default(&mut cfg.initial, InitialLaw::dirac(vec![0.0; dim]));
            let mut atoms = vec![0.0; dim];
            atoms.extend(point(dim, 1.0));
            set_default(&mut cfg.second, InitialLaw::Atomic { atoms, weights: vec![0.9, 0.1] });
            let t_max = cfg.times.iter().copied().fold(0.0, f64::max);
            cfg.t_end = Some(t_max);
            if cfg.tv0.is_none() {
                cfg.tv0 = atomic_tv(cfg.initial.as_ref().unwrap(), cfg.second.as_ref().unwrap(), dim);
            }
            if cfg.tv0.is_none() {
                return Err(usage("`tv0` is required unless both initial laws are atomic"));
            }
        }
        "local-alpha" => {
            cfg.t_end = Some(cfg.alpha_time);
            if cfg.starts.is_none() {
                let mut s = vec![vec![0.0; dim]];
                for k in 0..dim {
                    for sign in [-1.0, 1.0] {
                        let mut p = vec![0.0; dim];
                        p[k] = sign * cfg.radius;
                        s.push(p);
                    }
                }
                cfg.starts = Some(s);
            }
        }
        "lyapunov" => {
            set_default(&mut cfg.t_end, 20.0);
            set_default(&mut cfg.initial, InitialLaw::Gaussian { mean: point(dim, 4.0), std: 1.0 });
        }
        _ => {
            set_default(&mut cfg.t_end, 10.0);
            set_default(&mut cfg.initial, InitialLaw::dirac(vec![0.0; dim]));
        }
    }
    Ok(())
}

fn build_spec(cfg: &SmveConfig) -> CliResult<SMVESpec> {
    Ok(match cfg.preset {
        Preset::Vh => SMVESpec::vh_preset(cfg.dim, cfg.r, cfg.m, cfg.d, cfg.epsilon)?,
        Preset::Ou => SMVESpec::ou_preset(cfg.dim, cfg.d, cfg.epsilon)?,
    })
}

fn sim_config(cfg: &SmveConfig) -> SimulationConfig {
    SimulationConfig {
        n_particles: cfg.n_particles,
        h: cfg.h,
        t_end: cfg.t_end.unwrap_or(cfg.h),
        snapshot_every: cfg.snapshot_every,
        seed: cfg.seed,
    }
}

fn vh_check(spec: &SMVESpec, cfg: &SmveConfig) -> CliResult<VhReport> {
    let pts = shell_points(cfg.dim, spec.m, cfg.vh_shells, cfg.vh_directions, cfg.seed)?;
    Ok(verify_vh(spec.b1.as_ref(), spec.r, spec.m, &pts)?)
}

/// Per-coordinate mean, variance and their standard errors.
fn moments(e: &EmpiricalMeasure) -> Value {
    let n = e.len() as f64;
    let mean = e.mean();
    let d = e.dim();
    let mut m2 = vec![0.0; d];
    let mut m4 = vec![0.0; d];
    for x in e.iter() {
        for k in 0..d {
            let c = x[k] - mean[k];
            m2[k] += c * c;
            m4[k] += c.powi(4);
        }
    }
    let var: Vec<f64> = m2.iter().map(|v| v / n).collect();
    let se_mean: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    let se_var: Vec<f64> = (0..d).map(|k| ((m4[k] / n - var[k] * var[k]).max(0.0) / n).sqrt()).collect();
    json!({ "mean": mean, "variance": var, "mean_std_error": se_mean, "variance_std_error": se_var })
}

fn moments_table(run: &SimulationRun, dim: usize) -> CsvTable {
    let mut cols = vec!["time".to_string()];
    cols.extend((1..=dim).map(|k| format!("mean_{k}")));
    cols.extend((1..=dim).map(|k| format!("var_{k}")));
    let mut t = CsvTable::with_columns("moments", cols);
    for s in &run.snapshots {
        let m = moments(&s.positions);
        let mut row = vec![s.time];
        for key in ["mean", "variance"] {
            row.extend(m[key].as_array().unwrap().iter().map(|v| v.as_f64().unwrap_or(f64::NAN)));
        }
        t.push_floats(&row);
    }
    t
}

/// `1 − ½ max d_TV` between the exact Ornstein–Uhlenbeck transition laws.
fn ou_local_alpha(starts: &[Vec<f64>], t: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let s = ((1.0 - (-2.0 * t).exp()) / 2.0).sqrt();
    let mut worst = 0.0f64;
    for (i, x) in starts.iter().enumerate() {
        for y in &starts[i + 1..] {
            let gap = (x[0] - y[0]).abs() * (-t).exp();
            worst = worst.max(2.0 * (2.0 * n.cdf(gap / (2.0 * s)) - 1.0));
        }
    }
    1.0 - 0.5 * worst
}

pub(crate) fn run(mode: &SmveMode, config: Option<&Path>) -> CliResult<Output> {
    let (name, args) = mode.parts();
    let mut cfg: SmveConfig = load_config(config)?;
    overlay!(cfg, args; preset, dim, r, m, d, epsilon, n_particles, h, snapshot_every, seed, noise_floor, times,
        calibration_runs, radius, alpha_time, n_sims, lag);
    if args.t_end.is_some() {
        cfg.t_end = args.t_end;
    }
    if args.tv0.is_some() {
        cfg.tv0 = args.tv0;
    }
    if args.allowance.is_some() {
        cfg.allowance = args.allowance;
    }
    materialize(&mut cfg, name)?;
    let spec = build_spec(&cfg)?;
    let sim = sim_config(&cfg);
    sim.validate()?;
    let binning = cfg.binning.clone().unwrap_or_else(|| default_binning(cfg.dim));
    let mut findings = Vec::new();
    let mut tables = Vec::new();
    let result = match name {
        "simulate" => {
            let vh = vh_check(&spec, &cfg)?;
            if let Some(v) = &vh.violation {
                findings.push(format!("drift condition fails at {:?}", v.point));
            }
            let law = cfg.initial.as_ref().unwrap();
            let run = simulate_from(&spec, law, &sim)?;
            tables.push(moments_table(&run, cfg.dim));
            json!({
                "vh": to_value(&vh),
                "integral_i": integral_i(law, cfg.dim)?,
                "final_time": run.last().time,
                "final": moments(&run.last().positions),
            })
        }
        "decay" => {
            let a = simulate_from(&spec, cfg.initial.as_ref().unwrap(), &sim)?;
            let b = simulate_from(&spec, cfg.second.as_ref().unwrap(), &sim)?;
            let fit = fit_decay(&a, &b, &binning, cfg.noise_floor)?;
            let mut t = CsvTable::new("decay", &["time", "tv", "used"]);
            for k in 0..fit.times.len() {
                t.push(vec![fmt_f64(fit.times[k]), fmt_f64(fit.tv[k]), u8::from(fit.used[k]).to_string()]);
            }
            tables.push(t);
            if !(fit.theta > 0.0 && fit.theta_lower > 0.0) {
                findings.push(format!(
                    "no exponential decay: theta = {}, lower bound {}",
                    fmt_f64(fit.theta),
                    fmt_f64(fit.theta_lower)
                ));
            }
            json!({
                "fit": to_value(&fit),
                "final_tv": fit.tv.last(),
                "epsilon": cfg.epsilon,
                "epsilon_limit_r_over_2d": spec.r / (2.0 * spec.d_bound),
            })
        }
        "girsanov-check" => {
            let opts = GirsanovOptions {
                n_particles: cfg.n_particles,
                h: cfg.h,
                seed: cfg.seed,
                binning: binning.clone(),
                allowance: cfg.allowance,
                calibration_runs: cfg.calibration_runs,
                calibration_quantile: cfg.calibration_quantile,
            };
            let rep = girsanov_bound_check(
                &spec,
                cfg.initial.as_ref().unwrap(),
                cfg.second.as_ref().unwrap(),
                cfg.tv0.unwrap(),
                &cfg.times,
                &opts,
            )?;
            let mut t = CsvTable::new("girsanov", &["time", "tv", "bound", "allowance", "violated"]);
            for r in &rep.rows {
                t.push(vec![
                    fmt_f64(r.t),
                    fmt_f64(r.estimated_tv),
                    fmt_f64(r.bound),
                    fmt_f64(r.allowance),
                    r.violated.to_string(),
                ]);
                if r.violated {
                    findings.push(format!("TV {} exceeds the bound at t = {}", fmt_f64(r.estimated_tv), r.t));
                }
            }
            tables.push(t);
            json!({
                "epsilon": rep.epsilon,
                "lipschitz": rep.lipschitz,
                "tv0": rep.tv0,
                "allowance": rep.rows.first().map(|r| r.allowance),
                "calibration": rep.calibration.as_ref().map(|c| json!({
                    "runs": c.runs, "quantile": c.quantile, "allowance": c.allowance,
                })),
                "rows": to_value(&rep.rows),
            })
        }
        "local-alpha" => {
            let starts = cfg.starts.clone().unwrap_or_default();
            let opts = LocalAlphaOptions {
                radius: cfg.radius,
                t: cfg.alpha_time,
                n_sims: cfg.n_sims,
                h: cfg.h,
                seed: cfg.seed,
            };
            let b1: Arc<dyn Drift> = spec.b1.clone();
            let rep = estimate_local_alpha(b1, &starts, &binning, &opts)?;
            let mut t = CsvTable::new("local_alpha", &["i", "j", "tv"]);
            for (i, j, tv) in &rep.pair_tvs {
                t.push(vec![i.to_string(), j.to_string(), fmt_f64(*tv)]);
            }
            tables.push(t);
            let oracle = (cfg.preset == Preset::Ou && cfg.dim == 1).then(|| ou_local_alpha(&starts, cfg.alpha_time));
            if let Some(o) = oracle {
                if (rep.alpha_hat - o).abs() > cfg.oracle_tolerance {
                    findings.push(format!(
                        "estimate {} differs from the exact value {} by more than {}",
                        fmt_f64(rep.alpha_hat),
                        fmt_f64(o),
                        cfg.oracle_tolerance
                    ));
                }
            }
            let eps0 = if rep.alpha_hat > 0.0 {
                Some(epsilon_zero(rep.alpha_hat, spec.r, spec.d_bound.max(f64::MIN_POSITIVE))?)
            } else {
                None
            };
            json!({
                "estimate": to_value(&rep),
                "exact_ou": oracle,
                "epsilon_zero": eps0,
            })
        }
        "lyapunov" => {
            let vh = vh_check(&spec, &cfg)?;
            if let Some(v) = &vh.violation {
                findings.push(format!("drift condition fails at {:?}", v.point));
            }
            let run = simulate_from(&spec, cfg.initial.as_ref().unwrap(), &sim)?;
            let v = make_weight_function(spec.r, spec.m)?;
            let fit = lyapunov_diagnostic(&run, &v, cfg.lag, spec.r)?;
            let mut t = CsvTable::new("lyapunov", &["time", "mean_v"]);
            for (time, m) in fit.times.iter().zip(&fit.means) {
                t.push_floats(&[*time, *m]);
            }
            tables.push(t);
            if !(fit.gamma_hat < 1.0) {
                findings.push(format!("fitted gamma {} is not below 1", fmt_f64(fit.gamma_hat)));
            }
            if !fit.bounded {
                findings.push("mean of V exceeds the fitted bound".to_string());
            }
            json!({
                "vh": to_value(&vh),
                "kappa": v.kappa,
                "fit": to_value(&fit),
                "epsilon_limit_r_over_2d": spec.r / (2.0 * spec.d_bound),
            })
        }
        _ => unreachable!("unknown smve mode"),
    };
    Ok(Output {
        command: format!("smve {name}"),
        config: to_value(&cfg),
        findings,
        result,
        tables,
    })
}
