use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{simulate, Drift, InitialLaw, Interaction, SMVESpec, SimulationConfig, SimulationRun, WeightFunction};
use crate::error::{invalid, Error, Result};
use crate::measures::{tv_between_histograms, Binning, EmpiricalMeasure, HistogramDensity};

/// Slack on the inequality `⟨b₁(x), x⟩ ≤ −r|x|`.
pub const VH_TOL: f64 = 1e-9;
/// Smallest number of trajectories per start point in [`estimate_local_alpha`].
pub const MIN_LOCAL_ALPHA_SIMS: usize = 10_000;

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Histogram TV between two ensembles on a shared binning.
pub fn ensemble_tv(a: &EmpiricalMeasure, b: &EmpiricalMeasure, binning: &Binning) -> Result<f64> {
    tv_between_histograms(&HistogramDensity::of(a, binning)?, &HistogramDensity::of(b, binning)?)
}

// ---------------------------------------------------------------------------
// Veretennikov–Khasminskii condition

/// Points on `shells` spheres with radii evenly spaced in `[M, 10M]`:
/// `±e₁` in one dimension, otherwise the coordinate axes plus
/// `per_shell` random directions.
pub fn shell_points(dim: usize, m: f64, shells: usize, per_shell: usize, seed: u64) -> Result<EmpiricalMeasure> {
    if dim == 0 || shells < 2 {
        return Err(invalid("shells", "need a positive dimension and at least two shells"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for k in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[k] = s;
            dirs.push(e);
        }
    }
    if dim > 1 {
        for _ in 0..per_shell {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&v);
            if n > 0.0 {
                dirs.push(v.iter().map(|x| x / n).collect());
            }
        }
    }
    let mut pts = Vec::with_capacity(shells * dirs.len() * dim);
    for s in 0..shells {
        let radius = m + 9.0 * m * s as f64 / (shells - 1) as f64;
        for d in &dirs {
            pts.extend(d.iter().map(|x| x * radius));
        }
    }
    EmpiricalMeasure::new(dim, pts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VhViolation {
    pub point: Vec<f64>,
    pub inner_product: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VhReport {
    pub r: f64,
    pub m: f64,
    pub points_checked: usize,
    pub points_inside_ball: usize,
    /// Smallest `−r|x| − ⟨b₁(x), x⟩` over the checked points.
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    /// First point where the inequality fails by more than the tolerance.
    pub violation: Option<VhViolation>,
}

impl VhReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks `⟨b₁(x), x⟩ ≤ −r|x|` at every sample point with `|x| ≥ M`.
pub fn verify_vh(b1: &dyn Drift, r: f64, m: f64, points: &EmpiricalMeasure) -> Result<VhReport> {
    let d = points.dim();
    let mut out = vec![0.0; d];
    let mut report = VhReport {
        r,
        m,
        points_checked: 0,
        points_inside_ball: 0,
        worst_margin: f64::INFINITY,
        worst_point: Vec::new(),
        violation: None,
    };
    for x in points.iter() {
        let nx = norm(x);
        if nx < m {
            report.points_inside_ball += 1;
            continue;
        }
        b1.eval(x, &mut out);
        let ip: f64 = out.iter().zip(x).map(|(a, b)| a * b).sum();
        let bound = -r * nx;
        let margin = bound - ip;
        report.points_checked += 1;
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_point = x.to_vec();
        }
        if margin < -VH_TOL && report.violation.is_none() {
            report.violation = Some(VhViolation {
                point: x.to_vec(),
                inner_product: ip,
                bound,
            });
        }
    }
    if report.points_checked == 0 {
        return Err(Error::InsufficientData(format!("no sample point has |x| >= M = {m}")));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Closed-form quantities

/// `ε₀ = min(α(R,1)/(2D), r/(2D))`.
pub fn epsilon_zero(alpha_r1: f64, r: f64, d: f64) -> Result<f64> {
    if !(alpha_r1 > 0.0 && alpha_r1 <= 1.0) {
        return Err(invalid("alpha", format!("{alpha_r1} outside (0, 1]")));
    }
    if !(r > 0.0 && d > 0.0) {
        return Err(invalid("r", "r and D must be positive"));
    }
    Ok((alpha_r1 / (2.0 * d)).min(r / (2.0 * d)))
}

/// `√2 · tv0 · e^{4ε²L²t}`.
pub fn girsanov_bound(tv0: f64, epsilon: f64, lipschitz: f64, t: f64) -> f64 {
    2f64.sqrt() * tv0 * (4.0 * epsilon * epsilon * lipschitz * lipschitz * t).exp()
}

/// `C ε (1 + β)(1 + ζ(V)) · d_{1+βV}(μ₀, ν₀)`: the change in one period
/// caused by swapping the law in the drift, for a user-supplied `C`.
pub fn perturbation_bound(c: f64, epsilon: f64, beta: f64, zeta_v: f64, weighted_distance: f64) -> f64 {
    c * epsilon * (1.0 + beta) * (1.0 + zeta_v) * weighted_distance
}

/// `θ(ε, ν) = λ + C ε (1 + β)(1 + K + ν(V))`, the per-period contraction
/// factor of the nonlinear flow.
pub fn contraction_factor(lambda: f64, c: f64, epsilon: f64, beta: f64, k: f64, nu_v: f64) -> f64 {
    lambda + c * epsilon * (1.0 + beta) * (1.0 + k + nu_v)
}

/// Drift factor `e^{−κ·lag·r/4}` predicted for `V` over one lag.
pub fn predicted_gamma(kappa: f64, lag: f64, r: f64) -> f64 {
    (-kappa * lag * r / 4.0).exp()
}

/// `I(μ₀) = ∫ e^x μ₀(dx)` in one dimension; `∫ e^{|x|} μ₀(dx)` for `d > 1`.
/// Exact for atomic laws and one-dimensional Gaussians, Monte Carlo
/// (10⁶ draws, fixed seed) otherwise.
pub fn integral_i(law: &InitialLaw, dim: usize) -> Result<f64> {
    law.validate(dim)?;
    let f = |x: &[f64]| if dim == 1 { x[0].exp() } else { norm(x).exp() };
    let value = match law {
        InitialLaw::Atomic { atoms, weights } => atoms
            .chunks_exact(dim)
            .zip(weights)
            .map(|(x, w)| w * f(x))
            .sum(),
        InitialLaw::Gaussian { mean, std } if dim == 1 => (mean[0] + 0.5 * std * std).exp(),
        InitialLaw::Gaussian { .. } => integral_i_empirical(&law.sample(dim, 1_000_000, 0)?),
    };
    Ok(if value.is_finite() { value } else { f64::INFINITY })
}

/// Sample average of `e^x` (or `e^{|x|}` for `d > 1`); non-finite averages
/// are reported as infinite.
pub fn integral_i_empirical(ensemble: &EmpiricalMeasure) -> f64 {
    let d = ensemble.dim();
    let s: f64 = ensemble
        .iter()
        .map(|x| if d == 1 { x[0].exp() } else { norm(x).exp() })
        .sum();
    let v = s / ensemble.len() as f64;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

// ---------------------------------------------------------------------------
// Lyapunov drift

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovFit {
    pub lag: f64,
    pub times: Vec<f64>,
    /// Ensemble averages of `V` at the lag multiples.
    pub means: Vec<f64>,
    pub gamma_hat: f64,
    pub k_hat: f64,
    /// `m_{k+1} − (γ̂ m_k + K̂)`.
    pub residuals: Vec<f64>,
    pub predicted_gamma: f64,
    /// `max_k m_k ≤ m_0 + K̂⁺/(1 − γ̂) + 3·(largest standard error)`.
    pub bounded: bool,
}

/// Regresses `m_{k+1}` on `m_k`, where `m_k` is the ensemble mean of `V` at
/// time `k·lag`.
pub fn lyapunov_diagnostic(run: &SimulationRun, v: &WeightFunction, lag: f64, r: f64) -> Result<LyapunovFit> {
    if !(lag > 0.0) {
        return Err(invalid("lag", "must be positive"));
    }
    let mut times = Vec::new();
    let mut means = Vec::new();
    let mut worst_se = 0.0f64;
    for k in 0.. {
        let t = k as f64 * lag;
        let Some(s) = run.at(t) else { break };
        let vals: Vec<f64> = s.positions.iter().map(|x| v.eval(x)).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        worst_se = worst_se.max((var / n).sqrt());
        times.push(s.time);
        means.push(mean);
    }
    if means.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} snapshots at multiples of lag = {lag}; need at least 3",
            means.len()
        )));
    }
    let x = &means[..means.len() - 1];
    let y = &means[1..];
    let nf = x.len() as f64;
    let xm = x.iter().sum::<f64>() / nf;
    let ym = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - xm) * (a - xm)).sum();
    if sxx <= 1e-24 * (1.0 + xm * xm) * nf {
        return Err(Error::Degenerate(format!(
            "the mean of V does not vary across lags (spread {sxx:e}); the regression slope is undefined"
        )));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let gamma_hat = sxy / sxx;
    let k_hat = ym - gamma_hat * xm;
    let residuals = x.iter().zip(y).map(|(a, b)| b - (gamma_hat * a + k_hat)).collect();
    let bounded = gamma_hat < 1.0 && {
        let cap = means[0] + k_hat.max(0.0) / (1.0 - gamma_hat) + 3.0 * worst_se;
        means.iter().all(|m| *m <= cap)
    };
    Ok(LyapunovFit {
        lag,
        times,
        means,
        gamma_hat,
        k_hat,
        residuals,
        predicted_gamma: predicted_gamma(v.kappa, lag, r),
        bounded,
    })
}

// ---------------------------------------------------------------------------
// Local overlap of the measure-free diffusion

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalAlphaReport {
    pub alpha_hat: f64,
    pub t: f64,
    pub radius: f64,
    pub n_sims: usize,
    pub starts: Vec<Vec<f64>>,
    /// `(i, j, tv)` for every pair of start points.
    pub pair_tvs: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalAlphaOptions {
    pub radius: f64,
    pub t: f64,
    pub n_sims: usize,
    pub h: f64,
    pub seed: u64,
}

/// `1 − ½ max_{x,y} TV(Law Y_t^x, Law Y_t^y)` for `dY = b₁(Y) dt + dW`
/// over the start grid. All starts share the noise streams.
pub fn estimate_local_alpha(
    b1: Arc<dyn Drift>,
    x_grid: &[Vec<f64>],
    binning: &Binning,
    opts: &LocalAlphaOptions,
) -> Result<LocalAlphaReport> {
    if x_grid.is_empty() {
        return Err(invalid("x_grid", "must not be empty"));
    }
    let dim = x_grid[0].len();
    if let Some(x) = x_grid.iter().find(|x| x.len() != dim || norm(x) > opts.radius + 1e-12) {
        return Err(invalid("x_grid", format!("{x:?} is not in the ball of radius {}", opts.radius)));
    }
    if opts.n_sims < MIN_LOCAL_ALPHA_SIMS {
        return Err(invalid("n_sims", format!("{} < {MIN_LOCAL_ALPHA_SIMS}", opts.n_sims)));
    }
    let spec = SMVESpec {
        dim,
        b1,
        b2: Arc::new(Interaction::None),
        epsilon: 0.0,
        r: 1.0,
        m: 1.0,
        d_bound: 0.0,
        lipschitz: 0.0,
    };
    let cfg = SimulationConfig {
        n_particles: opts.n_sims,
        h: opts.h,
        t_end: opts.t,
        snapshot_every: opts.t,
        seed: opts.seed,
    };
    let hists = x_grid
        .iter()
        .map(|x| {
            let start = EmpiricalMeasure::new(dim, x.repeat(opts.n_sims))?;
            let run = simulate(&spec, &start, &cfg)?;
            HistogramDensity::of(&run.last().positions, binning)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pair_tvs = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            let tv = tv_between_histograms(&hists[i], &hists[j])?;
            worst = worst.max(tv);
            pair_tvs.push((i, j, tv));
        }
    }
    Ok(LocalAlphaReport {
        alpha_hat: 1.0 - 0.5 * worst,
        t: opts.t,
        radius: opts.radius,
        n_sims: opts.n_sims,
        starts: x_grid.to_vec(),
        pair_tvs,
    })
}

// ---------------------------------------------------------------------------
// TV growth between two initial laws

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub runs: usize,
    pub quantile: f64,
    pub samples: Vec<f64>,
    pub allowance: f64,
}

/// Nearest-rank quantile.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

/// Runs `runs` pairs of independent ensembles from the same law and takes
/// the `quantile` of their histogram TV over all runs and times. Pair `j`
/// uses seeds `seed + 2j + 1` and `seed + 2j + 2`.
pub fn calibrate_allowance(
    spec: &SMVESpec,
    law: &InitialLaw,
    times: &[f64],
    cfg: &SimulationConfig,
    binning: &Binning,
    runs: usize,
    q: f64,
) -> Result<Calibration> {
    if runs == 0 {
        return Err(invalid("calibration_runs", "must be positive"));
    }
    let mut samples = Vec::with_capacity(runs * times.len());
    for j in 0..runs as u64 {
        let a = super::simulate_from(spec, law, &SimulationConfig { seed: cfg.seed + 2 * j + 1, ..*cfg })?;
        let b = super::simulate_from(spec, law, &SimulationConfig { seed: cfg.seed + 2 * j + 2, ..*cfg })?;
        for &t in times {
            samples.push(ensemble_tv(&snapshot_at(&a, t)?.positions, &snapshot_at(&b, t)?.positions, binning)?);
        }
    }
    Ok(Calibration {
        runs,
        quantile: q,
        allowance: quantile(&samples, q),
        samples,
    })
}

fn snapshot_at(run: &SimulationRun, t: f64) -> Result<&super::ParticleEnsemble> {
    run.at(t)
        .ok_or_else(|| Error::InsufficientData(format!("no snapshot at t = {t}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovRow {
    pub t: f64,
    pub estimated_tv: f64,
    pub bound: f64,
    pub allowance: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovReport {
    pub epsilon: f64,
    pub lipschitz: f64,
    pub tv0: f64,
    pub calibration: Option<Calibration>,
    pub rows: Vec<GirsanovRow>,
}

impl GirsanovReport {
    pub fn falsified(&self) -> bool {
        self.rows.iter().any(|r| r.violated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovOptions {
    pub n_particles: usize,
    pub h: f64,
    pub seed: u64,
    pub binning: Binning,
    /// Fixed allowance; when `None` it is calibrated from the second law.
    pub allowance: Option<f64>,
    pub calibration_runs: usize,
    pub calibration_quantile: f64,
}

/// Paired runs from `μ0` and `ν0` with common noise; at each time checks
/// `TV ≤ √2·tv0·e^{4ε²L²t} + allowance`.
pub fn girsanov_bound_check(
    spec: &SMVESpec,
    mu0: &InitialLaw,
    nu0: &InitialLaw,
    tv0: f64,
    times: &[f64],
    opts: &GirsanovOptions,
) -> Result<GirsanovReport> {
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(invalid("times", "need a non-empty list of non-negative times"));
    }
    if !(0.0..=2.0).contains(&tv0) {
        return Err(invalid("tv0", format!("{tv0} outside [0, 2]")));
    }
    let t_end = times.iter().copied().fold(0.0, f64::max).max(opts.h);
    let cfg = SimulationConfig {
        n_particles: opts.n_particles,
        h: opts.h,
        t_end,
        snapshot_every: opts.h,
        seed: opts.seed,
    };
    let calibration = match opts.allowance {
        Some(_) => None,
        None => Some(calibrate_allowance(
            spec,
            nu0,
            times,
            &SimulationConfig {
                seed: opts.seed.wrapping_add(1_000_000),
                ..cfg
            },
            &opts.binning,
            opts.calibration_runs,
            opts.calibration_quantile,
        )?),
    };
    let allowance = opts
        .allowance
        .unwrap_or_else(|| calibration.as_ref().map(|c| c.allowance).unwrap_or(0.0));
    let a = super::simulate_from(spec, mu0, &cfg)?;
    let b = super::simulate_from(spec, nu0, &cfg)?;
    let rows = times
        .iter()
        .map(|&t| {
            let estimated_tv = ensemble_tv(&snapshot_at(&a, t)?.positions, &snapshot_at(&b, t)?.positions, &opts.binning)?;
            let bound = girsanov_bound(tv0, spec.epsilon, spec.lipschitz, t);
            Ok(GirsanovRow {
                t,
                estimated_tv,
                bound,
                allowance,
                violated: estimated_tv > bound + allowance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GirsanovReport {
        epsilon: spec.epsilon,
        lipschitz: spec.lipschitz,
        tv0,
        calibration,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Exponential decay fit

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub tv: Vec<f64>,
    pub noise_floor: f64,
    /// Whether each point entered the fit.
    pub used: Vec<bool>,
    pub c: f64,
    pub theta: f64,
    pub theta_std_error: f64,
    /// Two-sided 95% Student-t band for `θ`.
    pub theta_lower: f64,
    pub theta_upper: f64,
    /// Residual sum of squares on the log scale.
    pub residual: f64,
}

/// Fits `log TV(t) = log C − θ t` by least squares on the snapshots where
/// the TV between the two runs exceeds `noise_floor`.
pub fn fit_decay(a: &SimulationRun, b: &SimulationRun, binning: &Binning, noise_floor: f64) -> Result<DecayFit> {
    if a.snapshots.len() != b.snapshots.len()
        || a.snapshots.iter().zip(&b.snapshots).any(|(x, y)| (x.time - y.time).abs() > 1e-9)
    {
        return Err(invalid("trajectories", "runs must share snapshot times"));
    }
    let times = a.times();
    let tv = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| ensemble_tv(&x.positions, &y.positions, binning))
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<bool> = tv.iter().map(|v| *v > noise_floor && *v > 0.0).collect();
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&tv)
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|((t, v), _)| (*t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} TV estimates above the noise floor {noise_floor}; need at least 3",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - tm) * (p.0 - tm)).sum();
    if stt <= 0.0 {
        return Err(Error::Degenerate("all usable points share one time".into()));
    }
    let sty: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let residual: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = n - 2.0;
    let se = if dof > 0.0 { (residual / dof / stt).sqrt() } else { f64::INFINITY };
    let tq = if dof > 0.0 {
        StudentsT::new(0.0, 1.0, dof)
            .map_err(|e| Error::Degenerate(e.to_string()))?
            .inverse_cdf(0.975)
    } else {
        f64::INFINITY
    };
    let theta = -slope;
    Ok(DecayFit {
        times,
        tv,
        noise_floor,
        used,
        c: intercept.exp(),
        theta,
        theta_std_error: se,
        theta_lower: theta - tq * se,
        theta_upper: theta + tq * se,
        residual,
    })
}
