//! Executable versions of three constructions showing that the condition
//! `λ ≤ α` cannot be relaxed: a two-state chain whose law oscillates forever,
//! a two-state chain with a continuum of invariant laws, and an infinite
//! chain with no invariant law at all.
//!
//! States are numbered from one in claim statements and from zero in code.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ergodicity::{evolve, verify_invariant, Trajectory};
use crate::error::{invalid, Result};
use crate::kernels::{
    continuum_kernel, default_resolution, estimate_alpha, estimate_lambda, no_invariant_kernel,
    oscillating_kernel, threshold_index, MeasureGrid,
};
use crate::measures::{tv_distance, DiscreteMeasure};

/// Tolerance for claims that hold exactly in real arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Claim {
    pub name: String,
    pub statement: String,
    pub passed: bool,
    /// The number the verdict was based on.
    pub witness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub construction: String,
    pub parameters: BTreeMap<String, f64>,
    pub claims: Vec<Claim>,
}

impl CounterexampleReport {
    fn new(construction: &str, parameters: &[(&str, f64)]) -> Self {
        Self {
            construction: construction.to_string(),
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            claims: Vec::new(),
        }
    }

    fn claim(&mut self, name: impl Into<String>, statement: impl Into<String>, passed: bool, witness: f64) {
        self.claims.push(Claim {
            name: name.into(),
            statement: statement.into(),
            passed,
            witness,
        });
    }

    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }

    pub fn failed_claims(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !c.passed)
    }
}

fn max_abs_dev(values: impl Iterator<Item = f64>, target: f64) -> f64 {
    values.map(|v| (v - target).abs()).fold(0.0, f64::max)
}

/// Two-state oscillating chain started from `a δ₁ + (1 − a) δ₂`.
pub fn verify_oscillation(gamma: f64, a: f64, n_steps: usize) -> Result<CounterexampleReport> {
    let kernel = oscillating_kernel(gamma)?;
    let (lo, hi) = (gamma / 2.0, 1.0 - gamma / 2.0);
    if !(lo..=hi).contains(&a) {
        return Err(invalid("a", format!("{a} outside the clamp interval [{lo}, {hi}]")));
    }
    if n_steps < 2 {
        return Err(invalid("n_steps", "need at least two steps to see a period"));
    }
    let mut report = CounterexampleReport::new(
        "oscillation",
        &[("gamma", gamma), ("a", a), ("n_steps", n_steps as f64)],
    );
    let mu0 = DiscreteMeasure::two_point(a)?;
    let pi = DiscreteMeasure::uniform(2)?;
    let traj = evolve(&kernel, &mu0, n_steps)?;

    let swapped = DiscreteMeasure::two_point(1.0 - a)?;
    let d = tv_distance(&traj.measures[1], &swapped)?;
    report.claim(
        "first_step_swaps",
        "one step maps a δ1 + (1−a) δ2 to (1−a) δ1 + a δ2",
        d <= EXACT_TOL,
        d,
    );

    let period = (2..=n_steps)
        .map(|n| tv_distance(&traj.measures[n], &traj.measures[n - 2]))
        .collect::<Result<Vec<_>>>()?;
    let worst = period.iter().copied().fold(0.0, f64::max);
    report.claim("period_two", "μ(n+2) = μ(n) for every n", worst <= EXACT_TOL, worst);

    let target = 2.0 * (a - 0.5).abs();
    let dev = max_abs_dev(traj.distances_to(&pi)?.into_iter(), target);
    report.claim(
        "constant_distance_to_pi",
        "d_TV(μ(n), π) = 2|a − 1/2| for every n, with π = (δ1 + δ2)/2",
        dev <= EXACT_TOL,
        dev,
    );

    let residual = verify_invariant(&kernel, &pi)?;
    report.claim("pi_invariant", "π = (δ1 + δ2)/2 is invariant", residual <= EXACT_TOL, residual);

    let grid = MeasureGrid::new(2, default_resolution(2))?;
    let alpha_hat = estimate_alpha(&kernel, &grid)?;
    report.claim(
        "overlap_equals_gamma",
        "the grid estimate of the overlap coefficient equals γ",
        (alpha_hat - gamma).abs() <= EXACT_TOL,
        alpha_hat,
    );
    Ok(report)
}

/// Interval `[α/(2λ), 1 − α/(2λ)]` of stationary two-point laws.
pub fn continuum_interval(alpha: f64, lambda: f64) -> (f64, f64) {
    let lo = alpha / (2.0 * lambda);
    (lo, 1.0 - lo)
}

/// Two-state chain with a continuum of invariant laws `μ(a)`, `a ∈ I`.
pub fn verify_continuum(alpha: f64, lambda: f64, a_samples: &[f64], steps: usize) -> Result<CounterexampleReport> {
    let kernel = continuum_kernel(alpha, lambda)?;
    let (lo, hi) = continuum_interval(alpha, lambda);
    if a_samples.is_empty() {
        return Err(invalid("a_samples", "must not be empty"));
    }
    if let Some(a) = a_samples.iter().find(|a| !(lo - EXACT_TOL..=hi + EXACT_TOL).contains(*a)) {
        return Err(invalid("a_samples", format!("{a} outside I = [{lo}, {hi}]")));
    }
    if steps == 0 {
        return Err(invalid("steps", "must be positive"));
    }
    let mut params = vec![("alpha", alpha), ("lambda", lambda), ("steps", steps as f64)];
    params.extend([("interval_lower", lo), ("interval_upper", hi)]);
    let mut report = CounterexampleReport::new("continuum", &params);

    let mut trajectories: Vec<(f64, Trajectory)> = Vec::with_capacity(a_samples.len());
    for &a in a_samples {
        let mu = DiscreteMeasure::two_point(a)?;
        let residual = verify_invariant(&kernel, &mu)?;
        report.claim(
            format!("stationary(a={a})"),
            format!("μ(a) = a δ1 + (1−a) δ2 is invariant for a = {a} in I"),
            residual < EXACT_TOL,
            residual,
        );
        trajectories.push((a, evolve(&kernel, &mu, steps)?));
    }
    for (i, (a1, t1)) in trajectories.iter().enumerate() {
        for (a2, t2) in &trajectories[i + 1..] {
            if a1 == a2 {
                continue;
            }
            let target = 2.0 * (a1 - a2).abs();
            let ds = t1
                .measures
                .iter()
                .zip(&t2.measures)
                .map(|(x, y)| tv_distance(x, y))
                .collect::<Result<Vec<_>>>()?;
            let dev = max_abs_dev(ds.into_iter(), target);
            report.claim(
                format!("no_merging(a1={a1},a2={a2})"),
                format!("d_TV between the chains from μ({a1}) and μ({a2}) stays at 2|a1 − a2| = {target}"),
                dev <= EXACT_TOL,
                dev,
            );
        }
    }

    let grid = MeasureGrid::new(2, default_resolution(2))?;
    let alpha_hat = estimate_alpha(&kernel, &grid)?;
    let lambda_hat = estimate_lambda(&kernel, &grid)?;
    report.claim(
        "overlap_at_least_alpha",
        "every entry lies in [α/2, 1 − α/2], so the overlap coefficient is at least α",
        alpha_hat >= alpha - EXACT_TOL,
        alpha_hat,
    );
    report.claim(
        "lipschitz_at_most_lambda",
        "the measure-Lipschitz constant is at most λ",
        lambda_hat <= lambda + EXACT_TOL,
        lambda_hat,
    );
    Ok(report)
}

/// Replays the argument that the infinite chain has no invariant law.
///
/// Suppose `μ` is invariant. Stationarity at state 1 leaves two cases:
/// `μ₁ ≥ α/λ` forces `(1 − λ) μ₁ = 0`, and otherwise `μ₁ = α`. With
/// `n = n(μ)` the first index where `λ μ({1..n}) ≥ α`, stationarity at
/// states `2..n−1` gives `μ_i = (1 − λ) μ_{i−1}` and at state `n` a linear
/// equation for `μ_n` whose solution is zero, while `n(μ) = n` needs
/// `μ_n ≥ α(1 − λ)^{n−1}/λ > 0`.
///
/// At `λ = 1` the first case is vacuous and `δ₁` is invariant; that claim
/// is then reported as failed with the residual of `δ₁` as witness.
pub fn verify_no_invariant_recursion(alpha: f64, lambda: f64, n_max: usize) -> Result<CounterexampleReport> {
    if !(alpha > 0.0 && alpha < lambda && lambda <= 1.0) {
        return Err(invalid(
            "lambda",
            format!("the construction needs 0 < alpha < lambda <= 1, got alpha={alpha}, lambda={lambda}"),
        ));
    }
    if n_max < 2 {
        return Err(invalid("n_max", "must be at least 2"));
    }
    let mut report = CounterexampleReport::new(
        "no-invariant",
        &[("alpha", alpha), ("lambda", lambda), ("n_max", n_max as f64)],
    );
    let shift = 1.0 - lambda;

    if lambda < 1.0 {
        // μ₁ ≥ α/λ: every row puts λ μ₁ on state 1, so μ₁ = λ μ₁
        let solved = 0.0 / shift;
        report.claim(
            "heavy_first_state_impossible",
            "if μ({1}) ≥ α/λ, stationarity at state 1 reads (1−λ) μ({1}) = 0, contradicting μ({1}) ≥ α/λ > 0",
            solved < alpha / lambda,
            solved,
        );
    } else {
        let kernel = no_invariant_kernel(alpha, lambda, 3)?;
        let residual = verify_invariant(&kernel, &DiscreteMeasure::dirac(3, 0)?)?;
        report.claim(
            "heavy_first_state_impossible",
            "if μ({1}) ≥ α/λ, stationarity at state 1 forces μ({1}) = 0; at λ = 1 the equation is vacuous and δ1 is invariant (boundary case)",
            false,
            residual,
        );
    }

    // μ₁ < α/λ: every row puts α on state 1, and the row weights sum to one
    let mu1 = alpha;
    report.claim(
        "first_state_mass",
        "otherwise stationarity at state 1 gives μ({1}) = α",
        true,
        mu1,
    );
    report.claim(
        "threshold_not_one",
        "n(μ) = 1 would need λ μ({1}) = λα ≥ α together with μ({1}) < α/λ, which is impossible",
        lambda * mu1 < alpha || mu1 >= alpha / lambda,
        lambda * mu1 - alpha,
    );

    for n in 2..=n_max {
        // stationarity at states 2..n−1: only the shift term reaches them
        let mut mu = vec![mu1];
        for _ in 2..n {
            let prev = *mu.last().expect("non-empty");
            mu.push(shift * prev);
        }
        let head: f64 = mu.iter().sum();
        let below_threshold = lambda * head < alpha;
        let prev = *mu.last().expect("non-empty");
        // μ_n = (λ(S_{n−1} + μ_n) − α) + (1 − λ) μ_{n−1}
        let rhs = lambda * head - alpha + shift * prev;
        let solved = if shift > 0.0 { rhs / shift } else { 0.0 };
        let required = alpha * shift.powi(n as i32 - 1) / lambda;
        let contradiction = !below_threshold || (solved.abs() <= EXACT_TOL && required > 0.0);
        report.claim(
            format!("threshold_{n}"),
            format!(
                "n(μ) = {n} would need μ({{{n}}}) ≥ α(1−λ)^{}/λ > 0, but stationarity at state {n} forces μ({{{n}}}) = 0",
                n - 1
            ),
            contradiction,
            if below_threshold { solved } else { lambda * head - alpha },
        );
    }
    Ok(report)
}

/// Geometric profile `μ_i = α(1 − λ)^{i−1}` on the first states with the
/// remaining mass on the next one, as suggested by the stationarity
/// recursion. Requires `truncation` large enough to hold the profile.
pub fn geometric_profile(alpha: f64, lambda: f64, truncation: usize) -> Result<DiscreteMeasure> {
    let mut p = vec![0.0; truncation];
    let mut used = 0.0;
    let mut i = 0;
    while i + 1 < truncation {
        let v = alpha * (1.0 - lambda).powi(i as i32);
        if used + v >= 1.0 || lambda * (used + v) >= alpha {
            break;
        }
        p[i] = v;
        used += v;
        i += 1;
    }
    p[i] = 1.0 - used;
    DiscreteMeasure::new(p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoConvergenceDemo {
    pub construction: String,
    pub parameters: BTreeMap<String, f64>,
    pub step_distances: Vec<f64>,
    /// `n(μ_k)` counted from one.
    pub threshold_states: Vec<Option<usize>>,
    pub first_state_mass: Vec<f64>,
    /// Mass on the last (absorbing-shift) state, which only exists after truncation.
    pub last_state_mass: Vec<f64>,
    pub final_residual: f64,
    pub note: String,
}

/// Evolves the truncated chain. Truncation keeps the shifted mass in the
/// last state, which can create near-fixed points the infinite chain does
/// not have; [`verify_no_invariant_recursion`] is the authoritative check.
pub fn demonstrate_no_convergence(
    alpha: f64,
    lambda: f64,
    truncation: usize,
    mu0: &DiscreteMeasure,
    steps: usize,
) -> Result<(Trajectory, NoConvergenceDemo)> {
    let kernel = no_invariant_kernel(alpha, lambda, truncation)?;
    let traj = evolve(&kernel, mu0, steps)?;
    let final_residual = verify_invariant(&kernel, traj.last())?;
    let demo = NoConvergenceDemo {
        construction: "no-invariant (truncated)".to_string(),
        parameters: [
            ("alpha", alpha),
            ("lambda", lambda),
            ("truncation", truncation as f64),
            ("steps", steps as f64),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect(),
        step_distances: traj.step_distances.clone(),
        threshold_states: traj
            .measures
            .iter()
            .map(|m| threshold_index(m.probs(), alpha, lambda).map(|j| j + 1))
            .collect(),
        first_state_mass: traj.measures.iter().map(|m| m.probs()[0]).collect(),
        last_state_mass: traj.measures.iter().map(|m| m.probs()[truncation - 1]).collect(),
        final_residual,
        note: "truncation keeps shifted mass in the last state and may create near-fixed points; \
               the recursion check (no-invariant) is authoritative"
            .to_string(),
    };
    Ok((traj, demo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::NonlinearKernel;

    #[test]
    fn oscillation_examples() {
        let r = verify_oscillation(0.4, 0.25, 100).unwrap();
        assert!(r.passed(), "{:?}", r.failed_claims().collect::<Vec<_>>());
        let r = verify_oscillation(0.4, 0.5, 10).unwrap();
        assert!(r.passed());
        let k = oscillating_kernel(0.8).unwrap();
        let t = evolve(&k, &DiscreteMeasure::two_point(0.4).unwrap(), 2).unwrap();
        assert!(tv_distance(&t.measures[1], &DiscreteMeasure::two_point(0.6).unwrap()).unwrap() < 1e-15);
        assert!(tv_distance(&t.measures[2], &DiscreteMeasure::two_point(0.4).unwrap()).unwrap() < 1e-15);
        assert!(verify_oscillation(0.4, 0.1, 10).is_err());
    }

    #[test]
    fn oscillation_sweep() {
        for gamma in [0.1, 0.4, 0.8] {
            let (lo, hi) = (gamma / 2.0, 1.0 - gamma / 2.0);
            for k in 0..5 {
                let a = lo + (hi - lo) * k as f64 / 4.0;
                let r = verify_oscillation(gamma, a, 100).unwrap();
                assert!(r.passed(), "gamma={gamma} a={a}: {:?}", r.failed_claims().collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn continuum_examples() {
        assert_eq!(continuum_interval(0.2, 0.8), (0.125, 0.875));
        let r = verify_continuum(0.2, 0.8, &[0.125, 0.2, 0.5, 0.7, 0.875], 100).unwrap();
        assert!(r.passed(), "{:?}", r.failed_claims().collect::<Vec<_>>());
        let k = continuum_kernel(0.2, 0.8).unwrap();
        assert!(verify_invariant(&k, &DiscreteMeasure::two_point(0.1).unwrap()).unwrap() > 1e-6);
        assert!(verify_continuum(0.2, 0.8, &[0.1], 10).is_err());
        assert!(verify_continuum(0.5, 0.4, &[0.5], 10).is_err());
    }

    #[test]
    fn recursion_examples() {
        let r = verify_no_invariant_recursion(0.3, 0.6, 50).unwrap();
        assert!(r.passed(), "{:?}", r.failed_claims().collect::<Vec<_>>());
        assert_eq!(r.claims.iter().filter(|c| c.name.starts_with("threshold_")).count(), 50);
        let c2 = r.claims.iter().find(|c| c.name == "threshold_2").unwrap();
        assert!(c2.witness.abs() < 1e-15);
        assert!(verify_no_invariant_recursion(0.6, 0.6, 5).is_err());
        assert!(verify_no_invariant_recursion(0.7, 0.6, 5).is_err());
    }

    #[test]
    fn boundary_lambda_one_is_flagged() {
        let r = verify_no_invariant_recursion(0.3, 1.0, 10).unwrap();
        assert!(!r.passed());
        let failed: Vec<_> = r.failed_claims().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, ["heavy_first_state_impossible"]);
        assert_eq!(r.claims[0].witness, 0.0);
    }

    /// Σ_i μ_i P_μ(i, n) − μ_n evaluated through the actual kernel, for a law
    /// with the recursion's first `n − 1` weights, `μ_n = t`, and the rest of
    /// the mass two states further on.
    fn stationarity_defect(kernel: &NonlinearKernel, alpha: f64, lambda: f64, n: usize, t: f64) -> f64 {
        let size = kernel.space_size();
        let mut p = vec![0.0; size];
        for i in 0..n - 1 {
            p[i] = alpha * (1.0 - lambda).powi(i as i32);
        }
        p[n - 1] = t;
        let used: f64 = p.iter().sum();
        p[n + 1] = 1.0 - used;
        let mu = DiscreteMeasure::new(p).unwrap();
        kernel.step_weights(&mu).unwrap()[n - 1] - t
    }

    #[test]
    fn recursion_root_matches_kernel_evaluation() {
        // The defect is affine in t on the branch where n(μ) = n, so two
        // evaluations locate its root; it must be t = 0.
        for (alpha, lambda) in [(0.3, 0.6), (0.05, 0.5), (0.45, 0.9), (0.2, 0.3)] {
            for n in 2..=6 {
                let kernel = no_invariant_kernel(alpha, lambda, n + 2).unwrap();
                let floor = alpha * (1.0 - lambda).powi(n as i32 - 1) / lambda;
                let (t1, t2) = (floor * 1.5, floor * 3.0);
                let mass: f64 = (0..n - 1).map(|i| alpha * (1.0 - lambda).powi(i as i32)).sum();
                if mass + t2 > 1.0 {
                    continue;
                }
                let (f1, f2) = (
                    stationarity_defect(&kernel, alpha, lambda, n, t1),
                    stationarity_defect(&kernel, alpha, lambda, n, t2),
                );
                let root = t1 - f1 * (t2 - t1) / (f2 - f1);
                assert!(root.abs() < 1e-12, "alpha={alpha} lambda={lambda} n={n}: root {root}");
                let r = verify_no_invariant_recursion(alpha, lambda, n).unwrap();
                let w = r.claims.iter().find(|c| c.name == format!("threshold_{n}")).unwrap().witness;
                assert!((w - root).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recursion_grid_is_universal() {
        for alpha in [0.05, 0.15, 0.25, 0.35, 0.45] {
            for lambda in [0.5, 0.6, 0.7, 0.8, 0.9] {
                let r = verify_no_invariant_recursion(alpha, lambda, 50).unwrap();
                assert!(r.passed(), "{alpha} {lambda}");
            }
        }
    }

    #[test]
    fn truncated_demo_runs() {
        let mu0 = DiscreteMeasure::dirac(200, 0).unwrap();
        let (traj, demo) = demonstrate_no_convergence(0.3, 0.6, 200, &mu0, 500).unwrap();
        assert_eq!(traj.measures.len(), 501);
        for k in 1..traj.measures.len() {
            let prev = traj.measures[k - 1].probs()[0];
            if 0.6 * prev < 0.3 {
                assert!((demo.first_state_mass[k] - 0.3).abs() < 1e-12);
            }
        }
        let (_, small) = demonstrate_no_convergence(0.3, 0.6, 3, &DiscreteMeasure::uniform(3).unwrap(), 20).unwrap();
        assert_eq!(small.step_distances.len(), 20);
        let geo = geometric_profile(0.3, 0.6, 50).unwrap();
        let (_, d) = demonstrate_no_convergence(0.3, 0.6, 50, &geo, 10).unwrap();
        assert!(d.step_distances[0] < 1.0);
    }
}
