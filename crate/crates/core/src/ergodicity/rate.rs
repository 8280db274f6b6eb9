use serde::Serialize;

use super::{evolve, find_invariant, FixedPointOutcome, DEFAULT_MAX_ITER};
use crate::error::{invalid, Error, Result};
use crate::kernels::{ErgodicityCertificate, NonlinearKernel, Regime};
use crate::measures::DiscreteMeasure;

/// Geometric bound `2(1 − (α − λ))ⁿ` in the fast regime, `2/(λ n)` in the
/// slow one.
pub fn rate_bound(cert: &ErgodicityCertificate, n: usize) -> Result<f64> {
    match cert.regime {
        Regime::Fast => Ok(2.0 * (1.0 - (cert.alpha_hat - cert.lambda_hat)).powi(n as i32)),
        Regime::Slow if n == 0 => Err(invalid("n", "the slow-regime bound is undefined at n = 0")),
        Regime::Slow => Ok(2.0 / (cert.lambda_hat * n as f64)),
        Regime::Uncertified => Err(Error::Precondition(format!(
            "no rate bound for an uncertified kernel (alpha_hat={}, lambda_hat={})",
            cert.alpha_hat, cert.lambda_hat
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateOptions {
    /// Tolerance of the fixed-point search for `π`.
    pub invariant_tol: f64,
    pub max_iter: usize,
    /// Absolute slack for floating-point noise when comparing with the bound.
    pub slack: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            invariant_tol: 1e-14,
            max_iter: DEFAULT_MAX_ITER,
            slack: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub measured: f64,
    pub bound: f64,
}

impl RateRow {
    pub fn margin(&self) -> f64 {
        self.bound - self.measured
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub certificate: ErgodicityCertificate,
    pub options: RateOptions,
    /// `None` when the fixed-point search failed, which in a certified
    /// regime contradicts the uniqueness claim and counts as a falsification.
    pub invariant: Option<DiscreteMeasure>,
    pub rows: Vec<RateRow>,
    /// Values of `n` where the measured distance exceeds the bound.
    pub violations: Vec<usize>,
}

impl RateReport {
    pub fn falsified(&self) -> bool {
        self.invariant.is_none() || !self.violations.is_empty()
    }

    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(RateRow::margin).fold(f64::INFINITY, f64::min)
    }
}

/// Finds `π`, propagates `μ0` for `steps` steps, and compares `d_TV(μ_n, π)`
/// with [`rate_bound`]. Rows start at `n = 1` in the slow regime.
pub fn check_rate(
    kernel: &NonlinearKernel,
    cert: &ErgodicityCertificate,
    mu0: &DiscreteMeasure,
    steps: usize,
    opts: RateOptions,
) -> Result<RateReport> {
    if cert.regime == Regime::Uncertified {
        rate_bound(cert, 1)?;
    }
    let outcome = find_invariant(kernel, mu0, opts.invariant_tol, opts.max_iter)?;
    let pi = match outcome {
        FixedPointOutcome::Converged { pi, .. } => pi,
        FixedPointOutcome::NoConvergence { .. } => {
            return Ok(RateReport {
                certificate: cert.clone(),
                options: opts,
                invariant: None,
                rows: Vec::new(),
                violations: Vec::new(),
            })
        }
    };
    let traj = evolve(kernel, mu0, steps)?;
    let measured = traj.distances_to(&pi)?;
    let first = if cert.regime == Regime::Slow { 1 } else { 0 };
    let mut rows = Vec::with_capacity(steps + 1);
    let mut violations = Vec::new();
    for (n, &d) in measured.iter().enumerate().skip(first) {
        let bound = rate_bound(cert, n)?;
        if d > bound + opts.slack {
            violations.push(n);
        }
        rows.push(RateRow { n, measured: d, bound });
    }
    Ok(RateReport {
        certificate: cert.clone(),
        options: opts,
        invariant: Some(pi),
        rows,
        violations,
    })
}
