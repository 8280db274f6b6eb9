use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::NonlinearKernel;
use crate::measures::{l1, DiscreteMeasure};

/// Slack allowed before a pair counts as violating the inequality.
pub const CONTRACTION_TOL: f64 = 1e-10;

/// Right-hand side `d(1 − α + λ) − λ d²/2`.
pub fn contraction_rhs(d: f64, alpha: f64, lambda: f64) -> f64 {
    d * (1.0 - alpha + lambda) - lambda * d * d / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionViolation {
    pub pair_index: usize,
    pub distance: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub kernel: String,
    pub alpha: f64,
    pub lambda: f64,
    pub pairs_checked: usize,
    /// Largest `lhs − rhs` seen; negative when every pair has room to spare.
    pub max_excess: f64,
    pub violations: Vec<ContractionViolation>,
}

impl ContractionReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates `d_TV(P_μ μ, P_ν ν) ≤ d(1 − α + λ) − λ d²/2` with
/// `d = d_TV(μ, ν)` for each pair.
pub fn check_contraction_inequality(
    kernel: &NonlinearKernel,
    alpha: f64,
    lambda: f64,
    pairs: &[(DiscreteMeasure, DiscreteMeasure)],
) -> Result<ContractionReport> {
    let n = kernel.space_size();
    if let Some((a, b)) = pairs.iter().find(|(a, b)| a.len() != n || b.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if a.len() != n { a.len() } else { b.len() },
        });
    }
    let evaluated: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .map(|(mu, nu)| {
            let d = l1(mu.probs(), nu.probs());
            let lhs = l1(&kernel.step_weights(mu)?, &kernel.step_weights(nu)?);
            Ok((d, lhs, contraction_rhs(d, alpha, lambda)))
        })
        .collect::<Result<_>>()?;
    let max_excess = evaluated
        .iter()
        .map(|(_, l, r)| l - r)
        .fold(f64::NEG_INFINITY, f64::max);
    let violations = evaluated
        .iter()
        .enumerate()
        .filter(|(_, (_, l, r))| *l > r + CONTRACTION_TOL)
        .map(|(i, &(distance, lhs, rhs))| ContractionViolation {
            pair_index: i,
            distance,
            lhs,
            rhs,
        })
        .collect();
    Ok(ContractionReport {
        kernel: kernel.label().to_string(),
        alpha,
        lambda,
        pairs_checked: pairs.len(),
        max_excess: if pairs.is_empty() { 0.0 } else { max_excess },
        violations,
    })
}
