//! Exact propagation of laws, fixed-point search, and checks of the
//! convergence bounds for nonlinear chains.

mod contraction;
mod hm;
mod rate;

use std::collections::VecDeque;

use serde::Serialize;

pub use contraction::{check_contraction_inequality, contraction_rhs, ContractionReport, ContractionViolation};
pub use hm::{certify_hm_contraction, default_beta_grid, BetaScan, HMCertificate, HmOptions, HM_VALIDATION_TOL};
pub use rate::{check_rate, rate_bound, RateOptions, RateReport, RateRow};

use crate::error::{invalid, Error, Result};
use crate::kernels::NonlinearKernel;
use crate::measures::{l1, DiscreteMeasure};

/// Default tolerance for [`find_invariant`].
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-10;
/// Default iteration budget for [`find_invariant`].
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Longest cycle searched for when the iteration does not settle.
pub const MAX_DETECTED_PERIOD: usize = 8;
/// Number of trailing measures kept in a [`FixedPointOutcome::NoConvergence`].
pub const TAIL_LEN: usize = 10;

/// `μ₀, μ₁, …, μ_n` with `μ_{k+1} = P_{μ_k} μ_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub kernel: String,
    pub measures: Vec<DiscreteMeasure>,
    /// `d_TV(μ_k, μ_{k+1})`, one entry per step.
    pub step_distances: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.step_distances.len()
    }

    pub fn last(&self) -> &DiscreteMeasure {
        self.measures.last().expect("trajectory holds μ₀")
    }

    /// `d_TV(μ_k, target)` for every `k`.
    pub fn distances_to(&self, target: &DiscreteMeasure) -> Result<Vec<f64>> {
        self.measures.iter().map(|m| crate::measures::tv_distance(m, target)).collect()
    }
}

/// One step `μ ↦ P_μ μ`, rejecting a non-stochastic matrix.
pub(crate) fn step(kernel: &NonlinearKernel, mu: &DiscreteMeasure, index: usize) -> Result<DiscreteMeasure> {
    let m = kernel.matrix(mu)?;
    if let Some((row, reason)) = m.row_defect().1 {
        return Err(Error::KernelFailure {
            step: index,
            reason: format!("row {row}: {reason}"),
        });
    }
    Ok(DiscreteMeasure::normalized_from_propagation(m.push_forward(mu.probs())))
}

fn check_dim(kernel: &NonlinearKernel, mu: &DiscreteMeasure) -> Result<()> {
    if mu.len() != kernel.space_size() {
        return Err(Error::DimensionMismatch {
            expected: kernel.space_size(),
            actual: mu.len(),
        });
    }
    Ok(())
}

pub fn evolve(kernel: &NonlinearKernel, mu0: &DiscreteMeasure, steps: usize) -> Result<Trajectory> {
    check_dim(kernel, mu0)?;
    if steps == 0 {
        return Err(invalid("steps", "must be positive"));
    }
    let mut measures = Vec::with_capacity(steps + 1);
    let mut step_distances = Vec::with_capacity(steps);
    measures.push(mu0.clone());
    for k in 0..steps {
        let next = step(kernel, &measures[k], k)?;
        step_distances.push(l1(next.probs(), measures[k].probs()));
        measures.push(next);
    }
    Ok(Trajectory {
        kernel: kernel.label().to_string(),
        measures,
        step_distances,
    })
}

/// `d_TV(P_π π, π)`.
pub fn verify_invariant(kernel: &NonlinearKernel, pi: &DiscreteMeasure) -> Result<f64> {
    check_dim(kernel, pi)?;
    Ok(l1(kernel.step_weights(pi)?.as_slice(), pi.probs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FixedPointOutcome {
    Converged {
        pi: DiscreteMeasure,
        /// Index `k` of the step `μ_k → μ_{k+1}` that met the tolerance.
        iterations: usize,
        residual: f64,
    },
    NoConvergence {
        iterations: usize,
        /// The last measures of the run, oldest first.
        tail: Vec<DiscreteMeasure>,
        last_step_distance: f64,
        /// Smallest `p ≤ 8` with `d_TV(μ_n, μ_{n−p}) < tol`, if any.
        period: Option<usize>,
    },
}

impl FixedPointOutcome {
    pub fn invariant(&self) -> Option<&DiscreteMeasure> {
        match self {
            FixedPointOutcome::Converged { pi, .. } => Some(pi),
            FixedPointOutcome::NoConvergence { .. } => None,
        }
    }
}

/// Iterates `μ ↦ P_μ μ` from `μ0`. Accepts `μ_{k+1}` only when both the
/// step `d_TV(μ_{k+1}, μ_k)` and its own residual `d_TV(P μ_{k+1}, μ_{k+1})`
/// are below `tol`.
pub fn find_invariant(
    kernel: &NonlinearKernel,
    mu0: &DiscreteMeasure,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointOutcome> {
    check_dim(kernel, mu0)?;
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let keep = TAIL_LEN.max(MAX_DETECTED_PERIOD + 1);
    let mut history: VecDeque<DiscreteMeasure> = VecDeque::with_capacity(keep + 1);
    history.push_back(mu0.clone());
    let mut last_step_distance = f64::NAN;
    for k in 0..max_iter {
        let cur = history.back().expect("non-empty");
        let next = step(kernel, cur, k)?;
        last_step_distance = l1(next.probs(), cur.probs());
        if last_step_distance < tol {
            let residual = l1(step(kernel, &next, k + 1)?.probs(), next.probs());
            if residual < tol {
                return Ok(FixedPointOutcome::Converged {
                    pi: next,
                    iterations: k,
                    residual,
                });
            }
        }
        history.push_back(next);
        if history.len() > keep {
            history.pop_front();
        }
    }
    let newest = history.len() - 1;
    let period = (1..=MAX_DETECTED_PERIOD.min(newest))
        .find(|&p| l1(history[newest].probs(), history[newest - p].probs()) < tol);
    let skip = history.len().saturating_sub(TAIL_LEN);
    Ok(FixedPointOutcome::NoConvergence {
        iterations: max_iter,
        tail: history.into_iter().skip(skip).collect(),
        last_step_distance,
        period,
    })
}
