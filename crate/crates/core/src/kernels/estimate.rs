//! Grid estimates of the overlap `α` and the measure-Lipschitz constant `λ`.
//!
//! Both are suprema over pairs of measures, replaced here by maxima over a
//! [`MeasureGrid`]. Refining the grid can only lower `α̂` and raise `λ̂`.
//! Sweeps run in parallel with a max-reduction, so the result does not depend
//! on the evaluation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_grid, MeasureGrid, NonlinearKernel, TransitionMatrix};
use crate::error::Result;
use crate::measures::l1;

/// Default tie tolerance when classifying `λ̂` against `α̂`.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-6;
/// Grid pairs closer than this in TV are skipped by [`estimate_lambda`].
pub const LAMBDA_PAIR_FLOOR: f64 = 1e-9;

fn matrices(kernel: &NonlinearKernel, grid: &MeasureGrid) -> Result<Vec<TransitionMatrix>> {
    check_grid(kernel, grid)?;
    grid.points().par_iter().map(|nu| kernel.matrix(nu)).collect()
}

/// `1 − ½ max_{μ,ν,x,y} d_TV(P_μ(x,·), P_ν(y,·))` over the grid.
pub fn estimate_alpha(kernel: &NonlinearKernel, grid: &MeasureGrid) -> Result<f64> {
    let mats = matrices(kernel, grid)?;
    let mut rows: Vec<&[f64]> = mats.iter().flat_map(|m| m.rows()).collect();
    // identical rows contribute nothing new
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    rows.dedup();
    let worst = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            rows[i + 1..]
                .iter()
                .map(|r| l1(rows[i], r))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok((1.0 - 0.5 * worst).clamp(0.0, 1.0))
}

/// `max_{μ≠ν, x} d_TV(P_μ(x,·), P_ν(x,·)) / d_TV(μ, ν)` over grid pairs with
/// `d_TV(μ, ν) ≥ LAMBDA_PAIR_FLOOR`.
pub fn estimate_lambda(kernel: &NonlinearKernel, grid: &MeasureGrid) -> Result<f64> {
    if kernel.is_measure_independent() {
        return Ok(0.0);
    }
    let mats = matrices(kernel, grid)?;
    let pts = grid.points();
    let n = kernel.space_size();
    let best = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            for j in i + 1..pts.len() {
                let d = l1(pts[i].probs(), pts[j].probs());
                if d < LAMBDA_PAIR_FLOOR {
                    continue;
                }
                for x in 0..n {
                    best = best.max(l1(mats[i].row(x), mats[j].row(x)) / d);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `λ < α`: geometric convergence at rate `1 − (α − λ)`.
    Fast,
    /// `λ = α`: convergence at rate `2/(λ n)`.
    Slow,
    /// `λ > α`: no convergence guarantee.
    Uncertified,
}

impl Regime {
    pub fn classify(alpha: f64, lambda: f64, tie_tolerance: f64) -> Self {
        if (lambda - alpha).abs() <= tie_tolerance {
            Regime::Slow
        } else if lambda < alpha {
            Regime::Fast
        } else {
            Regime::Uncertified
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityCertificate {
    pub kernel: String,
    pub alpha_hat: f64,
    pub lambda_hat: f64,
    pub regime: Regime,
    pub grid_resolution: usize,
    pub tie_tolerance: f64,
}

impl ErgodicityCertificate {
    /// A certificate from analytically known constants rather than a grid.
    pub fn from_constants(kernel: impl Into<String>, alpha: f64, lambda: f64, tie_tolerance: f64) -> Self {
        Self {
            kernel: kernel.into(),
            alpha_hat: alpha,
            lambda_hat: lambda,
            regime: Regime::classify(alpha, lambda, tie_tolerance),
            grid_resolution: 0,
            tie_tolerance,
        }
    }
}

pub fn certify(kernel: &NonlinearKernel, grid: &MeasureGrid, tie_tolerance: f64) -> Result<ErgodicityCertificate> {
    let alpha_hat = estimate_alpha(kernel, grid)?;
    let lambda_hat = estimate_lambda(kernel, grid)?;
    Ok(ErgodicityCertificate {
        kernel: kernel.label().to_string(),
        alpha_hat,
        lambda_hat,
        regime: Regime::classify(alpha_hat, lambda_hat, tie_tolerance),
        grid_resolution: grid.resolution(),
        tie_tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::*;
    use crate::measures::DiscreteMeasure;

    fn grid2() -> MeasureGrid {
        MeasureGrid::new(2, 50).unwrap()
    }

    #[test]
    fn oscillating_alpha_is_gamma() {
        for gamma in [0.1, 0.4, 0.8] {
            for r in [2, 10, 50] {
                let g = MeasureGrid::new(2, r).unwrap();
                let a = estimate_alpha(&oscillating_kernel(gamma).unwrap(), &g).unwrap();
                assert!((a - gamma).abs() < 1e-12, "gamma={gamma} r={r} a={a}");
            }
        }
    }

    #[test]
    fn continuum_constants_are_respected() {
        let k = continuum_kernel(0.2, 0.8).unwrap();
        let a = estimate_alpha(&k, &grid2()).unwrap();
        let l = estimate_lambda(&k, &grid2()).unwrap();
        assert!(a >= 0.2 - 1e-12, "{a}");
        assert!(l <= 0.8 + 1e-12, "{l}");
        let cert = certify(&k, &grid2(), DEFAULT_TIE_TOLERANCE).unwrap();
        assert_eq!(cert.regime, Regime::Uncertified);
    }

    #[test]
    fn constant_rows_have_full_overlap() {
        let q = TransitionMatrix::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let k = markov_kernel("const", q);
        assert_eq!(estimate_alpha(&k, &grid2()).unwrap(), 1.0);
        assert_eq!(estimate_lambda(&k, &grid2()).unwrap(), 0.0);
    }

    #[test]
    fn markov_kernels_have_zero_lambda_and_are_fast() {
        let k = markov_example();
        let g = MeasureGrid::new(3, 10).unwrap();
        let cert = certify(&k, &g, DEFAULT_TIE_TOLERANCE).unwrap();
        assert!((cert.alpha_hat - 0.4).abs() < 1e-12);
        assert_eq!(cert.lambda_hat, 0.0);
        assert_eq!(cert.regime, Regime::Fast);
        // a measure-dependent wrapper of the same matrix gives the same λ̂ = 0
        let q = k.matrix(&DiscreteMeasure::uniform(3).unwrap()).unwrap();
        let wrapped = NonlinearKernel::new(3, "wrapped", move |_| q.clone());
        assert_eq!(estimate_lambda(&wrapped, &g).unwrap(), 0.0);
    }

    #[test]
    fn oscillating_ratio_is_one_without_clamping() {
        let gamma = 0.2;
        let k = oscillating_kernel(gamma).unwrap();
        let mu = DiscreteMeasure::new(vec![0.3, 0.7]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.6, 0.4]).unwrap();
        let a = k.matrix(&mu).unwrap();
        let b = k.matrix(&nu).unwrap();
        let ratio = l1(a.row(0), b.row(0)) / l1(mu.probs(), nu.probs());
        assert!((ratio - 1.0).abs() < 1e-12);
        assert!((estimate_lambda(&k, &grid2()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_family_is_fast() {
        // Q rows (0.8, 0.2), (0.3, 0.7): overlap 0.5; λ = 0.1.
        // max TV is at x≠y with Dirac laws: |0.9·0.5 + 0.1| · 2 = 1.1 → α = 0.45
        let q = TransitionMatrix::from_rows(vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        let k = mixture_kernel(q, 0.1).unwrap();
        let cert = certify(&k, &grid2(), DEFAULT_TIE_TOLERANCE).unwrap();
        assert!((cert.alpha_hat - 0.45).abs() < 1e-12);
        assert!((cert.lambda_hat - 0.1).abs() < 1e-12);
        assert_eq!(cert.regime, Regime::Fast);
    }

    #[test]
    fn refinement_is_monotone() {
        let kernels = [
            continuum_kernel(0.2, 0.8).unwrap(),
            oscillating_kernel(0.3).unwrap(),
            mixture_example(3).unwrap(),
            no_invariant_kernel(0.3, 0.6, 3).unwrap(),
        ];
        for k in &kernels {
            let n = k.space_size();
            let coarse = MeasureGrid::new(n, 4).unwrap();
            let fine = MeasureGrid::new(n, 12).unwrap();
            let (ac, af) = (estimate_alpha(k, &coarse).unwrap(), estimate_alpha(k, &fine).unwrap());
            let (lc, lf) = (estimate_lambda(k, &coarse).unwrap(), estimate_lambda(k, &fine).unwrap());
            assert!(af <= ac + 1e-15, "{}: {af} > {ac}", k.label());
            assert!(lf + 1e-15 >= lc, "{}: {lf} < {lc}", k.label());
        }
    }

    #[test]
    fn regime_classification() {
        assert_eq!(Regime::classify(0.5, 0.2, 1e-6), Regime::Fast);
        assert_eq!(Regime::classify(0.5, 0.5 + 1e-7, 1e-6), Regime::Slow);
        assert_eq!(Regime::classify(0.2, 0.8, 1e-6), Regime::Uncertified);
    }

    #[test]
    fn estimates_are_deterministic_across_thread_counts() {
        let k = mixture_example(5).unwrap();
        let g = MeasureGrid::new(5, 6).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| (estimate_alpha(&k, &g).unwrap(), estimate_lambda(&k, &g).unwrap()))
        };
        let one = run(1);
        assert_eq!(one, run(4));
    }
}
