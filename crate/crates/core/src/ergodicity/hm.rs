//! Contraction in the weighted distance `d_{1+βV}` for a Markov kernel with a
//! Lyapunov function `V` (drift `QV ≤ γV + K`) and a local overlap on the
//! sublevel set `{V ≤ 4K/(1−γ)}`.
//!
//! For a fixed kernel the contraction factor is attained on Dirac pairs:
//! writing `μ − ν` as a non-negative combination of `δ_x − δ_y` whose
//! weighted norms add up to `d_{1+βV}(μ, ν)` and applying the triangle
//! inequality bounds every pair by the worst Dirac ratio. Random pairs are
//! still checked against the result as a guard on the implementation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{NonlinearKernel, TransitionMatrix};
use crate::measures::{l1, weighted_l1, DiscreteMeasure};

/// Slack on the drift and overlap preconditions.
const PRECONDITION_TOL: f64 = 1e-12;
/// Slack on the certified inequality for validation pairs.
pub const HM_VALIDATION_TOL: f64 = 1e-10;

/// Log-spaced `β` values from `1e−3` to `1e2`.
pub fn default_beta_grid() -> Vec<f64> {
    (0..=60).map(|k| 10f64.powf(-3.0 + 5.0 * k as f64 / 60.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmOptions {
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha_local: f64,
    pub beta_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaScan {
    pub beta: f64,
    pub lambda_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HMCertificate {
    pub kernel: String,
    pub gamma: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha_local: f64,
    /// Overlap actually measured on the sublevel set.
    pub observed_alpha_local: f64,
    /// `4K/(1−γ)`.
    pub sublevel_threshold: f64,
    /// Zero-based states with `V ≤ sublevel_threshold`.
    pub sublevel_states: Vec<usize>,
    pub beta: f64,
    pub lambda_w: f64,
    pub beta_scan: Vec<BetaScan>,
    pub validation_pairs: usize,
    /// Largest `d_{1+βV}(Qμ, Qν)/d_{1+βV}(μ, ν)` over the validation pairs.
    pub max_validation_ratio: f64,
}

impl HMCertificate {
    /// Indices of pairs violating `d_f(Qμ, Qν) ≤ λ_w d_f(μ, ν) + tol`.
    pub fn violations(
        &self,
        q: &TransitionMatrix,
        v: &[f64],
        pairs: &[(DiscreteMeasure, DiscreteMeasure)],
        tol: f64,
    ) -> Vec<usize> {
        let f = weights(v, self.beta);
        pairs
            .iter()
            .enumerate()
            .filter(|(_, (mu, nu))| {
                let (lhs, rhs) = sides(q, &f, mu, nu);
                lhs > self.lambda_w * rhs + tol
            })
            .map(|(i, _)| i)
            .collect()
    }
}

fn weights(v: &[f64], beta: f64) -> Vec<f64> {
    v.iter().map(|x| 1.0 + beta * x).collect()
}

fn sides(q: &TransitionMatrix, f: &[f64], mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (f64, f64) {
    let lhs = weighted_l1(f, &q.push_forward(mu.probs()), &q.push_forward(nu.probs()));
    (lhs, weighted_l1(f, mu.probs(), nu.probs()))
}

fn dirac_lambda(q: &TransitionMatrix, v: &[f64], beta: f64) -> f64 {
    let f = weights(v, beta);
    let n = q.size();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in x + 1..n {
            worst = worst.max(weighted_l1(&f, q.row(x), q.row(y)) / (f[x] + f[y]));
        }
    }
    worst
}

pub fn certify_hm_contraction(
    kernel: &NonlinearKernel,
    v: &[f64],
    opts: &HmOptions,
    test_pairs: &[(DiscreteMeasure, DiscreteMeasure)],
) -> Result<HMCertificate> {
    if !kernel.is_measure_independent() {
        return Err(Error::Precondition(format!(
            "`{}` depends on the measure; only fixed Markov kernels are supported",
            kernel.label()
        )));
    }
    let n = kernel.space_size();
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(invalid("V", "entries must be finite and non-negative"));
    }
    if !(0.0..1.0).contains(&opts.gamma) {
        return Err(invalid("gamma", format!("{} outside [0, 1)", opts.gamma)));
    }
    if !(opts.k >= 0.0 && opts.k.is_finite()) {
        return Err(invalid("K", format!("{} must be finite and non-negative", opts.k)));
    }
    if !(opts.alpha_local > 0.0 && opts.alpha_local <= 1.0) {
        return Err(invalid("alpha_local", format!("{} outside (0, 1]", opts.alpha_local)));
    }
    if opts.beta_grid.is_empty() || opts.beta_grid.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(invalid("beta_grid", "must be a non-empty list of positive numbers"));
    }
    let q = kernel.matrix(&DiscreteMeasure::uniform(n)?)?;

    let qv = q.apply_function(v);
    for x in 0..n {
        let allowed = opts.gamma * v[x] + opts.k;
        if qv[x] > allowed + PRECONDITION_TOL {
            return Err(Error::Precondition(format!(
                "drift QV <= gamma V + K fails at state {x}: QV = {}, gamma V + K = {allowed}",
                qv[x]
            )));
        }
    }

    let threshold = 4.0 * opts.k / (1.0 - opts.gamma);
    let sublevel: Vec<usize> = (0..n).filter(|&x| v[x] <= threshold).collect();
    let mut worst_tv = 0.0f64;
    for (i, &x) in sublevel.iter().enumerate() {
        for &y in &sublevel[i + 1..] {
            let d = l1(q.row(x), q.row(y));
            if d > 2.0 * (1.0 - opts.alpha_local) + PRECONDITION_TOL {
                return Err(Error::Precondition(format!(
                    "local overlap {} fails on the sublevel set for states ({x}, {y}): d_TV = {d}",
                    opts.alpha_local
                )));
            }
            worst_tv = worst_tv.max(d);
        }
    }

    let beta_scan: Vec<BetaScan> = opts
        .beta_grid
        .par_iter()
        .map(|&beta| BetaScan {
            beta,
            lambda_w: dirac_lambda(&q, v, beta),
        })
        .collect();
    // first minimum in grid order
    let best = beta_scan
        .iter()
        .copied()
        .reduce(|a, b| if b.lambda_w < a.lambda_w { b } else { a })
        .expect("non-empty grid");
    if !(best.lambda_w < 1.0) {
        return Err(Error::Certification(format!(
            "no beta in the grid gives lambda_w < 1 (best: beta = {}, lambda_w = {})",
            best.beta, best.lambda_w
        )));
    }

    let f = weights(v, best.beta);
    let mut max_ratio = 0.0f64;
    for (i, (mu, nu)) in test_pairs.iter().enumerate() {
        if mu.len() != n || nu.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: mu.len().max(nu.len()),
            });
        }
        let (lhs, rhs) = sides(&q, &f, mu, nu);
        if lhs > best.lambda_w * rhs + HM_VALIDATION_TOL {
            return Err(Error::Certification(format!(
                "validation pair #{i} breaks the certified inequality: {lhs} > {} * {rhs}",
                best.lambda_w
            )));
        }
        if rhs > 0.0 {
            max_ratio = max_ratio.max(lhs / rhs);
        }
    }

    Ok(HMCertificate {
        kernel: kernel.label().to_string(),
        gamma: opts.gamma,
        k: opts.k,
        alpha_local: opts.alpha_local,
        observed_alpha_local: 1.0 - 0.5 * worst_tv,
        sublevel_threshold: threshold,
        sublevel_states: sublevel,
        beta: best.beta,
        lambda_w: best.lambda_w,
        beta_scan,
        validation_pairs: test_pairs.len(),
        max_validation_ratio: max_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{birth_death_with_reset, markov_kernel};
    use crate::measures::random_measure_pairs;

    fn pow2() -> Vec<f64> {
        (0..5).map(|i| 2f64.powi(i)).collect()
    }

    fn opts(gamma: f64, k: f64, alpha_local: f64) -> HmOptions {
        HmOptions {
            gamma,
            k,
            alpha_local,
            beta_grid: default_beta_grid(),
        }
    }

    #[test]
    fn equal_rows_contract_completely() {
        let q = TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let k = markov_kernel("flat", q);
        let c = certify_hm_contraction(&k, &[1.0, 1.0], &opts(0.0, 1.0, 1.0), &random_measure_pairs(2, 50, 1)).unwrap();
        assert_eq!(c.lambda_w, 0.0);
    }

    #[test]
    fn birth_death_chain_is_certified_and_self_consistent() {
        let q = birth_death_with_reset();
        let k = markov_kernel("birth-death", q.clone());
        let v = pow2();
        let c = certify_hm_contraction(&k, &v, &opts(0.8, 2.0, 0.2), &random_measure_pairs(5, 1000, 7)).unwrap();
        assert!(c.lambda_w < 1.0);
        assert_eq!(c.sublevel_states, vec![0, 1, 2, 3, 4]);
        assert!(c.max_validation_ratio <= c.lambda_w + 1e-12);
        let fresh = random_measure_pairs(5, 1000, 8);
        assert!(c.violations(&q, &v, &fresh, HM_VALIDATION_TOL).is_empty());
        // the result is serializable and round-trips
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<HMCertificate>(&text).unwrap(), c);
    }

    #[test]
    fn dirac_ratio_dominates_mixtures() {
        // direct comparison against brute-force ratios on random pairs
        let q = birth_death_with_reset();
        let v = pow2();
        for beta in [0.01, 0.3, 5.0] {
            let lam = dirac_lambda(&q, &v, beta);
            let f = weights(&v, beta);
            for (mu, nu) in random_measure_pairs(5, 300, 9) {
                let (lhs, rhs) = sides(&q, &f, &mu, &nu);
                assert!(lhs <= lam * rhs + 1e-12);
            }
        }
    }

    #[test]
    fn drift_violation_is_rejected_with_state() {
        let k = markov_kernel("birth-death", birth_death_with_reset());
        let err = certify_hm_contraction(&k, &pow2(), &opts(0.5, 0.1, 0.2), &[]).unwrap_err();
        match err {
            Error::Precondition(msg) => assert!(msg.contains("state"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_overlap_is_rejected() {
        let q = TransitionMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let k = markov_kernel("identity", q);
        let err = certify_hm_contraction(&k, &[1.0, 1.0], &opts(0.5, 1.0, 0.1), &[]).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }
}
