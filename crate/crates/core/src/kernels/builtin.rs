//! Built-in kernels. State `k` in the formulas below is index `k − 1` in
//! code (states are numbered from one in the usual presentation).

use super::{NonlinearKernel, TransitionMatrix};
use crate::error::{invalid, Result};

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.min(hi).max(lo)
}

/// Two-state kernel whose rows both equal
/// `(clamp(ν₂, γ/2, 1−γ/2), clamp(ν₁, γ/2, 1−γ/2))`: the chain swaps the
/// two coordinates of its law at every step.
pub fn oscillating_kernel(gamma: f64) -> Result<NonlinearKernel> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", format!("{gamma} outside (0, 1)")));
    }
    let (lo, hi) = (gamma / 2.0, 1.0 - gamma / 2.0);
    Ok(NonlinearKernel::new(2, format!("oscillating(gamma={gamma})"), move |nu| {
        let p = nu.probs();
        let row = [clamp(p[1], lo, hi), clamp(p[0], lo, hi)];
        TransitionMatrix {
            n: 2,
            data: vec![row[0], row[1], row[0], row[1]],
        }
    }))
}

fn check_alpha_lambda(alpha: f64, lambda: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("{alpha} must be positive")));
    }
    if !(alpha < lambda && lambda <= 1.0) {
        return Err(invalid(
            "lambda",
            format!("need 0 < alpha < lambda <= 1, got alpha={alpha}, lambda={lambda}"),
        ));
    }
    Ok(())
}

/// Two-state kernel with every entry in `[α/2, 1 − α/2]` for which every
/// `a δ₁ + (1 − a) δ₂` with `a ∈ [α/(2λ), 1 − α/(2λ)]` is stationary.
pub fn continuum_kernel(alpha: f64, lambda: f64) -> Result<NonlinearKernel> {
    check_alpha_lambda(alpha, lambda)?;
    let (lo, hi) = (alpha / 2.0, lambda - alpha / 2.0);
    Ok(NonlinearKernel::new(
        2,
        format!("continuum(alpha={alpha},lambda={lambda})"),
        move |nu| {
            let p = nu.probs();
            let off12 = clamp(lambda * p[1], lo, hi);
            let off21 = clamp(lambda * p[0], lo, hi);
            let d11 = ((1.0 - lambda * p[1]).min(1.0 - alpha / 2.0)).max(1.0 - lambda + alpha / 2.0);
            let d22 = ((1.0 - lambda * p[0]).min(1.0 - alpha / 2.0)).max(1.0 - lambda + alpha / 2.0);
            TransitionMatrix {
                n: 2,
                data: vec![d11, off12, off21, d22],
            }
        },
    ))
}

/// Kernel on states `1..=truncation` with
/// `P_ν(i, 1) = (λ ν₁) ∨ α` and, for `j ≠ 1`,
/// `P_ν(i, j) = ((λ ν({1..j}) − α) ∧ λ ν_j) ∨ 0 + (1 − λ)·1[j = i + 1]`.
///
/// The shift mass `(1 − λ)` leaving the last state is kept in the last
/// state, which keeps rows stochastic but distorts the tail dynamics.
pub fn no_invariant_kernel(alpha: f64, lambda: f64, truncation: usize) -> Result<NonlinearKernel> {
    check_alpha_lambda(alpha, lambda)?;
    if truncation < 3 {
        return Err(invalid("truncation", format!("{truncation} < 3")));
    }
    let n = truncation;
    Ok(NonlinearKernel::new(
        n,
        format!("no-invariant(alpha={alpha},lambda={lambda},truncation={n})"),
        move |nu| {
            let p = nu.probs();
            let mut base = vec![0.0; n];
            base[0] = (lambda * p[0]).max(alpha);
            let mut cum = p[0];
            for j in 1..n {
                cum += p[j];
                base[j] = ((lambda * cum - alpha).min(lambda * p[j])).max(0.0);
            }
            let mut data = Vec::with_capacity(n * n);
            for i in 0..n {
                let start = data.len();
                data.extend_from_slice(&base);
                data[start + (i + 1).min(n - 1)] += 1.0 - lambda;
            }
            TransitionMatrix { n, data }
        },
    ))
}

/// Measure-independent kernel.
pub fn markov_kernel(label: impl Into<String>, q: TransitionMatrix) -> NonlinearKernel {
    NonlinearKernel::constant(label, q)
}

/// `P_ν = (1 − λ) Q + λ 1 νᵀ`: every row is pulled toward the current law.
/// The measure-Lipschitz constant of this family is exactly `λ`.
pub fn mixture_kernel(q: TransitionMatrix, lambda: f64) -> Result<NonlinearKernel> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("lambda", format!("{lambda} outside [0, 1]")));
    }
    let n = q.size();
    Ok(NonlinearKernel::new(n, format!("mixture(n={n},lambda={lambda})"), move |nu| {
        let p = nu.probs();
        let data = q
            .rows()
            .flat_map(|row| row.iter().zip(p).map(|(qv, pv)| (1.0 - lambda) * qv + lambda * pv))
            .collect();
        TransitionMatrix { n, data }
    }))
}

/// The shipped fast-regime example: `Q = ½·uniform + ½·(cyclic shift)`
/// mixed with `λ = 0.15`.
pub fn mixture_example(n: usize) -> Result<NonlinearKernel> {
    mixture_kernel(cyclic_mixing_matrix(n)?, 0.15)
}

/// `½·uniform + ½·(cyclic shift)` on `n` states.
pub fn cyclic_mixing_matrix(n: usize) -> Result<TransitionMatrix> {
    if n < 2 {
        return Err(invalid("n", "need at least two states"));
    }
    let mut data = vec![0.5 / n as f64; n * n];
    for i in 0..n {
        data[i * n + (i + 1) % n] += 0.5;
    }
    Ok(TransitionMatrix { n, data })
}

/// Three-state Markov kernel with Dobrushin overlap exactly 0.4.
pub fn markov_example() -> NonlinearKernel {
    let q = TransitionMatrix {
        n: 3,
        data: vec![0.7, 0.2, 0.1, 0.1, 0.7, 0.2, 0.2, 0.1, 0.7],
    };
    markov_kernel("markov-example", q)
}

/// Five-state birth–death chain with a reset to state 0 (down 0.5, up 0.1,
/// reset 0.2, hold 0.2; moves past either boundary hold instead).
/// With `V(i) = 2^i` it satisfies `QV ≤ 0.8 V + 2`.
pub fn birth_death_with_reset() -> TransitionMatrix {
    let n = 5;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut data[i * n..(i + 1) * n];
        row[0] += 0.2;
        row[i.saturating_sub(1)] += 0.5;
        row[i] += 0.2;
        row[(i + 1).min(n - 1)] += 0.1;
    }
    TransitionMatrix { n, data }
}

/// `n(ν)`: the first (zero-based) index with `λ ν({1..=n}) ≥ α`.
pub(crate) fn threshold_index(p: &[f64], alpha: f64, lambda: f64) -> Option<usize> {
    let mut cum = 0.0;
    for (j, v) in p.iter().enumerate() {
        cum += v;
        if lambda * cum >= alpha {
            return Some(j);
        }
    }
    None
}
