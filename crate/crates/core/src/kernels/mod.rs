//! Nonlinear transition kernels `ν ↦ P_ν` on finite state spaces, the
//! built-in example kernels, and grid estimators for the overlap `α` and
//! the measure-Lipschitz constant `λ`.

mod builtin;
mod estimate;
mod expr;
mod grid;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

pub(crate) use builtin::threshold_index;
pub use builtin::{
    birth_death_with_reset, continuum_kernel, cyclic_mixing_matrix, markov_example, markov_kernel, mixture_example,
    mixture_kernel, no_invariant_kernel, oscillating_kernel,
};
pub use estimate::{
    certify, estimate_alpha, estimate_lambda, ErgodicityCertificate, Regime, DEFAULT_TIE_TOLERANCE,
    LAMBDA_PAIR_FLOOR,
};
pub use expr::{load_custom_kernel, CustomKernelSpec, Expr};
pub use grid::{default_resolution, MeasureGrid};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Maximum allowed deviation of a row sum from one.
pub const ROW_SUM_TOL: f64 = 1e-10;
/// Entries below `-NEGATIVE_ENTRY_TOL` are rejected.
pub const NEGATIVE_ENTRY_TOL: f64 = 1e-12;

/// Dense row-major `n × n` matrix; row `x` is the law `P(x, ·)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Shape-checked constructor. Stochasticity is checked separately by
    /// [`TransitionMatrix::row_defect`] so that corrupted matrices can be
    /// built for negative controls.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: r.len(),
            });
        }
        Self::new(n, rows.concat())
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.n..(x + 1) * self.n]
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.n + y]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n)
    }

    /// Left action `(νQ)_j = Σ_i ν_i Q(i, j)`.
    pub fn push_forward(&self, nu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (w, row) in nu.iter().zip(self.rows()) {
            if *w == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(row) {
                *o += w * q;
            }
        }
        out
    }

    /// Right action `(Qφ)(x) = Σ_j Q(x, j) φ_j`.
    pub fn apply_function(&self, phi: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|row| row.iter().zip(phi).map(|(q, f)| q * f).sum())
            .collect()
    }

    /// First row that is not a probability vector, with the reason, plus
    /// the worst absolute row-sum deviation seen.
    pub fn row_defect(&self) -> (f64, Option<(usize, String)>) {
        let mut worst = 0.0f64;
        let mut first = None;
        for (x, row) in self.rows().enumerate() {
            let dev = (row.iter().sum::<f64>() - 1.0).abs();
            worst = worst.max(if dev.is_nan() { f64::INFINITY } else { dev });
            if first.is_some() {
                continue;
            }
            if let Some((j, v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !v.is_finite() || **v < -NEGATIVE_ENTRY_TOL)
            {
                first = Some((x, format!("entry {j} is {v}")));
            } else if !(dev <= ROW_SUM_TOL) {
                first = Some((x, format!("row sum deviates from 1 by {dev:.3e}")));
            }
        }
        (worst, first)
    }
}

type RowBuilder = dyn Fn(&DiscreteMeasure) -> TransitionMatrix + Send + Sync;

/// A deterministic map from measures to row-stochastic matrices.
#[derive(Clone)]
pub struct NonlinearKernel {
    space_size: usize,
    label: String,
    measure_independent: bool,
    builder: Arc<RowBuilder>,
}

impl fmt::Debug for NonlinearKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearKernel")
            .field("space_size", &self.space_size)
            .field("label", &self.label)
            .field("measure_independent", &self.measure_independent)
            .finish()
    }
}

impl NonlinearKernel {
    pub fn new<F>(space_size: usize, label: impl Into<String>, builder: F) -> Self
    where
        F: Fn(&DiscreteMeasure) -> TransitionMatrix + Send + Sync + 'static,
    {
        Self {
            space_size,
            label: label.into(),
            measure_independent: false,
            builder: Arc::new(builder),
        }
    }

    /// An ordinary Markov kernel: the matrix ignores the measure.
    pub fn constant(label: impl Into<String>, q: TransitionMatrix) -> Self {
        let n = q.size();
        let mut k = Self::new(n, label, move |_| q.clone());
        k.measure_independent = true;
        k
    }

    pub fn space_size(&self) -> usize {
        self.space_size
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_measure_independent(&self) -> bool {
        self.measure_independent
    }

    /// `P_ν`, shape-checked but not validated.
    pub fn matrix(&self, nu: &DiscreteMeasure) -> Result<TransitionMatrix> {
        if nu.len() != self.space_size {
            return Err(Error::DimensionMismatch {
                expected: self.space_size,
                actual: nu.len(),
            });
        }
        let m = (self.builder)(nu);
        if m.size() != self.space_size {
            return Err(Error::DimensionMismatch {
                expected: self.space_size,
                actual: m.size(),
            });
        }
        Ok(m)
    }

    /// `P_μ μ` as raw weights.
    pub fn step_weights(&self, mu: &DiscreteMeasure) -> Result<Vec<f64>> {
        Ok(self.matrix(mu)?.push_forward(mu.probs()))
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub kernel: String,
    pub measures_checked: usize,
    pub worst_row_sum_deviation: f64,
}

/// Checks that `P_ν` is row-stochastic for every `ν` on the grid.
pub fn validate(kernel: &NonlinearKernel, grid: &MeasureGrid) -> Result<ValidationReport> {
    check_grid(kernel, grid)?;
    let mut worst = 0.0f64;
    for (idx, nu) in grid.points().iter().enumerate() {
        let m = kernel.matrix(nu)?;
        let (dev, defect) = m.row_defect();
        if let Some((row, reason)) = defect {
            return Err(Error::RowValidation {
                measure_index: idx,
                row,
                reason: format!("{reason} (ν = {:?})", nu.probs()),
            });
        }
        worst = worst.max(dev);
    }
    Ok(ValidationReport {
        kernel: kernel.label().to_string(),
        measures_checked: grid.len(),
        worst_row_sum_deviation: worst,
    })
}

pub(crate) fn check_grid(kernel: &NonlinearKernel, grid: &MeasureGrid) -> Result<()> {
    if kernel.space_size() != grid.space_size() {
        return Err(Error::DimensionMismatch {
            expected: kernel.space_size(),
            actual: grid.space_size(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        let g2 = MeasureGrid::new(2, 50).unwrap();
        assert!(validate(&oscillating_kernel(0.5).unwrap(), &g2).is_ok());
        let r = validate(&continuum_kernel(0.2, 0.8).unwrap(), &g2).unwrap();
        assert!(r.worst_row_sum_deviation < 1e-15);
        let g4 = MeasureGrid::new(4, 8).unwrap();
        let r = validate(&no_invariant_kernel(0.3, 0.6, 4).unwrap(), &g4).unwrap();
        assert!(r.worst_row_sum_deviation <= 1e-12);
        let g5 = MeasureGrid::new(5, 6).unwrap();
        assert!(validate(&mixture_example(5).unwrap(), &g5).is_ok());
    }

    #[test]
    fn corrupted_rows_fail_validation() {
        let bad = TransitionMatrix::from_rows(vec![vec![0.5, 0.4], vec![0.5, 0.4]]).unwrap();
        let k = NonlinearKernel::constant("corrupted", bad);
        let err = validate(&k, &MeasureGrid::new(2, 4).unwrap()).unwrap_err();
        match err {
            Error::RowValidation { measure_index, row, .. } => {
                assert_eq!((measure_index, row), (0, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_entries_fail_validation() {
        let bad = TransitionMatrix::from_rows(vec![vec![1.1, -0.1], vec![0.5, 0.5]]).unwrap();
        assert!(bad.row_defect().1.is_some());
    }

    #[test]
    fn actions() {
        let q = TransitionMatrix::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let out = q.push_forward(&[0.5, 0.5]);
        assert!((out[0] - 0.55).abs() < 1e-15 && (out[1] - 0.45).abs() < 1e-15);
        let f = q.apply_function(&[1.0, 2.0]);
        assert!((f[0] - 1.1).abs() < 1e-15 && (f[1] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn dimension_checks() {
        let k = oscillating_kernel(0.5).unwrap();
        assert!(k.matrix(&DiscreteMeasure::uniform(3).unwrap()).is_err());
        assert!(validate(&k, &MeasureGrid::new(3, 2).unwrap()).is_err());
    }
}
