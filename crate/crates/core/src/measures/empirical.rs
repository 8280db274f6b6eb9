use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// N sample locations in ℝ^d, stored row-major (`points[i*d .. (i+1)*d]`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(invalid(
                "points",
                format!("length {} is not a positive multiple of {dim}", points.len()),
            ));
        }
        if let Some(i) = points.iter().position(|x| !x.is_finite()) {
            return Err(invalid("points", format!("coordinate {i} is not finite")));
        }
        Ok(Self { dim, points })
    }

    /// One-dimensional sample set.
    pub fn from_scalars(xs: Vec<f64>) -> Result<Self> {
        Self::new(1, xs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn raw(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Coordinate-wise mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for p in self.iter() {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += x;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Shared binning of a box `[lower, upper)` into a regular grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins: Vec<usize>,
}

impl Default for Binning {
    fn default() -> Self {
        Self::uniform_1d(-10.0, 10.0, 200)
    }
}

impl Binning {
    pub fn uniform_1d(lower: f64, upper: f64, bins: usize) -> Self {
        Self {
            lower: vec![lower],
            upper: vec![upper],
            bins: vec![bins],
        }
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn total_bins(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.bins.len();
        if d == 0 || self.lower.len() != d || self.upper.len() != d {
            return Err(invalid("binning", "lower/upper/bins must share a positive length"));
        }
        for k in 0..d {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(invalid("binning", format!("axis {k}: need finite lower < upper")));
            }
            if self.bins[k] == 0 {
                return Err(invalid("binning", format!("axis {k}: bin count must be ≥ 1")));
            }
        }
        Ok(())
    }

    /// Flat bin index of `x`, or `None` when `x` is outside the half-open box.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        let mut idx = 0usize;
        for k in 0..self.bins.len() {
            let (lo, hi, nb) = (self.lower[k], self.upper[k], self.bins[k]);
            let v = x[k];
            if !(v >= lo && v < hi) {
                return None;
            }
            let j = (((v - lo) / (hi - lo)) * nb as f64) as usize;
            idx = idx * nb + j.min(nb - 1);
        }
        Some(idx)
    }
}

/// Bin masses of a sample set, plus the mass that fell outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramDensity {
    pub binning: Binning,
    pub masses: Vec<f64>,
    pub overflow: f64,
}

impl HistogramDensity {
    pub fn of(ensemble: &EmpiricalMeasure, binning: &Binning) -> Result<Self> {
        binning.validate()?;
        if binning.dim() != ensemble.dim() {
            return Err(Error::DimensionMismatch {
                expected: binning.dim(),
                actual: ensemble.dim(),
            });
        }
        let mut counts = vec![0u64; binning.total_bins()];
        let mut outside = 0u64;
        for p in ensemble.iter() {
            match binning.locate(p) {
                Some(i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        let n = ensemble.len() as f64;
        Ok(Self {
            binning: binning.clone(),
            masses: counts.iter().map(|&c| c as f64 / n).collect(),
            overflow: outside as f64 / n,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.overflow
    }
}

/// `Σ_bins |a − b| + |overflow_a − overflow_b|`, in `[0, 2]`.
pub fn tv_between_histograms(a: &HistogramDensity, b: &HistogramDensity) -> Result<f64> {
    if a.binning != b.binning {
        return Err(invalid("binning", "histograms use different binnings"));
    }
    Ok(super::l1(&a.masses, &b.masses) + (a.overflow - b.overflow).abs())
}
