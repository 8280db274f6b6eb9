//! Probability measures and the distances used throughout the crate.
//!
//! Total variation follows the "diameter 2" convention everywhere:
//! `d_TV(μ, ν) = 2 sup_A |μ(A) − ν(A)| = Σ_i |μ_i − ν_i|` on a discrete space.
//! Histogram TV uses the same convention so the two are directly comparable.

mod empirical;
mod wasserstein;

pub use empirical::{tv_between_histograms, EmpiricalMeasure, HistogramDensity, Binning};
pub use wasserstein::{wasserstein2_truncated, W2Method, EXACT_ASSIGNMENT_MAX_N};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance on the total mass of a probability vector at construction.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A probability vector over the states `0..len`.
///
/// Construction rejects (never renormalizes) vectors whose weights are
/// negative, non-finite or do not sum to one within [`NORMALIZATION_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteMeasure {
    probs: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidMeasure("empty state space".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidMeasure(format!("weight {i} is {p}")));
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total:.17e}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Point mass at `state` on a space of `size` states.
    pub fn dirac(size: usize, state: usize) -> Result<Self> {
        if state >= size {
            return Err(invalid("state", format!("{state} outside 0..{size}")));
        }
        let mut probs = vec![0.0; size];
        probs[state] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidMeasure("empty state space".into()));
        }
        Ok(Self {
            probs: vec![1.0 / size as f64; size],
        })
    }

    /// `a δ_0 + (1 − a) δ_1` on two states.
    pub fn two_point(a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(invalid("a", format!("{a} outside [0, 1]")));
        }
        Ok(Self {
            probs: vec![a, 1.0 - a],
        })
    }

    /// Wraps weights produced by exact propagation through validated kernel
    /// rows. Only non-negativity is enforced; mass drift is bounded by the
    /// row tolerance times the step count.
    pub(crate) fn from_propagation(mut probs: Vec<f64>) -> Self {
        for p in &mut probs {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        Self { probs }
    }

    /// Like [`Self::from_propagation`], then divided by the total mass.
    /// Some kernels amplify a mass defect at every step (for a mixture toward
    /// the current law it grows by a factor `1 + λ`), so propagated laws are
    /// renormalized.
    pub(crate) fn normalized_from_propagation(probs: Vec<f64>) -> Self {
        let mut m = Self::from_propagation(probs);
        let s: f64 = m.probs.iter().sum();
        if s > 0.0 && s != 1.0 {
            m.probs.iter_mut().for_each(|p| *p /= s);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `ν(φ) = Σ_i φ_i ν_i`.
    pub fn integrate(&self, phi: &[f64]) -> Result<f64> {
        check_len(self.len(), phi.len())?;
        Ok(self.probs.iter().zip(phi).map(|(p, f)| p * f).sum())
    }

    /// Mixture `w·self + (1−w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        check_len(self.len(), other.len())?;
        if !(0.0..=1.0).contains(&w) {
            return Err(invalid("w", format!("{w} outside [0, 1]")));
        }
        Ok(Self {
            probs: self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
        })
    }
}

impl TryFrom<Vec<f64>> for DiscreteMeasure {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DiscreteMeasure> for Vec<f64> {
    fn from(m: DiscreteMeasure) -> Self {
        m.probs
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `Σ_i |μ_i − ν_i|`, in `[0, 2]`.
pub fn tv_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_len(mu.len(), nu.len())?;
    Ok(l1(&mu.probs, &nu.probs))
}

pub(crate) fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Weighted total variation `d_f(μ, ν) = sup_{|g| ≤ f} Σ g_i (μ_i − ν_i)`.
///
/// On a discrete space the supremum is attained at `g = f · sign(μ − ν)`,
/// giving `Σ f_i |μ_i − ν_i|`.
pub fn weighted_tv_distance(f: &[f64], mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_len(mu.len(), nu.len())?;
    check_len(mu.len(), f.len())?;
    validate_weight(f)?;
    Ok(weighted_l1(f, &mu.probs, &nu.probs))
}

pub(crate) fn validate_weight(f: &[f64]) -> Result<()> {
    if let Some((i, w)) = f.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
        return Err(invalid("f", format!("weight entry {i} is {w}")));
    }
    Ok(())
}

pub(crate) fn weighted_l1(f: &[f64], a: &[f64], b: &[f64]) -> f64 {
    f.iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * (x - y).abs())
        .sum()
}

/// The common part `η = μ ∧ ν` of two measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SubMeasure {
    pub weights: Vec<f64>,
}

impl SubMeasure {
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// `η_i = min(μ_i, ν_i)`; its mass is `1 − d_TV(μ, ν)/2`.
pub fn sub_measure_eta(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<SubMeasure> {
    check_len(mu.len(), nu.len())?;
    Ok(SubMeasure {
        weights: mu.probs.iter().zip(&nu.probs).map(|(a, b)| a.min(*b)).collect(),
    })
}

/// A random probability vector: uniform on the simplex most of the time,
/// with a share of sparse draws (one or two atoms) so that extremal pairs
/// are exercised too.
pub fn random_measure<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DiscreteMeasure {
    let mut w = vec![0.0; n];
    match rng.random_range(0..10u8) {
        0 => w[rng.random_range(0..n)] = 1.0,
        1 => {
            let t: f64 = rng.random();
            w[rng.random_range(0..n)] += t;
            w[rng.random_range(0..n)] += 1.0 - t;
        }
        _ => {
            for x in &mut w {
                *x = -(1.0 - rng.random::<f64>()).ln();
            }
        }
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    DiscreteMeasure::from_propagation(w)
}

/// `count` independent pairs from [`random_measure`], reproducible from `seed`.
pub fn random_measure_pairs(n: usize, count: usize, seed: u64) -> Vec<(DiscreteMeasure, DiscreteMeasure)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (random_measure(&mut rng, n), random_measure(&mut rng, n)))
        .collect()
}
