//! Mean-field particle approximation of the McKean–Vlasov equation
//! `dX = (b₁(X) + ε b₂(X, Law X)) dt + dW`, with Monte-Carlo diagnostics of
//! its ergodic behaviour.
//!
//! The law in the drift is replaced by the empirical measure of all `N`
//! particles at the previous step. Each particle draws its Gaussian
//! increments from its own ChaCha stream (`seed`, stream = particle index),
//! so a run does not depend on how particles are spread over threads, and
//! two runs with the same seed share their noise (common random numbers).

mod diagnostics;
mod drift;
mod weight;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::*;
pub use drift::{Confinement, Drift, Interaction, MeanFieldDrift};
pub use weight::{make_weight_function, WeightFunction};

use crate::error::{invalid, Error, Result};
use crate::measures::EmpiricalMeasure;

/// Tolerance on the runtime check `|b₂| ≤ D`.
pub const DRIFT_BOUND_TOL: f64 = 1e-9;
/// Smallest accepted ensemble.
pub const MIN_PARTICLES: usize = 100;
/// Stream offset for initial positions, keeping them apart from the
/// per-step noise streams.
const INIT_STREAM_BASE: u64 = 1 << 63;

/// Drift `b₁ + ε b₂` together with the constants the theory refers to.
#[derive(Clone)]
pub struct SMVESpec {
    pub dim: usize,
    pub b1: Arc<dyn Drift>,
    pub b2: Arc<dyn MeanFieldDrift>,
    pub epsilon: f64,
    /// Veretennikov–Khasminskii rate: `⟨b₁(x), x⟩ ≤ −r|x|` for `|x| ≥ M`.
    pub r: f64,
    pub m: f64,
    /// Bound on `|b₂|`.
    pub d_bound: f64,
    /// Lipschitz constant of the drift.
    pub lipschitz: f64,
}

impl std::fmt::Debug for SMVESpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SMVESpec")
            .field("dim", &self.dim)
            .field("epsilon", &self.epsilon)
            .field("r", &self.r)
            .field("m", &self.m)
            .field("d_bound", &self.d_bound)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl SMVESpec {
    /// Built-in coefficients: `L` is the sum of the Lipschitz constants of
    /// `b₁` and `b₂`.
    pub fn from_parts(dim: usize, b1: Confinement, b2: Interaction, epsilon: f64, r: f64, m: f64) -> Result<Self> {
        let spec = Self {
            dim,
            b1: Arc::new(b1),
            b2: Arc::new(b2),
            epsilon,
            r,
            m,
            d_bound: b2.bound(),
            lipschitz: b1.lipschitz() + b2.lipschitz(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `b₁ = −r x / max(|x|, M)` and `b₂ = D tanh(mean − x)`.
    pub fn vh_preset(dim: usize, r: f64, m: f64, d: f64, epsilon: f64) -> Result<Self> {
        Self::from_parts(dim, Confinement::Radial { r, m }, Interaction::TanhMean { d }, epsilon, r, m)
    }

    /// Ornstein–Uhlenbeck `b₁ = −x` with `r = M = 1` and `b₂ = D tanh(mean − x)`.
    pub fn ou_preset(dim: usize, d: f64, epsilon: f64) -> Result<Self> {
        Self::from_parts(dim, Confinement::Linear { rate: 1.0 }, Interaction::TanhMean { d }, epsilon, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(invalid("dim", format!("{} outside 1..=3", self.dim)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", format!("{} must be finite and non-negative", self.epsilon)));
        }
        for (name, v) in [("r", self.r), ("M", self.m), ("L", self.lipschitz)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be finite and non-negative")));
            }
        }
        if !(self.r > 0.0 && self.m > 0.0) {
            return Err(invalid("r", "r and M must be positive"));
        }
        if !(self.d_bound >= 0.0 && self.d_bound.is_finite()) {
            return Err(invalid("D", format!("{} must be finite and non-negative", self.d_bound)));
        }
        Ok(())
    }
}

/// Initial law of the particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    /// Finitely many atoms; `atoms` holds one point per row (length `k·d`).
    Atomic { atoms: Vec<f64>, weights: Vec<f64> },
    /// Isotropic Gaussian.
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitialLaw {
    pub fn dirac(point: Vec<f64>) -> Self {
        InitialLaw::Atomic {
            atoms: point,
            weights: vec![1.0],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InitialLaw::Atomic { atoms, weights } => {
                if weights.is_empty() || atoms.len() != weights.len() * dim {
                    return Err(invalid("initial", format!("need {} coordinates per atom", dim)));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(invalid("initial", "atom weights must be non-negative and sum to 1"));
                }
                if atoms.iter().any(|a| !a.is_finite()) {
                    return Err(invalid("initial", "atoms must be finite"));
                }
            }
            InitialLaw::Gaussian { mean, std } => {
                if mean.len() != dim || mean.iter().any(|m| !m.is_finite()) {
                    return Err(invalid("initial", format!("mean must have {dim} finite coordinates")));
                }
                if !(*std >= 0.0 && std.is_finite()) {
                    return Err(invalid("initial", "std must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    /// One draw. Atomic laws consume a single uniform (inverse CDF over the
    /// atoms in order), so two atomic laws sampled from the same stream are
    /// coupled monotonically.
    fn sample_into<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            InitialLaw::Atomic { atoms, weights } => {
                let u: f64 = rng.random();
                let d = out.len();
                let mut acc = 0.0;
                let mut pick = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                out.copy_from_slice(&atoms[pick * d..(pick + 1) * d]);
            }
            InitialLaw::Gaussian { mean, std } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = m + std * z;
                }
            }
        }
    }

    /// `n` draws; draw `i` uses its own stream so it does not depend on `n`.
    pub fn sample(&self, dim: usize, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
        self.validate(dim)?;
        let mut points = vec![0.0; n * dim];
        points.par_chunks_mut(dim).enumerate().for_each(|(i, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(INIT_STREAM_BASE | i as u64);
            self.sample_into(&mut rng, out);
        });
        EmpiricalMeasure::new(dim, points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_particles: usize,
    /// Euler step.
    pub h: f64,
    pub t_end: f64,
    /// Time between stored snapshots; rounded to a whole number of steps.
    pub snapshot_every: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < MIN_PARTICLES {
            return Err(invalid("n_particles", format!("{} < {MIN_PARTICLES}", self.n_particles)));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(invalid("h", format!("{} must be positive", self.h)));
        }
        if !(self.t_end >= self.h && self.t_end.is_finite()) {
            return Err(invalid("t_end", format!("{} must be at least h = {}", self.t_end, self.h)));
        }
        if !(self.snapshot_every >= self.h && self.snapshot_every.is_finite()) {
            return Err(invalid("snapshot_every", format!("{} must be at least h", self.snapshot_every)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.h).round() as usize
    }

    pub fn steps_per_snapshot(&self) -> usize {
        ((self.snapshot_every / self.h).round() as usize).max(1)
    }
}

/// Particle positions at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: EmpiricalMeasure,
    pub time: f64,
    pub step_index: usize,
    pub h: f64,
    pub seed: u64,
    /// First noise stream used (particle `i` uses `stream_offset + i`).
    pub stream_offset: u64,
}

/// Snapshots of one run, in time order. Snapshot times are `k·h` with `k`
/// a multiple of the snapshot stride, plus the final step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub snapshots: Vec<ParticleEnsemble>,
}

impl SimulationRun {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> &ParticleEnsemble {
        self.snapshots.last().expect("a run stores at least its initial state")
    }

    /// Snapshot whose time is within half a step of `t`.
    pub fn at(&self, t: f64) -> Option<&ParticleEnsemble> {
        self.snapshots.iter().find(|s| (s.time - t).abs() <= 0.5 * s.h)
    }
}

/// Euler–Maruyama for the particle system started from `initial`:
/// `X ← X + (b₁(X) + ε b₂(X, μ̂)) h + √h ξ` with `μ̂` the empirical law of
/// all particles before the step.
pub fn simulate(spec: &SMVESpec, initial: &EmpiricalMeasure, cfg: &SimulationConfig) -> Result<SimulationRun> {
    spec.validate()?;
    cfg.validate()?;
    if initial.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            actual: initial.dim(),
        });
    }
    if initial.len() != cfg.n_particles {
        return Err(invalid(
            "initial",
            format!("{} particles supplied, config asks for {}", initial.len(), cfg.n_particles),
        ));
    }
    let d = spec.dim;
    let n = cfg.n_particles;
    let h = cfg.h;
    let sqrt_h = h.sqrt();
    let steps = cfg.steps();
    let stride = cfg.steps_per_snapshot();
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let snapshot = |positions: &EmpiricalMeasure, k: usize| ParticleEnsemble {
        positions: positions.clone(),
        time: k as f64 * h,
        step_index: k,
        h,
        seed: cfg.seed,
        stream_offset: 0,
    };
    let mut current = initial.clone();
    let mut snapshots = vec![snapshot(&current, 0)];
    let interacting = spec.epsilon > 0.0;
    let bound = spec.d_bound + DRIFT_BOUND_TOL;
    for k in 0..steps {
        let summary = if interacting { spec.b2.summarize(&current) } else { Vec::new() };
        let mut next = current.raw().to_vec();
        next.par_chunks_mut(d)
            .zip(rngs.par_iter_mut())
            .try_for_each(|(x, rng)| -> Result<()> {
                let mut a = [0.0f64; 3];
                let mut c = [0.0f64; 3];
                spec.b1.eval(x, &mut a[..d]);
                if interacting {
                    spec.b2.eval(x, &summary, &mut c[..d]);
                    let size = c[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !(size <= bound) {
                        return Err(Error::Precondition(format!(
                            "|b2| = {size} exceeds D = {} at step {k}",
                            spec.d_bound
                        )));
                    }
                }
                for j in 0..d {
                    let xi: f64 = rng.sample(StandardNormal);
                    x[j] += (a[j] + spec.epsilon * c[j]) * h + sqrt_h * xi;
                    if !x[j].is_finite() {
                        return Err(Error::BlowUp {
                            step: k,
                            reason: "non-finite particle position".to_string(),
                        });
                    }
                }
                Ok(())
            })?;
        current = EmpiricalMeasure::new(d, next).map_err(|e| Error::BlowUp {
            step: k,
            reason: e.to_string(),
        })?;
        if (k + 1) % stride == 0 || k + 1 == steps {
            snapshots.push(snapshot(&current, k + 1));
        }
    }
    Ok(SimulationRun { snapshots })
}

/// Samples the initial law with `cfg.seed` and runs [`simulate`].
pub fn simulate_from(spec: &SMVESpec, initial: &InitialLaw, cfg: &SimulationConfig) -> Result<SimulationRun> {
    let x0 = initial.sample(spec.dim, cfg.n_particles, cfg.seed)?;
    simulate(spec, &x0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, h: f64, t: f64, every: f64, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n_particles: n,
            h,
            t_end: t,
            snapshot_every: every,
            seed,
        }
    }

    fn variance(e: &EmpiricalMeasure) -> f64 {
        let m = e.mean()[0];
        e.raw().iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (e.len() - 1) as f64
    }

    #[test]
    fn brownian_variance_grows_linearly() {
        let spec = SMVESpec::from_parts(1, Confinement::Zero, Interaction::None, 0.0, 1.0, 1.0).unwrap();
        let c = cfg(20_000, 0.01, 2.0, 1.0, 3);
        let run = simulate_from(&spec, &InitialLaw::dirac(vec![0.0]), &c).unwrap();
        for s in &run.snapshots[1..] {
            let v = variance(&s.positions);
            // sample variance has standard error t·√(2/(N−1))
            let se = s.time * (2.0 / (c.n_particles as f64 - 1.0)).sqrt();
            assert!((v - s.time).abs() < 3.0 * se, "t={} var={v}", s.time);
        }
    }

    #[test]
    fn runs_are_reproducible_across_thread_counts() {
        let spec = SMVESpec::vh_preset(2, 1.0, 1.0, 1.0, 0.05).unwrap();
        let c = cfg(500, 0.01, 0.5, 0.25, 9);
        let init = InitialLaw::Gaussian {
            mean: vec![1.0, -1.0],
            std: 1.0,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_from(&spec, &init, &c).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(1));
        assert_eq!(one, run(4));
        assert_eq!(one.times(), vec![0.0, 0.25, 0.5]);
    }

    #[test]
    fn perturbed_run_respects_drift_bound() {
        let spec = SMVESpec::vh_preset(1, 1.0, 1.0, 1.0, 0.05).unwrap();
        let init = InitialLaw::Gaussian { mean: vec![5.0], std: 2.0 };
        assert!(simulate_from(&spec, &init, &cfg(1000, 0.01, 1.0, 0.5, 1)).is_ok());
    }

    #[test]
    fn oversized_interaction_is_caught() {
        struct Liar;
        impl MeanFieldDrift for Liar {
            fn summarize(&self, _: &EmpiricalMeasure) -> Vec<f64> {
                Vec::new()
            }
            fn eval(&self, _: &[f64], _: &[f64], out: &mut [f64]) {
                out[0] = 2.0;
            }
        }
        let mut spec = SMVESpec::ou_preset(1, 1.0, 0.1).unwrap();
        spec.b2 = Arc::new(Liar);
        let err = simulate_from(&spec, &InitialLaw::dirac(vec![0.0]), &cfg(100, 0.1, 1.0, 1.0, 0)).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err:?}");
    }

    #[test]
    fn blow_up_reports_step() {
        let mut spec = SMVESpec::ou_preset(1, 1.0, 0.0).unwrap();
        spec.b1 = Arc::new(|x: &[f64], out: &mut [f64]| out[0] = 1e300 * x[0].abs().max(1.0));
        let err = simulate_from(&spec, &InitialLaw::dirac(vec![1e10]), &cfg(100, 0.5, 5.0, 1.0, 0)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { step: 0, .. }), "{err:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let spec = SMVESpec::ou_preset(1, 1.0, 0.0).unwrap();
        let init = InitialLaw::dirac(vec![0.0]);
        assert!(simulate_from(&spec, &init, &cfg(50, 0.01, 1.0, 1.0, 0)).is_err());
        assert!(simulate_from(&spec, &init, &cfg(100, 0.0, 1.0, 1.0, 0)).is_err());
        assert!(simulate_from(&spec, &init, &cfg(100, 0.1, 0.01, 1.0, 0)).is_err());
        assert!(SMVESpec::ou_preset(4, 1.0, 0.0).is_err());
    }

    #[test]
    fn atomic_laws_share_uniforms() {
        let a = InitialLaw::dirac(vec![0.0]).sample(1, 1000, 5).unwrap();
        let mix = InitialLaw::Atomic {
            atoms: vec![0.0, 1.0],
            weights: vec![0.9, 0.1],
        };
        let b = mix.sample(1, 1000, 5).unwrap();
        let moved = b.raw().iter().filter(|x| **x == 1.0).count();
        assert!((60..140).contains(&moved), "{moved}");
        assert!(a.raw().iter().all(|x| *x == 0.0));
        assert_eq!(b, mix.sample(1, 1000, 5).unwrap());
    }
}
