use serde::{Deserialize, Serialize};

use crate::measures::EmpiricalMeasure;

/// Measure-free drift `b₁: ℝ^d → ℝ^d`.
pub trait Drift: Send + Sync {
    /// Writes `b₁(x)` into `out`.
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

impl<F> Drift for F
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self(x, out)
    }
}

/// Law-dependent drift `b₂(x, μ)`. The statistic of `μ` it needs is
/// computed once per step by [`MeanFieldDrift::summarize`], so a step costs
/// `O(N)` rather than `O(N²)`.
pub trait MeanFieldDrift: Send + Sync {
    fn summarize(&self, ensemble: &EmpiricalMeasure) -> Vec<f64>;
    fn eval(&self, x: &[f64], summary: &[f64], out: &mut [f64]);

    fn eval_at(&self, x: &[f64], mu: &EmpiricalMeasure, out: &mut [f64]) {
        let s = self.summarize(mu);
        self.eval(x, &s, out)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Built-in measure-free drifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Confinement {
    /// `−r x / max(|x|, M)`: linear inside the ball, constant inward speed
    /// `r` outside it, so `⟨b₁(x), x⟩ = −r|x|` for `|x| ≥ M`.
    Radial { r: f64, m: f64 },
    /// `−rate · x`.
    Linear { rate: f64 },
    Zero,
}

impl Confinement {
    /// Global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Confinement::Radial { r, m } => r / m,
            Confinement::Linear { rate } => rate.abs(),
            Confinement::Zero => 0.0,
        }
    }
}

impl Drift for Confinement {
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let scale = match *self {
            Confinement::Radial { r, m } => -r / norm(x).max(m),
            Confinement::Linear { rate } => -rate,
            Confinement::Zero => 0.0,
        };
        for (o, v) in out.iter_mut().zip(x) {
            *o = scale * v;
        }
    }
}

/// Built-in law-dependent drifts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interaction {
    /// `D · tanh(|m − x|) (m − x)/|m − x|` with `m` the mean of the law;
    /// in one dimension this is `D · tanh(m − x)`. Bounded by `D`.
    TanhMean { d: f64 },
    None,
}

impl Interaction {
    /// Uniform bound on `|b₂|`.
    pub fn bound(&self) -> f64 {
        match *self {
            Interaction::TanhMean { d } => d,
            Interaction::None => 0.0,
        }
    }

    /// Lipschitz constant in `x` and in the mean of the law.
    pub fn lipschitz(&self) -> f64 {
        self.bound()
    }
}

impl MeanFieldDrift for Interaction {
    fn summarize(&self, ensemble: &EmpiricalMeasure) -> Vec<f64> {
        match self {
            Interaction::TanhMean { .. } => ensemble.mean(),
            Interaction::None => Vec::new(),
        }
    }

    fn eval(&self, x: &[f64], summary: &[f64], out: &mut [f64]) {
        match *self {
            Interaction::TanhMean { d } => {
                let dist = x.iter().zip(summary).map(|(a, m)| (m - a) * (m - a)).sum::<f64>().sqrt();
                if dist == 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    let s = d * dist.tanh() / dist;
                    for ((o, a), m) in out.iter_mut().zip(x).zip(summary) {
                        *o = s * (m - a);
                    }
                }
            }
            Interaction::None => out.iter_mut().for_each(|o| *o = 0.0),
        }
    }
}
