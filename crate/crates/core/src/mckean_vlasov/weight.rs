use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Lyapunov weight `V(x) = e^{κ|x|}` for `|x| ≥ M`, with `κ = min(r/4, 1)`.
///
/// Inside the ball `V` depends on `s = |x|` only: it is constant for
/// `s ≤ a = max(M − 1, 0)` and a quintic on `[a, M]` matching value, first
/// and second derivative at both ends, so `V` is `C²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub kappa: f64,
    pub m: f64,
    /// Inner end of the blend.
    pub blend_start: f64,
    /// Quintic coefficients in `u = (s − a)/(M − a)`.
    coeffs: [f64; 6],
}

pub fn make_weight_function(r: f64, m: f64) -> Result<WeightFunction> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("{r} must be positive")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(invalid("M", format!("{m} must be positive")));
    }
    let kappa = (r / 4.0).min(1.0);
    let a = (m - 1.0).max(0.0);
    let w = m - a;
    let y0 = (kappa * a).exp();
    let y1 = (kappa * m).exp();
    let big_y = y1 - y0;
    let d1 = w * kappa * y1;
    let s1 = w * w * kappa * kappa * y1;
    let coeffs = [
        y0,
        0.0,
        0.0,
        10.0 * big_y - 4.0 * d1 + 0.5 * s1,
        -15.0 * big_y + 7.0 * d1 - s1,
        6.0 * big_y - 3.0 * d1 + 0.5 * s1,
    ];
    Ok(WeightFunction {
        kappa,
        m,
        blend_start: a,
        coeffs,
    })
}

impl WeightFunction {
    /// `(V, dV/ds, d²V/ds²)` as functions of the radius `s = |x|`.
    pub fn radial(&self, s: f64) -> (f64, f64, f64) {
        let s = s.abs();
        if s >= self.m {
            let v = (self.kappa * s).exp();
            return (v, self.kappa * v, self.kappa * self.kappa * v);
        }
        if s <= self.blend_start {
            return (self.coeffs[0], 0.0, 0.0);
        }
        let w = self.m - self.blend_start;
        let u = (s - self.blend_start) / w;
        let c = &self.coeffs;
        let v = c[0] + u * u * u * (c[3] + u * (c[4] + u * c[5]));
        let dv = u * u * (3.0 * c[3] + u * (4.0 * c[4] + 5.0 * u * c[5])) / w;
        let ddv = u * (6.0 * c[3] + u * (12.0 * c[4] + 20.0 * u * c[5])) / (w * w);
        (v, dv, ddv)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.radial(x.iter().map(|v| v * v).sum::<f64>().sqrt()).0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_outside_the_ball() {
        let v = make_weight_function(4.0, 1.0).unwrap();
        assert_eq!(v.kappa, 1.0);
        assert!((v.eval(&[2.0]) - 2f64.exp()).abs() < 1e-12);
        assert!((v.eval(&[-2.0]) - 2f64.exp()).abs() < 1e-12);
        assert_eq!(make_weight_function(8.0, 1.0).unwrap().kappa, 1.0);
        assert_eq!(make_weight_function(1.0, 1.0).unwrap().kappa, 0.25);
        assert!(make_weight_function(0.0, 1.0).is_err());
        assert!(make_weight_function(1.0, -1.0).is_err());
    }

    #[test]
    fn blend_is_c2_and_at_least_one() {
        for (r, m) in [(1.0, 1.0), (4.0, 1.0), (2.0, 3.0), (8.0, 0.5), (1.0, 10.0)] {
            let v = make_weight_function(r, m).unwrap();
            // continuity of value and derivatives across the outer boundary
            let (vi, di, si) = v.radial(m - 1e-12);
            let (vo, dout, so) = v.radial(m);
            assert!((vi - vo).abs() < 1e-9, "r={r} m={m}");
            assert!((di - dout).abs() < 1e-6 * dout.max(1.0));
            assert!((si - so).abs() < 1e-5 * so.max(1.0));
            // finite differences agree with the analytic derivatives everywhere
            let hstep = 1e-4;
            let mut s = 0.0;
            while s < m + 2.0 {
                let (v0, d0, dd0) = v.radial(s);
                assert!(v0 >= 1.0, "V({s}) = {v0}");
                if s > hstep {
                    let (vp, _, _) = v.radial(s + hstep);
                    let (vm, _, _) = v.radial(s - hstep);
                    let fd1 = (vp - vm) / (2.0 * hstep);
                    let fd2 = (vp - 2.0 * v0 + vm) / (hstep * hstep);
                    let scale = v0.max(1.0);
                    assert!((fd1 - d0).abs() < 1e-5 * scale, "r={r} m={m} s={s}: {fd1} vs {d0}");
                    assert!((fd2 - dd0).abs() < 1e-3 * scale, "r={r} m={m} s={s}: {fd2} vs {dd0}");
                }
                s += 0.0137;
            }
        }
    }

    #[test]
    fn multidimensional_argument_uses_the_norm() {
        let v = make_weight_function(2.0, 1.0).unwrap();
        assert!((v.eval(&[3.0, 4.0]) - (0.5f64 * 5.0).exp()).abs() < 1e-12);
    }
}
