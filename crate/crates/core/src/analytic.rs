//! Closed-form KdV solutions and initial data for the benchmark problems.
//!
//! All solutions satisfy `u_t + u u_x + u_xxx = 0` on the whole line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ONE_SOLITON_AMPLITUDE: f64 = 9.0;
pub const ONE_SOLITON_SPEED: f64 = 3.0;
/// Period of the rough initial profile.
pub const ROUGH_PERIOD: f64 = 10.0;

/// `sech²(z)` without overflow for large `|z|`.
fn sech2(z: f64) -> f64 {
    let e = (-2.0 * z.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Single soliton of amplitude 9 travelling right with speed 3:
/// `9 sech²(√3/2 (x − 3t))`.
pub fn eval_one_soliton(x: f64, t: f64) -> f64 {
    let k = 3.0_f64.sqrt() / 2.0;
    ONE_SOLITON_AMPLITUDE * sech2(k * (x - ONE_SOLITON_SPEED * t))
}

/// Two-soliton solution with asymptotic amplitudes `6a`, `6b` and speeds
/// `2a`, `2b`, colliding at `t = 0`.
///
/// Evaluated in the form
///
/// ```text
/// 6(b−a) (b sech²z + a sech²y tanh²z) / (√b − √a tanh y tanh z)²
/// z = √(b/2)(x − 2bt),  y = √(a/2)(x − 2at)
/// ```
///
/// obtained by multiplying the csch/coth form through by `tanh² z`. The
/// denominator is bounded below by `(√b − √a)²`, so the expression is
/// finite everywhere.
pub fn eval_two_soliton(x: f64, t: f64, a: f64, b: f64) -> Result<f64> {
    check_two_soliton_params(a, b)?;
    Ok(two_soliton_unchecked(x, t, a, b))
}

fn check_two_soliton_params(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > a && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "two-soliton needs 0 < a < b, got a={a}, b={b}"
        )))
    }
}

fn two_soliton_unchecked(x: f64, t: f64, a: f64, b: f64) -> f64 {
    let z = (b / 2.0).sqrt() * (x - 2.0 * b * t);
    let y = (a / 2.0).sqrt() * (x - 2.0 * a * t);
    let (tz, ty) = (z.tanh(), y.tanh());
    let num = b * sech2(z) + a * sech2(y) * tz * tz;
    let den = b.sqrt() - a.sqrt() * ty * tz;
    6.0 * (b - a) * num / (den * den)
}

/// `x^{-1/3}` on `(0, 1)`, zero elsewhere on `[-5, 5)`, extended with
/// period 10.
pub fn eval_rough_l2(x: f64) -> f64 {
    let y = (x + 0.5 * ROUGH_PERIOD).rem_euclid(ROUGH_PERIOD) - 0.5 * ROUGH_PERIOD;
    if y > 0.0 && y < 1.0 {
        y.cbrt().recip()
    } else {
        0.0
    }
}

/// Benchmark problem selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactSolution {
    OneSoliton,
    TwoSoliton { a: f64, b: f64 },
    /// Initial data only; no closed form for `t > 0`.
    RoughL2,
}

impl ExactSolution {
    pub fn two_soliton(a: f64, b: f64) -> Result<Self> {
        check_two_soliton_params(a, b)?;
        Ok(Self::TwoSoliton { a, b })
    }

    /// Closed-form value at `(x, t)`, if one exists.
    pub fn eval(&self, x: f64, t: f64) -> Option<f64> {
        match *self {
            Self::OneSoliton => Some(eval_one_soliton(x, t)),
            Self::TwoSoliton { a, b } => Some(two_soliton_unchecked(x, t, a, b)),
            Self::RoughL2 => None,
        }
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self, Self::RoughL2)
    }

    /// Initial profile, where `t0` is the solution time it corresponds to.
    pub fn initial(&self, x: f64, t0: f64) -> f64 {
        self.eval(x, t0).unwrap_or_else(|| eval_rough_l2(x))
    }
}

/// Step sizes of [`kdv_residual`] in `t`/`x` (first derivatives) and `x`
/// (third derivative).
pub const RESIDUAL_STEP_FIRST: f64 = 1e-3;
pub const RESIDUAL_STEP_THIRD: f64 = 1e-2;

/// `u_t + u u_x + u_xxx` at `(x, t)` by fourth-order central differences.
pub fn kdv_residual<F: Fn(f64, f64) -> f64>(u: F, x: f64, t: f64) -> f64 {
    let h = RESIDUAL_STEP_FIRST;
    let d1 = |f: &dyn Fn(f64) -> f64, y: f64| {
        (f(y - 2.0 * h) - 8.0 * f(y - h) + 8.0 * f(y + h) - f(y + 2.0 * h)) / (12.0 * h)
    };
    let ut = d1(&|s| u(x, s), t);
    let ux = d1(&|y| u(y, t), x);
    let k = RESIDUAL_STEP_THIRD;
    let f = |j: f64| u(x + j * k, t);
    let uxxx = (-f(3.0) + 8.0 * f(2.0) - 13.0 * f(1.0) + 13.0 * f(-1.0) - 8.0 * f(-2.0) + f(-3.0))
        / (8.0 * k * k * k);
    ut + u(x, t) * ux + uxxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_soliton_peak_and_tails() {
        for t in [-1.0, 0.0, 0.7, 2.0] {
            assert_eq!(eval_one_soliton(3.0 * t, t), 9.0);
        }
        assert!(eval_one_soliton(50.0, 0.0) < 1e-15);
        assert!(eval_one_soliton(-50.0, 0.0) < 1e-15);
        assert_eq!(eval_one_soliton(1e6, 0.0), 0.0);
    }

    #[test]
    fn two_soliton_params() {
        assert!(eval_two_soliton(0.0, 0.0, 1.0, 0.5).is_err());
        assert!(eval_two_soliton(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(eval_two_soliton(0.0, 0.0, 0.5, 0.5).is_err());
        assert!(ExactSolution::two_soliton(-1.0, 1.0).is_err());
    }

    #[test]
    fn two_soliton_on_singular_ray() {
        // z = 0 is where the csch/coth form is 0·∞; the value is 6(b−a)·b/b.
        let v = eval_two_soliton(0.0, 0.0, 0.5, 1.0).unwrap();
        assert!((v - 3.0).abs() < 1e-14);
        let v = eval_two_soliton(20.0, 10.0, 0.5, 1.0).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }

    #[test]
    fn two_soliton_far_field_matches_single_solitons() {
        // Far from the collision the profile is close to two sech² bumps of
        // heights 3 and 6; check the peak heights.
        let t = -10.0;
        let mut best = (f64::MIN, f64::MIN);
        let mut x = -60.0;
        while x <= 20.0 {
            let v = eval_two_soliton(x, t, 0.5, 1.0).unwrap();
            if x < -15.0 {
                best.0 = best.0.max(v);
            } else {
                best.1 = best.1.max(v);
            }
            x += 1e-3;
        }
        assert!((best.0 - 6.0).abs() < 1e-3, "{best:?}");
        assert!((best.1 - 3.0).abs() < 1e-3, "{best:?}");
    }

    #[test]
    fn rough_data_values() {
        assert!((eval_rough_l2(0.125) - 2.0).abs() < 1e-15);
        assert_eq!(eval_rough_l2(-1.0), 0.0);
        assert_eq!(eval_rough_l2(0.0), 0.0);
        assert!((eval_rough_l2(10.125) - 2.0).abs() < 1e-12);
        assert_eq!(eval_rough_l2(1.5), 0.0);
        assert_eq!(eval_rough_l2(-5.0), 0.0);
    }

    #[test]
    fn residual_detects_non_solutions() {
        let r = kdv_residual(|x, t| 9.0 * (1.0 - (1.5_f64.sqrt() * (x - 3.0 * t)).tanh().powi(2)), 0.3, 0.0);
        assert!(r.abs() > 1.0, "{r}");
        assert!(kdv_residual(eval_one_soliton, 0.3, 0.0).abs() < 1e-5);
        assert!(kdv_residual(|_, _| 2.0, 1.0, 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_solution_dispatch() {
        let s = ExactSolution::OneSoliton;
        assert_eq!(s.eval(0.0, 0.0), Some(9.0));
        assert!(ExactSolution::RoughL2.eval(0.5, 0.0).is_none());
        assert!((ExactSolution::RoughL2.initial(0.125, 0.0) - 2.0).abs() < 1e-15);
        assert!(!ExactSolution::RoughL2.has_closed_form());
    }
}
