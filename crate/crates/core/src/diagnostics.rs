//! Norms, the percentage error metric, convergence rates and the local
//! `H¹` quantity entering the discrete Kato functional.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{QuadratureRule, DEFAULT_ORDER, ERROR_NORM_ORDER};
use crate::spline::SplineFunction;
use crate::weight::WeightFunction;

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub m_nodes: usize,
    pub e_percent: f64,
    pub rate_vs_previous: Option<f64>,
    pub l2_exact: f64,
    pub l2_numeric: f64,
}

/// `‖u‖_{L²}` over the space's interval.
pub fn l2_norm(u: &SplineFunction) -> f64 {
    let rule = QuadratureRule::gauss_legendre(DEFAULT_ORDER);
    cell_sum(u, &rule, |_, v| v[0] * v[0]).sqrt()
}

/// `‖u‖_{2,φ} = (∫ u² φ)^{1/2}`.
pub fn weighted_norm(u: &SplineFunction, weight: &WeightFunction) -> f64 {
    let rule = QuadratureRule::gauss_legendre(DEFAULT_ORDER);
    cell_sum(u, &rule, |x, v| v[0] * v[0] * weight.value(x)).sqrt()
}

fn cell_sum<F>(u: &SplineFunction, rule: &QuadratureRule, mut f: F) -> f64
where
    F: FnMut(f64, [f64; 3]) -> f64,
{
    let space = u.space();
    let mut total = 0.0;
    for cell in 0..space.num_cells() {
        let local: f64 = rule
            .iter()
            .map(|(s, w)| w * f(space.cell_point(cell, s), u.local_values(cell, s)))
            .sum();
        total += local * space.dx();
    }
    total
}

/// `(‖u − u_h‖_{L²}, ‖u‖_{L²})` with an order-10 rule on `u_h`'s cells.
pub fn error_norms<F: Fn(f64) -> f64>(u_exact: F, u_h: &SplineFunction) -> (f64, f64) {
    let rule = QuadratureRule::gauss_legendre(ERROR_NORM_ORDER);
    let diff = cell_sum(u_h, &rule, |x, v| (u_exact(x) - v[0]).powi(2)).sqrt();
    let exact = cell_sum(u_h, &rule, |x, _| u_exact(x).powi(2)).sqrt();
    (diff, exact)
}

/// `E = 100 ‖u − u_h‖_{L²} / ‖u‖_{L²}`.
pub fn error_percent<F: Fn(f64) -> f64>(u_exact: F, u_h: &SplineFunction) -> Result<f64> {
    let (diff, exact) = error_norms(u_exact, u_h);
    if !(exact > 0.0) {
        return Err(Error::UndefinedMetric(
            "exact solution has zero L2 norm".into(),
        ));
    }
    Ok(100.0 * diff / exact)
}

/// `‖u − v‖_{L²}` for splines on possibly different meshes of the same
/// interval, by point evaluation at the quadrature points of the finer one.
pub fn l2_difference(u: &SplineFunction, v: &SplineFunction) -> f64 {
    if u.space() == v.space() {
        let d: Vec<f64> = u.coeffs().iter().zip(v.coeffs()).map(|(a, b)| a - b).collect();
        return l2_norm(&SplineFunction::new(*u.space(), d).expect("same space"));
    }
    let (fine, coarse) = if u.space().num_cells() >= v.space().num_cells() {
        (u, v)
    } else {
        (v, u)
    };
    let rule = QuadratureRule::gauss_legendre(ERROR_NORM_ORDER);
    cell_sum(fine, &rule, |x, f| (f[0] - coarse.value(x)).powi(2)).sqrt()
}

/// `log_factor(E_coarse / E_fine)`.
pub fn convergence_rate(e_coarse: f64, e_fine: f64) -> Result<f64> {
    convergence_rate_with(e_coarse, e_fine, 2.0)
}

pub fn convergence_rate_with(e_coarse: f64, e_fine: f64, refinement: f64) -> Result<f64> {
    if !(e_coarse > 0.0 && e_fine > 0.0) || !(refinement > 1.0) {
        return Err(Error::UndefinedMetric(format!(
            "rate needs positive errors and refinement > 1 (got {e_coarse}, {e_fine}, {refinement})"
        )));
    }
    Ok((e_coarse / e_fine).ln() / refinement.ln())
}

/// Fills `rate_vs_previous` along a table ordered coarse to fine.
pub fn chain_rates(reports: &mut [ErrorReport]) {
    for i in 0..reports.len() {
        reports[i].rate_vs_previous = if i == 0 {
            None
        } else {
            let refinement = reports[i].m_nodes as f64 / reports[i - 1].m_nodes as f64;
            convergence_rate_with(reports[i - 1].e_percent, reports[i].e_percent, refinement).ok()
        };
    }
}

/// `∫_{-R}^{R} u_x² dx`, with the partial end cells integrated on their
/// covered sub-interval.
pub fn h1_local_seminorm_sq(u: &SplineFunction, r_window: f64) -> Result<f64> {
    let space = u.space();
    if !(r_window >= 0.0) || -r_window < space.x_left() || r_window > space.x_right() {
        return Err(Error::OutOfRange {
            what: "R_window",
            value: r_window,
            lo: 0.0,
            hi: space.x_right().min(-space.x_left()),
        });
    }
    let rule = QuadratureRule::gauss_legendre(DEFAULT_ORDER);
    let t_lo = (-r_window - space.x_left()) / space.dx();
    let t_hi = (r_window - space.x_left()) / space.dx();
    let first = (t_lo.floor() as usize).min(space.num_cells() - 1);
    let last = ((t_hi.ceil() as usize).max(1) - 1).min(space.num_cells() - 1);
    let mut total = 0.0;
    for cell in first..=last {
        let s0 = (t_lo - cell as f64).clamp(0.0, 1.0);
        let s1 = (t_hi - cell as f64).clamp(0.0, 1.0);
        if s1 <= s0 {
            continue;
        }
        let h = s1 - s0;
        let local: f64 = rule
            .iter()
            .map(|(q, w)| {
                let ux = u.local_values(cell, s0 + h * q)[1];
                w * ux * ux
            })
            .sum();
        total += local * h * space.dx();
    }
    Ok(total)
}

/// `‖u_x‖_{L²([-R, R])}`.
pub fn h1_local_seminorm(u: &SplineFunction, r_window: f64) -> Result<f64> {
    h1_local_seminorm_sq(u, r_window).map(f64::sqrt)
}
