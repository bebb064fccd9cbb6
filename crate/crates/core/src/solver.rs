//! Implicit Euler time stepping with a fixed-point inner iteration.
//!
//! Each step solves, for `ℓ = 0, 1, …` starting from `w⁰ = uⁿ`,
//!
//! ```text
//! (A + Δt D) w^{ℓ+1} = A uⁿ − Δt N(w^ℓ)
//! ```
//!
//! and stops once `‖w^{ℓ+1} − w^ℓ‖_{L²} ≤ Δx²`. The matrix does not depend
//! on the iterate, so it is factored once per time-step size.

use serde::{Deserialize, Serialize};

use crate::assembly::SchemeOperators;
use crate::diagnostics::h1_local_seminorm_sq;
use crate::error::{Error, Result};
use crate::linalg::PeriodicLu;
use crate::spline::SplineFunction;

pub use crate::linalg::solve_banded;

pub const DEFAULT_MAX_ITERATIONS: usize = 50;
pub const DEFAULT_CONTRACTION_TARGET: f64 = 0.5;
/// Safety factor applied to the CFL bound when choosing `Δt`.
pub const CFL_SAFETY: f64 = 0.9;

/// Increments above this are treated as divergence of the inner iteration.
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub max_iterations: usize,
    /// Target contraction `L ∈ (0, 1)` of the inner iteration.
    pub contraction_target: f64,
    /// Turn CFL warnings into step failures.
    pub strict_cfl: bool,
    /// Iterate at least this often even if the first increment already
    /// meets the tolerance, so that a contraction factor is observed.
    #[serde(default = "default_min_iterations")]
    pub min_iterations: usize,
    /// Drop the convection term; only for testing the linear path.
    #[serde(default)]
    pub freeze_nonlinear: bool,
}

fn default_min_iterations() -> usize {
    1
}

impl StepConfig {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            contraction_target: DEFAULT_CONTRACTION_TARGET,
            strict_cfl: false,
            min_iterations: 1,
            freeze_nonlinear: false,
        }
    }

    /// `K = (7 − L) / (1 − L)`.
    pub fn growth_constant(&self) -> f64 {
        growth_constant(self.contraction_target)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.contraction_target > 0.0 && self.contraction_target < 1.0) {
            return Err(Error::Parameter(format!(
                "contraction target L must lie in (0, 1), got {}",
                self.contraction_target
            )));
        }
        if self.max_iterations == 0 || self.min_iterations > self.max_iterations {
            return Err(Error::Parameter(format!(
                "need 1 <= max_iterations and min_iterations <= max_iterations, got {} and {}",
                self.max_iterations, self.min_iterations
            )));
        }
        Ok(())
    }
}

pub fn growth_constant(l: f64) -> f64 {
    (7.0 - l) / (1.0 - l)
}

/// State and bookkeeping after one step (or the initial state, with
/// `iterations_used == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStepRecord {
    pub step: usize,
    pub t: f64,
    /// Step size that produced this state; zero for the initial record.
    pub dt: f64,
    pub state: SplineFunction,
    pub iterations_used: usize,
    /// `‖w^{ℓ+1} − w^ℓ‖ / ‖w^ℓ − w^{ℓ−1}‖` in `L²`, at the last iteration.
    pub last_contraction: Option<f64>,
    /// Same ratio in the weighted norm.
    pub last_contraction_weighted: Option<f64>,
    /// Largest weighted-norm ratio seen during the step.
    pub max_contraction_weighted: Option<f64>,
    /// Final increment `‖w^{ℓ+1} − w^ℓ‖_{L²}`.
    pub final_increment: f64,
    /// CFL bound divided by `λ = Δt/Δx^{3/2}`, evaluated on the state the
    /// step started from.
    pub cfl_margin: f64,
    pub weighted_norm: f64,
    pub l2_norm: f64,
    /// `‖u_x‖²_{L²([-R, R])}`.
    pub h1_local_sq: f64,
}

impl TimeStepRecord {
    pub fn coeffs(&self) -> &[f64] {
        self.state.coeffs()
    }

    /// Contribution `Δt ‖u_x‖²_{L²([-R,R])}` to the Kato functional.
    pub fn kato_increment(&self) -> f64 {
        self.dt * self.h1_local_sq
    }
}

/// Kato functional `Δt Σ ‖u_x^{n+1}‖²_{L²([-R,R])}` over a history.
pub fn kato_functional(history: &[TimeStepRecord]) -> f64 {
    history.iter().map(TimeStepRecord::kato_increment).sum()
}

/// `L / (√C_R · 2√2 · K · ‖uⁿ‖_{2,φ})`.
pub fn cfl_bound(c_r: f64, weighted_norm: f64, l: f64) -> f64 {
    if weighted_norm == 0.0 {
        return f64::INFINITY;
    }
    l / (c_r.sqrt() * 2.0 * 2.0_f64.sqrt() * growth_constant(l) * weighted_norm)
}

/// `cfl_bound / λ`, with `λ = Δt / Δx^{3/2}`; `+∞` for the zero state.
pub fn cfl_margin(c_r: f64, weighted_norm: f64, l: f64, dt: f64, dx: f64) -> f64 {
    let bound = cfl_bound(c_r, weighted_norm, l);
    if bound.is_infinite() {
        return f64::INFINITY;
    }
    bound * dx.powf(1.5) / dt
}

/// CFL margin of `u_n` for a step of `cfg.dt` with the operators' weight.
pub fn cfl_check(ops: &SchemeOperators, u_n: &SplineFunction, cfg: &StepConfig) -> f64 {
    let c_r = ops.weight().compute_cr(ops.space().num_cells()).c_r;
    cfl_margin(
        c_r,
        ops.weighted_norm(u_n.coeffs()),
        cfg.contraction_target,
        cfg.dt,
        ops.space().dx(),
    )
}

/// How `Δt` is tied to `Δx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DtMode {
    /// `Δt = c_cfl Δx^{3/2}` with `c_cfl` from the CFL bound at `t = 0`
    /// times a safety factor.
    CflThreeHalves { safety: f64 },
    /// `Δt = c Δx²`.
    DxSquared { c: f64 },
    /// `Δt = c Δx`; first order in `Δx` overall.
    DxLinear { c: f64 },
}

impl DtMode {
    /// Returns `(Δt, c)` where `c` is the constant in front of the `Δx`
    /// power.
    pub fn choose(&self, ops: &SchemeOperators, u0: &SplineFunction, l: f64) -> (f64, f64) {
        let dx = ops.space().dx();
        match *self {
            DtMode::CflThreeHalves { safety } => {
                let c_r = ops.weight().compute_cr(ops.space().num_cells()).c_r;
                let bound = cfl_bound(c_r, ops.weighted_norm(u0.coeffs()), l);
                let c = if bound.is_finite() { safety * bound } else { 1.0 };
                (c * dx.powf(1.5), c)
            }
            DtMode::DxSquared { c } => (c * dx * dx, c),
            DtMode::DxLinear { c } => (c * dx, c),
        }
    }
}

/// Reusable single-step machinery for one operator set.
#[derive(Debug)]
pub struct Stepper<'a> {
    ops: &'a SchemeOperators,
    cfg: StepConfig,
    c_r: f64,
    lu: PeriodicLu,
    warned: bool,
    cfl_violations: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a SchemeOperators, cfg: StepConfig) -> Result<Self> {
        cfg.validate()?;
        let lu = ops.weighted_mass().add_scaled(cfg.dt, ops.dispersion()).factor()?;
        Ok(Self {
            ops,
            cfg,
            c_r: ops.weight().compute_cr(ops.space().num_cells()).c_r,
            lu,
            warned: false,
            cfl_violations: 0,
        })
    }

    pub fn config(&self) -> &StepConfig {
        &self.cfg
    }

    pub fn c_r(&self) -> f64 {
        self.c_r
    }

    /// Number of steps so far whose CFL margin was below one.
    pub fn cfl_violations(&self) -> usize {
        self.cfl_violations
    }

    /// Refactors `A + Δt D` if `dt` differs from the current step size.
    pub fn set_dt(&mut self, dt: f64) -> Result<()> {
        if dt != self.cfg.dt {
            let cfg = StepConfig { dt, ..self.cfg };
            cfg.validate()?;
            self.lu = self.ops.weighted_mass().add_scaled(dt, self.ops.dispersion()).factor()?;
            self.cfg = cfg;
        }
        Ok(())
    }

    /// One implicit step from `u_n` at time `t_n`. The returned record has
    /// `h1_local_sq` unset (zero); [`advance`] fills it.
    pub fn step(&mut self, u_n: &SplineFunction, t_n: f64) -> Result<TimeStepRecord> {
        let ops = self.ops;
        let dt = self.cfg.dt;
        let dx = ops.space().dx();
        let tol = dx * dx;
        let norm_n = ops.weighted_norm(u_n.coeffs());
        let margin = cfl_margin(self.c_r, norm_n, self.cfg.contraction_target, dt, dx);
        if margin < 1.0 {
            self.cfl_violations += 1;
            if self.cfg.strict_cfl {
                return Err(Error::CflViolation { margin, time: t_n });
            }
            if !self.warned {
                log::warn!(
                    "CFL margin {margin:.3e} < 1 at t = {t_n:.4} (M = {}); convergence of the inner iteration is not guaranteed",
                    ops.space().num_nodes()
                );
                self.warned = true;
            }
        }

        let base = ops.weighted_mass().matvec(u_n.coeffs());
        let mut w = u_n.coeffs().to_vec();
        let mut prev: Option<(f64, f64)> = None;
        let mut contraction = None;
        let mut contraction_w = None;
        let mut max_contraction_w: Option<f64> = None;
        let mut delta = vec![0.0; w.len()];
        for iteration in 1..=self.cfg.max_iterations {
            let mut rhs = base.clone();
            if !self.cfg.freeze_nonlinear {
                let n = ops.nonlinear(&w);
                for (r, v) in rhs.iter_mut().zip(&n) {
                    *r -= dt * v;
                }
            }
            self.lu.solve_in_place(&mut rhs);
            for ((d, new), old) in delta.iter_mut().zip(&rhs).zip(&w) {
                *d = new - old;
            }
            let inc = ops.l2_norm(&delta);
            let inc_w = ops.weighted_norm(&delta);
            if let Some((p, pw)) = prev {
                contraction = (p > 0.0).then(|| inc / p);
                contraction_w = (pw > 0.0).then(|| inc_w / pw);
                if let Some(c) = contraction_w {
                    max_contraction_w = Some(max_contraction_w.map_or(c, |m: f64| m.max(c)));
                }
            }
            w = rhs;
            if inc <= tol && iteration >= self.cfg.min_iterations {
                let state = SplineFunction::new(*ops.space(), w)?;
                let weighted_norm = ops.weighted_norm(state.coeffs());
                let k = self.cfg.growth_constant();
                if margin >= 1.0 && weighted_norm > k * norm_n * (1.0 + 1e-12) {
                    return Err(Error::GrowthBound {
                        before: norm_n,
                        after: weighted_norm,
                        k,
                    });
                }
                return Ok(TimeStepRecord {
                    step: 0,
                    t: t_n + dt,
                    dt,
                    l2_norm: ops.l2_norm(state.coeffs()),
                    weighted_norm,
                    state,
                    iterations_used: iteration,
                    last_contraction: contraction,
                    last_contraction_weighted: contraction_w,
                    max_contraction_weighted: max_contraction_w,
                    final_increment: inc,
                    cfl_margin: margin,
                    h1_local_sq: 0.0,
                });
            }
            if !inc.is_finite() || inc > DIVERGENCE_LIMIT {
                return Err(Error::NoConvergence {
                    iterations: iteration,
                    last_step: inc,
                    last_contraction: contraction.unwrap_or(f64::NAN),
                });
            }
            prev = Some((inc, inc_w));
        }
        Err(Error::NoConvergence {
            iterations: self.cfg.max_iterations,
            last_step: prev.map_or(f64::NAN, |p| p.0),
            last_contraction: contraction.unwrap_or(f64::NAN),
        })
    }
}

/// A single implicit step; factors the system matrix on every call.
pub fn fixed_point_step(
    ops: &SchemeOperators,
    u_n: &SplineFunction,
    cfg: &StepConfig,
) -> Result<(SplineFunction, TimeStepRecord)> {
    let mut stepper = Stepper::new(ops, *cfg)?;
    let record = stepper.step(u_n, 0.0)?;
    Ok((record.state.clone(), record))
}

/// History accumulated before a step failed.
#[derive(Debug)]
pub struct AdvanceFailure {
    pub history: Vec<TimeStepRecord>,
    pub error: Error,
}

impl std::fmt::Display for AdvanceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = self.history.last().map_or(0.0, |r| r.t);
        write!(f, "step failed after t = {t}: {}", self.error)
    }
}

impl std::error::Error for AdvanceFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Number of steps of size `dt` needed to reach `t_final`, the last one
/// possibly shorter.
pub fn step_count(dt: f64, t_final: f64) -> usize {
    ((t_final / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

fn initial_record(
    ops: &SchemeOperators,
    u0: &SplineFunction,
    cfg: &StepConfig,
    r_window: f64,
) -> Result<TimeStepRecord> {
    Ok(TimeStepRecord {
        step: 0,
        t: 0.0,
        dt: 0.0,
        state: u0.clone(),
        iterations_used: 0,
        last_contraction: None,
        last_contraction_weighted: None,
        max_contraction_weighted: None,
        final_increment: 0.0,
        cfl_margin: cfl_check(ops, u0, cfg),
        weighted_norm: ops.weighted_norm(u0.coeffs()),
        l2_norm: ops.l2_norm(u0.coeffs()),
        h1_local_sq: h1_local_seminorm_sq(u0, r_window)?,
    })
}

/// Steps from `u0` at `t = 0` to `t_final`, calling `observe` on every
/// record (including the initial one) and returning the final state.
/// Records are not retained.
pub fn advance_with<F>(
    ops: &SchemeOperators,
    u0: &SplineFunction,
    cfg: &StepConfig,
    t_final: f64,
    r_window: f64,
    mut observe: F,
) -> Result<SplineFunction>
where
    F: FnMut(&TimeStepRecord),
{
    if !(t_final > 0.0) {
        return Err(Error::Parameter(format!("t_final must be positive, got {t_final}")));
    }
    let mut stepper = Stepper::new(ops, *cfg)?;
    let first = initial_record(ops, u0, cfg, r_window)?;
    observe(&first);
    let mut u = first.state;
    let steps = step_count(cfg.dt, t_final);
    let mut t = 0.0;
    for n in 1..=steps {
        let (t_next, h) = if n == steps {
            (t_final, t_final - t)
        } else {
            (n as f64 * cfg.dt, cfg.dt)
        };
        stepper.set_dt(h)?;
        let mut record = stepper.step(&u, t)?;
        record.step = n;
        record.t = t_next;
        record.h1_local_sq = h1_local_seminorm_sq(&record.state, r_window)?;
        observe(&record);
        u = record.state;
        t = t_next;
    }
    Ok(u)
}

/// Like [`advance_with`] but keeps every record. On failure the partial
/// history comes back with the error.
pub fn advance(
    ops: &SchemeOperators,
    u0: &SplineFunction,
    cfg: &StepConfig,
    t_final: f64,
    r_window: f64,
) -> std::result::Result<Vec<TimeStepRecord>, AdvanceFailure> {
    let mut history = Vec::new();
    match advance_with(ops, u0, cfg, t_final, r_window, |r| history.push(r.clone())) {
        Ok(_) => Ok(history),
        Err(error) => Err(AdvanceFailure { history, error }),
    }
}

/// `uⁿ + (t − tₙ)(uⁿ⁺¹ − uⁿ)/Δt` on the bracketing records.
pub fn time_interpolant(history: &[TimeStepRecord], t: f64) -> Result<SplineFunction> {
    let (first, last) = match (history.first(), history.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Parameter("empty history".into())),
    };
    if !(t >= first.t && t <= last.t) {
        return Err(Error::OutOfRange {
            what: "t",
            value: t,
            lo: first.t,
            hi: last.t,
        });
    }
    let idx = history.partition_point(|r| r.t <= t);
    if idx == 0 || idx >= history.len() {
        let r = if idx == 0 { first } else { last };
        return Ok(r.state.clone());
    }
    let (a, b) = (&history[idx - 1], &history[idx]);
    let alpha = (t - a.t) / (b.t - a.t);
    let coeffs = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x + alpha * (y - x))
        .collect();
    SplineFunction::new(*a.state.space(), coeffs)
}
