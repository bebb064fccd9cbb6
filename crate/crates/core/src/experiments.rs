//! Experiment configuration, the per-resolution runs behind the convergence
//! tables, and the files they produce.
//!
//! A run takes an [`ExperimentConfig`], projects the initial profile onto
//! every mesh in `m_list` (cells per period), advances each one
//! independently and compares the final states against the closed-form
//! solution or, for the rough profile, a fine-grid reference run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::ExactSolution;
use crate::assembly::SchemeOperators;
use crate::diagnostics::{chain_rates, error_norms, l2_difference, l2_norm, ErrorReport};
use crate::error::{Error, Result};
use crate::quadrature::{DEFAULT_ORDER, ERROR_NORM_ORDER, PROJECTION_ORDER};
use crate::solver::{advance_with, cfl_bound, growth_constant, step_count, DtMode, StepConfig};
use crate::spline::{project_l2, SplineFunction, SplineSpace};
use crate::weight::{WeightFunction, WeightKind};

/// Step constant `c` in `Δt = c Δx²` used by the presets.
pub const DEFAULT_DT_C: f64 = 0.05;
/// Default `c` for `Δt = c Δx`.
pub const DEFAULT_DX_LINEAR_C: f64 = 0.01;
/// Profile samples per cell in `profiles/*.csv`.
pub const PROFILE_SAMPLES_PER_CELL: usize = 4;
/// The reference run must be at least this many times finer than the
/// finest run it judges.
pub const ORACLE_REFINEMENT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    OneSoliton,
    TwoSoliton,
    RoughL2,
    Custom,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 4] = [
        ExperimentName::OneSoliton,
        ExperimentName::TwoSoliton,
        ExperimentName::RoughL2,
        ExperimentName::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::OneSoliton => "one_soliton",
            Self::TwoSoliton => "two_soliton",
            Self::RoughL2 => "rough_l2",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

fn one() -> usize {
    1
}

/// Fully resolved description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: ExperimentName,
    /// Initial profile and, when it has one, the closed-form solution.
    pub initial: ExactSolution,
    pub x_left: f64,
    pub x_right: f64,
    /// Cells per period, strictly increasing.
    pub m_list: Vec<usize>,
    /// Solution time the initial data is taken at.
    pub t_start_shift: f64,
    /// Length of the simulated interval; runs end at `t_start_shift + t_final`
    /// in solution time.
    pub t_final: f64,
    pub weight: WeightKind,
    pub dt_mode: DtMode,
    #[serde(rename = "L")]
    pub l: f64,
    pub max_iterations: usize,
    /// Lower bound on inner iterations per step (see [`StepConfig`]).
    #[serde(default = "one")]
    pub min_iterations: usize,
    /// Half-width `R` of the window for the local `H¹` functional.
    pub r_window: f64,
    /// Elapsed times at which the finest run's profile is written.
    pub profile_times: Vec<f64>,
    /// Cells of the self-convergence reference run, if any.
    pub oracle_m: Option<usize>,
    pub strict_cfl: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Default configuration for a named experiment.
    pub fn preset(name: ExperimentName) -> Self {
        let base = Self {
            name,
            initial: ExactSolution::OneSoliton,
            x_left: -10.0,
            x_right: 10.0,
            m_list: vec![16, 32, 64, 128, 256, 512],
            t_start_shift: -1.0,
            t_final: 2.0,
            weight: WeightKind::Affine { a: 50.0, b: 1.0 },
            dt_mode: DtMode::DxSquared { c: DEFAULT_DT_C },
            l: 0.5,
            max_iterations: crate::solver::DEFAULT_MAX_ITERATIONS,
            min_iterations: 1,
            r_window: 4.0,
            profile_times: vec![2.0],
            oracle_m: None,
            strict_cfl: false,
            seed: 0,
            output_dir: PathBuf::from("out").join(name.as_str()),
        };
        match name {
            ExperimentName::OneSoliton | ExperimentName::Custom => base,
            ExperimentName::TwoSoliton => Self {
                initial: ExactSolution::TwoSoliton { a: 0.5, b: 1.0 },
                x_left: -40.0,
                x_right: 40.0,
                m_list: vec![64, 128, 256, 512, 1024],
                t_start_shift: -10.0,
                t_final: 20.0,
                profile_times: vec![20.0],
                ..base
            },
            ExperimentName::RoughL2 => Self {
                initial: ExactSolution::RoughL2,
                x_left: -5.0,
                x_right: 5.0,
                m_list: vec![64, 128, 256, 512],
                t_start_shift: 0.0,
                t_final: 0.5,
                profile_times: vec![0.5],
                oracle_m: Some(ORACLE_REFINEMENT * 512),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.x_left < self.x_right) || !self.x_left.is_finite() || !self.x_right.is_finite() {
            return bad(format!("domain [{}, {}] is empty", self.x_left, self.x_right));
        }
        if self.m_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("m_list {:?} is not strictly increasing", self.m_list));
        }
        if let Some(&m) = self.m_list.iter().find(|&&m| m < 4) {
            return bad(format!("m_list entry {m} is below 4"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return bad(format!("t_final must be positive, got {}", self.t_final));
        }
        if !self.t_start_shift.is_finite() {
            return bad("t_start_shift must be finite".into());
        }
        if !(self.l > 0.0 && self.l < 1.0) {
            return bad(format!("L must lie in (0, 1), got {}", self.l));
        }
        if self.max_iterations == 0 || self.min_iterations > self.max_iterations {
            return bad(format!(
                "need 1 <= max_iterations and min_iterations <= max_iterations, got {} and {}",
                self.max_iterations, self.min_iterations
            ));
        }
        match self.dt_mode {
            DtMode::DxSquared { c } | DtMode::DxLinear { c } if !(c > 0.0 && c.is_finite()) => {
                return bad(format!("dt_c must be positive, got {c}"))
            }
            DtMode::CflThreeHalves { safety } if !(safety > 0.0 && safety.is_finite()) => {
                return bad(format!("cfl_safety must be positive, got {safety}"))
            }
            _ => {}
        }
        if let ExactSolution::TwoSoliton { a, b } = self.initial {
            ExactSolution::two_soliton(a, b).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.weight_function()?;
        if !(self.r_window >= 0.0) || -self.r_window < self.x_left || self.r_window > self.x_right {
            return bad(format!(
                "r_window {} does not fit in [{}, {}]",
                self.r_window, self.x_left, self.x_right
            ));
        }
        if let Some(&t) = self
            .profile_times
            .iter()
            .find(|&&t| !(t >= 0.0 && t <= self.t_final))
        {
            return bad(format!("profile time {t} outside [0, {}]", self.t_final));
        }
        if let (Some(oracle), Some(&finest)) = (self.oracle_m, self.m_list.last()) {
            if oracle < ORACLE_REFINEMENT * finest {
                return bad(format!(
                    "oracle_m {oracle} must be at least {ORACLE_REFINEMENT} x {finest}"
                ));
            }
        }
        Ok(())
    }

    pub fn weight_function(&self) -> Result<WeightFunction> {
        WeightFunction::from_kind(self.weight, self.x_left, self.x_right)
            .map_err(|e| Error::Config(format!("weight: {e}")))
    }

    /// Solution time at the end of the run.
    pub fn t_end(&self) -> f64 {
        self.t_start_shift + self.t_final
    }

    pub fn step_config(&self, dt: f64) -> StepConfig {
        StepConfig {
            max_iterations: self.max_iterations,
            min_iterations: self.min_iterations,
            contraction_target: self.l,
            strict_cfl: self.strict_cfl,
            ..StepConfig::new(dt)
        }
    }
}

/// Step mode by name with its default constant.
pub fn dt_mode_by_name(name: &str) -> Result<DtMode> {
    match name {
        "dx_squared" => Ok(DtMode::DxSquared { c: DEFAULT_DT_C }),
        "dx_linear" => Ok(DtMode::DxLinear { c: DEFAULT_DX_LINEAR_C }),
        "cfl_three_halves" => Ok(DtMode::CflThreeHalves {
            safety: crate::solver::CFL_SAFETY,
        }),
        other => Err(Error::Config(format!("unknown dt_mode '{other}'"))),
    }
}

/// Reads a flat `key = value` config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Parses the flat `key = value` format. `#` starts a comment, lists are
/// comma separated. `name` selects the preset the other keys override.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
        let key = key.trim().to_string();
        if entries
            .insert(key.clone(), (idx + 1, value.trim().to_string()))
            .is_some()
        {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", idx + 1)));
        }
    }
    let mut take = |key: &str| entries.remove(key);

    let name: ExperimentName = match take("name") {
        Some((_, v)) => v.parse()?,
        None => return Err(Error::Config("missing key 'name'".into())),
    };
    let mut cfg = ExperimentConfig::preset(name);

    if let Some((line, v)) = take("initial") {
        cfg.initial = match v.as_str() {
            "one_soliton" => ExactSolution::OneSoliton,
            "two_soliton" => ExactSolution::TwoSoliton { a: 0.5, b: 1.0 },
            "rough_l2" => ExactSolution::RoughL2,
            other => return Err(at(line, format!("unknown initial profile '{other}'"))),
        };
    }
    for key in ["a", "b"] {
        if let Some((line, v)) = take(key) {
            let x = parse_f64(line, &v)?;
            match &mut cfg.initial {
                ExactSolution::TwoSoliton { a, b } => *(if key == "a" { a } else { b }) = x,
                _ => return Err(at(line, format!("'{key}' only applies to two_soliton"))),
            }
        }
    }
    if let Some((line, v)) = take("domain") {
        let d = parse_list(line, &v, parse_f64)?;
        if d.len() != 2 {
            return Err(at(line, "domain needs two values".into()));
        }
        cfg.x_left = d[0];
        cfg.x_right = d[1];
    }
    if let Some((line, v)) = take("x_left") {
        cfg.x_left = parse_f64(line, &v)?;
    }
    if let Some((line, v)) = take("x_right") {
        cfg.x_right = parse_f64(line, &v)?;
    }
    if let Some((line, v)) = take("m_list") {
        cfg.m_list = parse_list(line, &v, parse_usize)?;
    }
    if let Some((line, v)) = take("t_start_shift") {
        cfg.t_start_shift = parse_f64(line, &v)?;
    }
    if let Some((line, v)) = take("t_final") {
        cfg.t_final = parse_f64(line, &v)?;
        cfg.profile_times = vec![cfg.t_final];
    }
    if let Some((line, v)) = take("profile_times") {
        cfg.profile_times = parse_list(line, &v, parse_f64)?;
    }

    if let Some((line, v)) = take("weight") {
        cfg.weight = match v.as_str() {
            "affine" => WeightKind::Affine { a: 50.0, b: 1.0 },
            "smoothed_ramp" => WeightKind::SmoothedRamp { radius: 4.0, width: 1.0 },
            other => return Err(at(line, format!("unknown weight '{other}'"))),
        };
    }
    for key in ["weight_a", "weight_b", "weight_radius", "weight_width"] {
        if let Some((line, v)) = take(key) {
            let x = parse_f64(line, &v)?;
            match (&mut cfg.weight, key) {
                (WeightKind::Affine { a, .. }, "weight_a") => *a = x,
                (WeightKind::Affine { b, .. }, "weight_b") => *b = x,
                (WeightKind::SmoothedRamp { radius, .. }, "weight_radius") => *radius = x,
                (WeightKind::SmoothedRamp { width, .. }, "weight_width") => *width = x,
                _ => return Err(at(line, format!("'{key}' does not apply to this weight"))),
            }
        }
    }

    if let Some((line, v)) = take("dt_mode") {
        cfg.dt_mode = dt_mode_by_name(&v).map_err(|e| at(line, e.to_string()))?;
    }
    if let Some((line, v)) = take("dt_c") {
        match &mut cfg.dt_mode {
            DtMode::DxSquared { c } | DtMode::DxLinear { c } => *c = parse_f64(line, &v)?,
            _ => return Err(at(line, "'dt_c' requires dt_mode = dx_squared or dx_linear".into())),
        }
    }
    if let Some((line, v)) = take("cfl_safety") {
        match &mut cfg.dt_mode {
            DtMode::CflThreeHalves { safety } => *safety = parse_f64(line, &v)?,
            _ => return Err(at(line, "'cfl_safety' requires dt_mode = cfl_three_halves".into())),
        }
    }

    if let Some((line, v)) = take("L") {
        cfg.l = parse_f64(line, &v)?;
    }
    if let Some((line, v)) = take("max_iterations") {
        cfg.max_iterations = parse_usize(line, &v)?;
    }
    if let Some((line, v)) = take("min_iterations") {
        cfg.min_iterations = parse_usize(line, &v)?;
    }
    if let Some((line, v)) = take("r_window") {
        cfg.r_window = parse_f64(line, &v)?;
    }
    if let Some((line, v)) = take("oracle_m") {
        cfg.oracle_m = match v.as_str() {
            "none" | "0" => None,
            _ => Some(parse_usize(line, &v)?),
        };
    }
    if let Some((line, v)) = take("strict_cfl") {
        cfg.strict_cfl = v
            .parse()
            .map_err(|_| at(line, format!("expected true or false, got '{v}'")))?;
    }
    if let Some((line, v)) = take("seed") {
        cfg.seed = v
            .parse()
            .map_err(|_| at(line, format!("expected an unsigned integer, got '{v}'")))?;
    }
    if let Some((_, v)) = take("output_dir") {
        cfg.output_dir = PathBuf::from(v);
    }

    if let Some((key, (line, _))) = entries.into_iter().next() {
        return Err(at(line, format!("unknown key '{key}'")));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn at(line: usize, msg: String) -> Error {
    Error::Config(format!("line {line}: {msg}"))
}

fn parse_f64(line: usize, v: &str) -> Result<f64> {
    v.trim()
        .parse()
        .map_err(|_| at(line, format!("expected a number, got '{v}'")))
}

fn parse_usize(line: usize, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| at(line, format!("expected a count, got '{v}'")))
}

fn parse_list<T>(line: usize, v: &str, f: fn(usize, &str) -> Result<T>) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| f(line, s)).collect()
}

/// Per-resolution facts echoed into `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub m_nodes: usize,
    pub dx: f64,
    pub dt: f64,
    /// Constant `c` in `Δt = c Δx^p` (`p = 2`, `3/2` or `1` by mode).
    pub dt_constant: f64,
    /// CFL bound on `Δt / Δx^{3/2}` at `t = 0`; `None` for zero data.
    pub c_cfl: Option<f64>,
    pub c_r: f64,
    pub steps_planned: usize,
    pub steps_taken: usize,
    pub cfl_violations: usize,
    pub max_iterations_used: usize,
    pub l2_initial: f64,
    pub l2_max: f64,
    pub l2_final: Option<f64>,
    /// `Δt Σ ‖u_x^{n+1}‖²_{L²([-R,R])}` over the completed steps.
    pub kato: f64,
    pub failure: Option<String>,
}

impl RunSummary {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// One row of `steps.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    #[serde(rename = "M")]
    pub m_nodes: usize,
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub iterations: usize,
    pub contraction: Option<f64>,
    pub contraction_weighted: Option<f64>,
    pub cfl_margin: f64,
    pub l2: f64,
    pub weighted: f64,
    pub h1_local: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub x: f64,
    pub u_numeric: f64,
    pub u_exact: Option<f64>,
}

/// Sampled profile of one run at one elapsed time.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub m_nodes: usize,
    pub t: f64,
    pub samples: Vec<ProfileSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub m_coarse: usize,
    pub m_fine: usize,
    pub l2_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OracleStatus {
    NotRequested,
    Available { m_nodes: usize },
    Unavailable { m_nodes: usize, reason: String },
}

/// Everything one experiment produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    /// One row per entry of `m_list`; failed runs have `e_percent = NaN`.
    pub table: Vec<ErrorReport>,
    pub runs: Vec<RunSummary>,
    pub step_log: Vec<StepSummary>,
    pub profiles: Vec<Profile>,
    /// `‖u_M − u_{M'}‖_{L²}` for adjacent completed runs.
    pub pairwise: Vec<PairDifference>,
    pub oracle: OracleStatus,
    /// Final states, aligned with `m_list`.
    pub finals: Vec<Option<SplineFunction>>,
}

impl RunArtifacts {
    pub fn failures(&self) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(|r| !r.succeeded())
    }

    pub fn all_succeeded(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Content of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    /// `C_R` on the finest mesh of `m_list`.
    pub c_r: Option<f64>,
    #[serde(rename = "K")]
    pub k: f64,
    pub quadrature: QuadratureOrders,
    pub runs: Vec<RunSummary>,
    pub pairwise: Vec<PairDifference>,
    pub oracle: OracleStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureOrders {
    pub assembly: usize,
    pub error_norm: usize,
    pub projection: usize,
}

impl RunManifest {
    pub fn new(artifacts: &RunArtifacts) -> Self {
        Self {
            config: artifacts.config.clone(),
            c_r: artifacts.runs.last().map(|r| r.c_r),
            k: growth_constant(artifacts.config.l),
            quadrature: QuadratureOrders {
                assembly: DEFAULT_ORDER,
                error_norm: ERROR_NORM_ORDER,
                projection: PROJECTION_ORDER,
            },
            runs: artifacts.runs.clone(),
            pairwise: artifacts.pairwise.clone(),
            oracle: artifacts.oracle.clone(),
        }
    }
}

struct SingleRun {
    summary: RunSummary,
    steps: Vec<StepSummary>,
    snapshots: Vec<(f64, SplineFunction)>,
    final_state: Option<SplineFunction>,
}

fn run_resolution(cfg: &ExperimentConfig, m: usize, snapshot_times: &[f64]) -> Result<SingleRun> {
    let space = SplineSpace::periodic(cfg.x_left, cfg.x_right, m)?;
    let weight = cfg.weight_function()?;
    let ops = SchemeOperators::assemble(&space, &weight);
    let (initial, shift) = (cfg.initial, cfg.t_start_shift);
    let u0 = project_l2(&space, |x| initial.initial(x, shift))?;
    let (dt, dt_constant) = cfg.dt_mode.choose(&ops, &u0, cfg.l);
    let c_r = weight.compute_cr(m).c_r;
    let bound = cfl_bound(c_r, ops.weighted_norm(u0.coeffs()), cfg.l);
    let step_cfg = cfg.step_config(dt);

    let mut summary = RunSummary {
        m_nodes: m,
        dx: space.dx(),
        dt,
        dt_constant,
        c_cfl: bound.is_finite().then_some(bound),
        c_r,
        steps_planned: step_count(dt, cfg.t_final),
        steps_taken: 0,
        cfl_violations: 0,
        max_iterations_used: 0,
        l2_initial: 0.0,
        l2_max: 0.0,
        l2_final: None,
        kato: 0.0,
        failure: None,
    };
    let mut steps = Vec::with_capacity(summary.steps_planned + 1);
    let mut snapshots = Vec::new();
    let mut times = snapshot_times.to_vec();
    times.sort_by(f64::total_cmp);
    let mut pending = times.into_iter().peekable();
    let mut prev: Option<(f64, SplineFunction)> = None;

    let result = advance_with(&ops, &u0, &step_cfg, cfg.t_final, cfg.r_window, |rec| {
        if rec.step == 0 {
            summary.l2_initial = rec.l2_norm;
        } else {
            summary.steps_taken = rec.step;
            summary.kato += rec.kato_increment();
        }
        summary.l2_max = summary.l2_max.max(rec.l2_norm);
        summary.max_iterations_used = summary.max_iterations_used.max(rec.iterations_used);
        if rec.cfl_margin < 1.0 {
            summary.cfl_violations += 1;
        }
        steps.push(StepSummary {
            m_nodes: m,
            step: rec.step,
            t: rec.t,
            dt: rec.dt,
            iterations: rec.iterations_used,
            contraction: rec.last_contraction,
            contraction_weighted: rec.last_contraction_weighted,
            cfl_margin: rec.cfl_margin,
            l2: rec.l2_norm,
            weighted: rec.weighted_norm,
            h1_local: rec.h1_local_sq.sqrt(),
        });
        while let Some(&tau) = pending.peek() {
            if tau > rec.t {
                break;
            }
            let state = match &prev {
                Some((t0, u)) if tau < rec.t => blend(u, &rec.state, (tau - t0) / (rec.t - t0)),
                _ => rec.state.clone(),
            };
            snapshots.push((tau, state));
            pending.next();
        }
        if pending.peek().is_some() {
            prev = Some((rec.t, rec.state.clone()));
        }
    });

    let final_state = match result {
        Ok(u) => {
            summary.l2_final = Some(l2_norm(&u));
            log::info!(
                "{} run with M = {m} done: {} steps, at most {} iterations",
                cfg.name,
                summary.steps_taken,
                summary.max_iterations_used
            );
            Some(u)
        }
        Err(e) => {
            log::warn!("{} run with M = {m} failed: {e}", cfg.name);
            summary.failure = Some(e.to_string());
            None
        }
    };
    Ok(SingleRun {
        summary,
        steps,
        snapshots,
        final_state,
    })
}

fn blend(a: &SplineFunction, b: &SplineFunction, alpha: f64) -> SplineFunction {
    let coeffs = a
        .coeffs()
        .iter()
        .zip(b.coeffs())
        .map(|(x, y)| x + alpha * (y - x))
        .collect();
    SplineFunction::new(*a.space(), coeffs).expect("same space")
}

/// Fine-grid run of the same scheme used as the reference when no closed
/// form exists.
pub fn self_convergence_oracle(cfg: &ExperimentConfig, m_reference: usize) -> Result<SplineFunction> {
    if let Some(&finest) = cfg.m_list.last() {
        if m_reference < ORACLE_REFINEMENT * finest {
            return Err(Error::Parameter(format!(
                "reference mesh {m_reference} is coarser than {ORACLE_REFINEMENT} x {finest}"
            )));
        }
    }
    let run = run_resolution(cfg, m_reference, &[])?;
    match (run.final_state, run.summary.failure) {
        (Some(u), _) => Ok(u),
        (None, reason) => Err(Error::Parameter(format!(
            "reference run failed: {}",
            reason.unwrap_or_default()
        ))),
    }
}

/// Runs every resolution of `cfg` (concurrently) and builds the error
/// table. Solver failures are recorded per resolution; only configuration
/// problems return `Err`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let finest = cfg.m_list.last().copied();
    let mut jobs: Vec<(usize, bool)> = cfg.m_list.iter().map(|&m| (m, Some(m) == finest)).collect();
    if let Some(m) = cfg.oracle_m {
        jobs.push((m, false));
    }
    let results: Vec<Result<SingleRun>> = jobs
        .par_iter()
        .map(|&(m, snapshots)| {
            let times = if snapshots { &cfg.profile_times[..] } else { &[] };
            run_resolution(cfg, m, times)
        })
        .collect();
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let oracle_run = cfg.oracle_m.map(|_| results.pop().expect("oracle job"));
    let (oracle, oracle_state) = match (cfg.oracle_m, oracle_run) {
        (Some(m), Some(run)) => match run.final_state {
            Some(u) => (OracleStatus::Available { m_nodes: m }, Some(u)),
            None => (
                OracleStatus::Unavailable {
                    m_nodes: m,
                    reason: run.summary.failure.unwrap_or_default(),
                },
                None,
            ),
        },
        _ => (OracleStatus::NotRequested, None),
    };

    let finals: Vec<Option<SplineFunction>> =
        results.iter().map(|r| r.final_state.clone()).collect();
    let pairwise = pairwise_differences(&cfg.m_list, &finals);
    let t_end = cfg.t_end();

    let mut table: Vec<ErrorReport> = cfg
        .m_list
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let failed = ErrorReport {
                m_nodes: m,
                e_percent: f64::NAN,
                rate_vs_previous: None,
                l2_exact: f64::NAN,
                l2_numeric: f64::NAN,
            };
            let Some(u) = &finals[i] else { return failed };
            let (diff, reference) = if cfg.initial.has_closed_form() {
                let initial = cfg.initial;
                error_norms(|x| initial.eval(x, t_end).unwrap_or(f64::NAN), u)
            } else if let Some(reference) = &oracle_state {
                (l2_difference(u, reference), l2_norm(reference))
            } else {
                match finals.get(i + 1).and_then(Option::as_ref) {
                    Some(next) => (l2_difference(u, next), l2_norm(next)),
                    None => return ErrorReport {
                        l2_numeric: l2_norm(u),
                        ..failed
                    },
                }
            };
            let e_percent = if reference > 0.0 { 100.0 * diff / reference } else { f64::NAN };
            ErrorReport {
                m_nodes: m,
                e_percent,
                rate_vs_previous: None,
                l2_exact: reference,
                l2_numeric: l2_norm(u),
            }
        })
        .collect();
    chain_rates(&mut table);

    let mut profiles = Vec::new();
    if let (Some(m), Some(run)) = (finest, results.last()) {
        for (t, state) in &run.snapshots {
            profiles.push(sample_profile(cfg, m, *t, state));
        }
    }

    let mut runs = Vec::with_capacity(results.len());
    let mut step_log = Vec::new();
    for r in results {
        runs.push(r.summary);
        step_log.extend(r.steps);
    }
    Ok(RunArtifacts {
        config: cfg.clone(),
        table,
        runs,
        step_log,
        profiles,
        pairwise,
        oracle,
        finals,
    })
}

fn pairwise_differences(m_list: &[usize], finals: &[Option<SplineFunction>]) -> Vec<PairDifference> {
    (1..finals.len())
        .filter_map(|i| match (&finals[i - 1], &finals[i]) {
            (Some(a), Some(b)) => Some(PairDifference {
                m_coarse: m_list[i - 1],
                m_fine: m_list[i],
                l2_difference: l2_difference(a, b),
            }),
            _ => None,
        })
        .collect()
}

fn sample_profile(cfg: &ExperimentConfig, m: usize, t: f64, u: &SplineFunction) -> Profile {
    let space = u.space();
    let n = space.num_cells() * PROFILE_SAMPLES_PER_CELL;
    let t_solution = cfg.t_start_shift + t;
    let samples = (0..=n)
        .map(|i| {
            let x = space.x_left() + space.length() * i as f64 / n as f64;
            ProfileSample {
                x,
                u_numeric: u.value(x),
                u_exact: cfg.initial.eval(x, t_solution),
            }
        })
        .collect();
    Profile { m_nodes: m, t, samples }
}

fn check_name(cfg: &ExperimentConfig, expected: ExperimentName) -> Result<()> {
    if cfg.name == expected {
        Ok(())
    } else {
        Err(Error::Config(format!("expected a {expected} config, got {}", cfg.name)))
    }
}

/// Soliton of height 9 from `t = -1` to `t = 1`.
pub fn run_one_soliton(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    check_name(cfg, ExperimentName::OneSoliton)?;
    run_experiment(cfg)
}

/// Two-soliton collision from `t = -10` to `t = 10`.
pub fn run_two_soliton(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    check_name(cfg, ExperimentName::TwoSoliton)?;
    run_experiment(cfg)
}

/// Rough initial data to `t = 0.5`, judged by self-convergence.
pub fn run_rough_l2(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    check_name(cfg, ExperimentName::RoughL2)?;
    run_experiment(cfg)
}

/// File name of the profile written for elapsed time `t`.
pub fn profile_file_name(t: f64) -> String {
    format!("t_{t}.csv")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn finite(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `table.csv`, `steps.csv`, `profiles/t_<time>.csv` and `run.json`
/// under `dir`.
pub fn emit_outputs(artifacts: &RunArtifacts, dir: &Path) -> Result<()> {
    let profile_dir = dir.join("profiles");
    fs::create_dir_all(&profile_dir).map_err(|e| Error::io(&profile_dir, e))?;

    let path = dir.join("table.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["M", "E", "rate"]).map_err(csv_err(&path))?;
    for row in &artifacts.table {
        w.write_record([
            row.m_nodes.to_string(),
            finite(row.e_percent),
            opt(row.rate_vs_previous),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("steps.csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "M",
        "step",
        "t",
        "dt",
        "iterations",
        "contraction",
        "contraction_weighted",
        "cfl_margin",
        "l2",
        "weighted",
        "h1_local",
    ])
    .map_err(csv_err(&path))?;
    for s in &artifacts.step_log {
        w.write_record([
            s.m_nodes.to_string(),
            s.step.to_string(),
            s.t.to_string(),
            s.dt.to_string(),
            s.iterations.to_string(),
            opt(s.contraction),
            opt(s.contraction_weighted),
            s.cfl_margin.to_string(),
            s.l2.to_string(),
            s.weighted.to_string(),
            s.h1_local.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    for profile in &artifacts.profiles {
        let path = profile_dir.join(profile_file_name(profile.t));
        let mut w = csv_writer(&path)?;
        w.write_record(["x", "u_numeric", "u_exact"]).map_err(csv_err(&path))?;
        for s in &profile.samples {
            w.write_record([s.x.to_string(), s.u_numeric.to_string(), opt(s.u_exact)])
                .map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let path = dir.join("run.json");
    let json = serde_json::to_string_pretty(&RunManifest::new(artifacts)).map_err(|source| {
        Error::Json {
            path: path.clone(),
            source,
        }
    })?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join("run.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
}

/// A row of `table.csv` as read back from disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub m_nodes: usize,
    pub e_percent: Option<f64>,
    pub rate: Option<f64>,
}

pub fn read_table(dir: &Path) -> Result<Vec<TableRow>> {
    let path = dir.join("table.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err(&path))?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let number = |i: usize| -> Result<Option<f64>> {
            let s = field(i);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{}: bad number '{s}'", path.display())))
        };
        rows.push(TableRow {
            m_nodes: field(0)
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad M '{}'", path.display(), field(0))))?,
            e_percent: number(1)?,
            rate: number(2)?,
        });
    }
    Ok(rows)
}

/// Fixed-width text rendering of a convergence table.
pub fn format_table(rows: &[TableRow]) -> String {
    let mut out = format!("{:>8} {:>12} {:>8}\n", "M", "E (%)", "rate");
    for r in rows {
        let e = r.e_percent.map_or("failed".to_string(), |e| format!("{e:.4}"));
        let rate = r.rate.map_or(String::new(), |x| format!("{x:.2}"));
        out.push_str(&format!("{:>8} {:>12} {:>8}\n", r.m_nodes, e, rate));
    }
    out
}

/// Local maxima of a sampled periodic profile whose value exceeds
/// `threshold`, as `(x, u)` pairs.
pub fn local_maxima(samples: &[ProfileSample], threshold: f64) -> Vec<(f64, f64)> {
    // The last sample duplicates the first (periodic).
    let n = samples.len().saturating_sub(1);
    if n < 3 {
        return Vec::new();
    }
    (0..n)
        .filter_map(|i| {
            let u = samples[i].u_numeric;
            let left = samples[(i + n - 1) % n].u_numeric;
            let right = samples[(i + 1) % n].u_numeric;
            (u > left && u >= right && u > threshold).then_some((samples[i].x, u))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: ExperimentName) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(name);
        cfg.m_list = vec![16, 32];
        cfg.oracle_m = None;
        cfg
    }

    #[test]
    fn presets_validate() {
        for name in ExperimentName::ALL {
            ExperimentConfig::preset(name).validate().unwrap();
        }
        let two = ExperimentConfig::preset(ExperimentName::TwoSoliton);
        assert_eq!(two.t_end(), 10.0);
        assert_eq!(ExperimentConfig::preset(ExperimentName::OneSoliton).t_end(), 1.0);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let cfg = parse_config(
            "# one-soliton, coarse\nname = one_soliton\nm_list = 8, 16 ,32\n\
             dt_mode = dx_squared\ndt_c = 0.1 # smaller\nL = 0.25\noutput_dir = /tmp/x\n",
        )
        .unwrap();
        assert_eq!(cfg.m_list, vec![8, 16, 32]);
        assert_eq!(cfg.dt_mode, DtMode::DxSquared { c: 0.1 });
        assert_eq!(cfg.l, 0.25);
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.x_left, -10.0);
    }

    #[test]
    fn parse_errors() {
        for text in [
            "m_list = 8",
            "name = nope",
            "name = one_soliton\nm_list = 16, 8",
            "name = one_soliton\nbogus = 1",
            "name = one_soliton\nt_final = 0",
            "name = one_soliton\nt_final = 1\nt_final = 2",
            "name = one_soliton\ndt_c = x",
            "name = one_soliton\nweight_radius = 3",
            "name = one_soliton\na = 0.3",
            "name = one_soliton\nL = 1.5",
            "name = one_soliton\nno equals sign",
            "name = rough_l2\noracle_m = 100",
        ] {
            assert!(
                matches!(parse_config(text), Err(Error::Config(_))),
                "accepted {text:?}"
            );
        }
    }

    #[test]
    fn parse_two_soliton_and_ramp() {
        let cfg = parse_config(
            "name = custom\ninitial = two_soliton\na = 0.25\nb = 1\ndomain = -40, 40\n\
             weight = smoothed_ramp\nweight_radius = 5\nt_final = 3\nr_window = 6\n",
        )
        .unwrap();
        assert_eq!(cfg.initial, ExactSolution::TwoSoliton { a: 0.25, b: 1.0 });
        assert_eq!(cfg.weight, WeightKind::SmoothedRamp { radius: 5.0, width: 1.0 });
        assert_eq!(cfg.profile_times, vec![3.0]);
    }

    #[test]
    fn empty_m_list_runs() {
        let mut cfg = small(ExperimentName::OneSoliton);
        cfg.m_list.clear();
        let art = run_experiment(&cfg).unwrap();
        assert!(art.table.is_empty() && art.runs.is_empty() && art.profiles.is_empty());
    }

    #[test]
    fn one_soliton_coarse_table() {
        let mut cfg = small(ExperimentName::OneSoliton);
        cfg.t_final = 0.25;
        cfg.profile_times = vec![0.1, 0.25];
        let art = run_one_soliton(&cfg).unwrap();
        assert!(art.all_succeeded());
        assert_eq!(art.table.len(), 2);
        assert!(art.table[0].rate_vs_previous.is_none());
        assert!(art.table[1].rate_vs_previous.is_some());
        assert!(art.table.iter().all(|r| r.e_percent > 0.0));
        assert_eq!(art.profiles.len(), 2);
        assert_eq!(art.profiles[0].m_nodes, 32);
        assert!(art.profiles[0].samples.iter().all(|s| s.u_exact.is_some()));
        assert!(run_two_soliton(&cfg).is_err());
    }

    #[test]
    fn rough_pairwise_fallback() {
        let mut cfg = small(ExperimentName::RoughL2);
        cfg.t_final = 0.05;
        cfg.profile_times = vec![0.05];
        let art = run_rough_l2(&cfg).unwrap();
        assert_eq!(art.oracle, OracleStatus::NotRequested);
        assert_eq!(art.pairwise.len(), 1);
        assert!(art.table[0].e_percent > 0.0);
        assert!(art.table[1].e_percent.is_nan());
        assert!(art.profiles[0].samples.iter().all(|s| s.u_exact.is_none()));
    }

    #[test]
    fn failures_are_recorded_per_resolution() {
        let mut cfg = small(ExperimentName::OneSoliton);
        cfg.strict_cfl = true;
        cfg.t_final = 0.1;
        cfg.profile_times.clear();
        let art = run_experiment(&cfg).unwrap();
        assert_eq!(art.runs.len(), 2);
        assert!(!art.all_succeeded());
        assert!(art.table.iter().all(|r| r.e_percent.is_nan()));
    }

    #[test]
    fn maxima_of_sampled_profile() {
        let samples: Vec<ProfileSample> = (0..=100)
            .map(|i| {
                let x = i as f64 / 100.0;
                ProfileSample {
                    x,
                    u_numeric: (4.0 * std::f64::consts::PI * x).sin(),
                    u_exact: None,
                }
            })
            .collect();
        assert_eq!(local_maxima(&samples, 0.5).len(), 2);
        assert!(local_maxima(&samples, 2.0).is_empty());
    }

    #[test]
    fn table_rendering() {
        let rows = [
            TableRow { m_nodes: 16, e_percent: Some(12.5), rate: None },
            TableRow { m_nodes: 32, e_percent: None, rate: None },
        ];
        let text = format_table(&rows);
        assert!(text.contains("12.5000") && text.contains("failed"));
    }
}
