//! SPSA over basis coefficients `θ` and backtracking gradient descent over `(Y, B)`.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::cost::CostMatrices;
use crate::error::{Error, Result};
use crate::gradients::{self, GradientPair};
use crate::linalg::CMat;
use crate::qsys::{self, build_plant, Basis, ParamSystem};

pub const THETA_FLOOR: f64 = 1e-12;
pub const ARMIJO: f64 = 1e-4;
pub const MIN_STEP: f64 = 1e-12;
/// Relative rounding level of a steady-state cost evaluation.
pub const COST_NOISE: f64 = 1e-12;
/// Resamples of `Δ` before an SPSA iteration is skipped.
pub const SPSA_RETRIES: usize = 5;
/// Consecutive skipped iterations that abort an SPSA run.
pub const SPSA_SKIP_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SpsaSchedule {
    pub a0: f64,
    pub c0: f64,
    pub decay_a: f64,
    pub decay_c: f64,
    pub stability_a: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl SpsaSchedule {
    /// Standard exponents, `a0 = c0 = 1e-4`, `A = 0.1·max_iters`.
    pub fn new(max_iters: usize, seed: u64) -> Self {
        Self {
            a0: 1e-4,
            c0: 1e-4,
            decay_a: 0.602,
            decay_c: 0.5,
            stability_a: 0.1 * max_iters as f64,
            max_iters,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a0 > 0.0 && self.c0 > 0.0) {
            return Err(Error::Configuration("SPSA a0 and c0 must be positive".into()));
        }
        if !(self.stability_a >= 0.0) || !self.decay_a.is_finite() || !self.decay_c.is_finite() {
            return Err(Error::Configuration("SPSA schedule constants must be finite and A ≥ 0".into()));
        }
        Ok(())
    }

    pub fn a_t(&self, t: usize) -> f64 {
        self.a0 / (t as f64 + self.stability_a).max(1.0).powf(self.decay_a)
    }

    pub fn c_t(&self, t: usize) -> f64 {
        self.c0 / (t as f64 + 1.0).powf(self.decay_c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    Converged,
    MaxIters,
    /// Every iteration in a window was skipped for unstable probes.
    InstabilityAbort,
    /// No stable descent step above the minimum step size.
    LineSearchFailed,
}

impl TerminalStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminalStatus::Converged => "converged",
            TerminalStatus::MaxIters => "max_iters",
            TerminalStatus::InstabilityAbort => "instability_abort",
            TerminalStatus::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `None` marks an iteration whose evaluation was rejected.
    pub cost: Option<f64>,
    pub grad_norm_y: Option<f64>,
    pub grad_norm_b: Option<f64>,
    pub theta_norm: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerTrace {
    pub records: Vec<TraceRecord>,
    pub status: TerminalStatus,
    pub skipped_iterations: usize,
    pub resamples: usize,
}

impl OptimizerTrace {
    fn new() -> Self {
        Self { records: Vec::new(), status: TerminalStatus::MaxIters, skipped_iterations: 0, resamples: 0 }
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.cost)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.cost).collect()
    }

    /// Means of consecutive blocks of `block` recorded costs.
    pub fn block_means(&self, block: usize) -> Vec<f64> {
        self.costs()
            .chunks(block.max(1))
            .filter(|c| c.len() == block.max(1))
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }

    pub const CSV_HEADER: &'static str = "iter,cost,grad_norm_Y,grad_norm_B,theta_norm,wall_ms";

    /// CSV body with the standard header; `wall_ms` is left empty when `with_wall_time` is false.
    pub fn to_csv(&self, with_wall_time: bool) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let wall = if with_wall_time { format!("{:.3}", r.wall_ms) } else { String::new() };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iter,
                opt(r.cost),
                opt(r.grad_norm_y),
                opt(r.grad_norm_b),
                opt(r.theta_norm),
                wall
            ));
        }
        out
    }
}

pub fn project_params(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|&t| if t > THETA_FLOOR { t } else { THETA_FLOOR }).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Probe failures that count as an infeasible point rather than a hard error.
fn is_infeasible(e: &Error) -> bool {
    matches!(e, Error::Stability { .. } | Error::Numerical(_) | Error::Domain(_))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpsaOutcome {
    Updated { theta: Vec<f64>, gradient: Vec<f64>, resamples: usize },
    Skipped { resamples: usize },
}

/// One SPSA iteration. Probe points are projected onto the feasible set before evaluation.
pub fn spsa_step<F, R>(theta: &[f64], t: usize, schedule: &SpsaSchedule, cost_fn: &mut F, rng: &mut R) -> Result<SpsaOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng,
{
    if theta.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Domain("SPSA requires θ ≥ 0".into()));
    }
    let ct = schedule.c_t(t);
    let at = schedule.a_t(t);
    for attempt in 0..=SPSA_RETRIES {
        let delta: Vec<f64> = (0..theta.len()).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t + ct * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&delta).map(|(t, d)| t - ct * d).collect();
        let jp = match cost_fn(&project_params(&plus)) {
            Ok(v) => v,
            Err(e) if is_infeasible(&e) => continue,
            Err(e) => return Err(e),
        };
        let jm = match cost_fn(&project_params(&minus)) {
            Ok(v) => v,
            Err(e) if is_infeasible(&e) => continue,
            Err(e) => return Err(e),
        };
        let gradient: Vec<f64> = delta.iter().map(|d| (jp - jm) / (2.0 * ct * d)).collect();
        let stepped: Vec<f64> = theta.iter().zip(&gradient).map(|(t, g)| t - at * g).collect();
        return Ok(SpsaOutcome::Updated { theta: project_params(&stepped), gradient, resamples: attempt });
    }
    Ok(SpsaOutcome::Skipped { resamples: SPSA_RETRIES })
}

/// SPSA driver. Records `J(θₜ)` after every iteration, with `J(θ₀)` as iteration 0.
pub fn run_spsa(ps: &ParamSystem, cm: &CostMatrices, schedule: &SpsaSchedule) -> Result<(Vec<f64>, OptimizerTrace)> {
    schedule.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut cost_fn = |th: &[f64]| -> Result<f64> {
        let p = build_plant(&ps.with_theta(th.to_vec())?)?;
        crate::cost::evaluate_cost(&p, cm)
    };
    let mut theta = project_params(&ps.theta);
    let mut trace = OptimizerTrace::new();
    let record = |trace: &mut OptimizerTrace, iter: usize, cost: Option<f64>, th: &[f64]| {
        trace.records.push(TraceRecord {
            iter,
            cost,
            grad_norm_y: None,
            grad_norm_b: None,
            theta_norm: Some(norm(th)),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    };
    let j0 = cost_fn(&theta).ok();
    record(&mut trace, 0, j0, &theta);
    let mut consecutive_skips = 0usize;
    for t in 0..schedule.max_iters {
        match spsa_step(&theta, t, schedule, &mut cost_fn, &mut rng)? {
            SpsaOutcome::Updated { theta: next, resamples, .. } => {
                trace.resamples += resamples;
                consecutive_skips = 0;
                theta = next;
                let j = match cost_fn(&theta) {
                    Ok(v) => Some(v),
                    Err(e) if is_infeasible(&e) => None,
                    Err(e) => return Err(e),
                };
                record(&mut trace, t + 1, j, &theta);
            }
            SpsaOutcome::Skipped { resamples } => {
                trace.resamples += resamples;
                trace.skipped_iterations += 1;
                consecutive_skips += 1;
                record(&mut trace, t + 1, None, &theta);
                if consecutive_skips >= SPSA_SKIP_WINDOW {
                    trace.status = TerminalStatus::InstabilityAbort;
                    return Ok((theta, trace));
                }
            }
        }
    }
    trace.status = TerminalStatus::MaxIters;
    Ok((theta, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientOptions {
    pub max_iters: usize,
    pub initial_step: f64,
    /// Stop when the projected gradient norm is at most `tol`.
    pub tol: f64,
}

impl Default for GradientOptions {
    fn default() -> Self {
        Self { max_iters: 20_000, initial_step: 0.1, tol: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct GradientResult {
    pub y: CMat,
    pub b: CMat,
    pub cost: f64,
    pub gradient: GradientPair,
    pub trace: OptimizerTrace,
}

/// Gradient restricted to doubled-up directions, so iterates stay physical.
pub fn projected_gradient(y: &CMat, b: &CMat, cm: &CostMatrices) -> Result<(f64, GradientPair)> {
    let (j, g) = gradients::cost_and_gradient(y, b, cm)?;
    Ok((j, GradientPair { dy: qsys::project_doubled_up(&g.dy)?, db: qsys::project_doubled_up(&g.db)? }))
}

/// Backtracking gradient descent over `(Y, B)`. Each iteration tries the Barzilai–Borwein
/// step (or twice the previous step when the curvature estimate is not positive) and
/// halves it until the Armijo condition holds with a Hurwitz drift.
pub fn run_gradient_descent(y0: &CMat, b0: &CMat, cm: &CostMatrices, opts: &GradientOptions) -> Result<GradientResult> {
    qsys::require_hurwitz(&qsys::build_drift(y0, b0)?, qsys::DEFAULT_HURWITZ_MARGIN)?;
    let start = Instant::now();
    let mut y = y0.clone();
    let mut b = b0.clone();
    let (mut j, mut g) = projected_gradient(&y, &b, cm)?;
    let mut trace = OptimizerTrace::new();
    let mut step = opts.initial_step;
    let push = |trace: &mut OptimizerTrace, iter: usize, j: f64, g: &GradientPair| {
        trace.records.push(TraceRecord {
            iter,
            cost: Some(j),
            grad_norm_y: Some(g.dy.norm()),
            grad_norm_b: Some(g.db.norm()),
            theta_norm: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    };
    push(&mut trace, 0, j, &g);
    for iter in 1..=opts.max_iters {
        if g.norm() <= opts.tol {
            trace.status = TerminalStatus::Converged;
            break;
        }
        // dJ ≈ −2η‖G‖² for the Wirtinger gradient
        let g_sq = g.dy.norm_squared() + g.db.norm_squared();
        // Once the predicted Armijo decrease is below the rounding level of J, a step is
        // accepted when the directional derivative at the trial point is still non-positive,
        // the gradient shrinks and J stays within its rounding level.
        let noise_floor = COST_NOISE * (1.0 + j.abs());
        let g_norm = g.norm();
        let mut accepted = None;
        while step >= MIN_STEP {
            let y1 = &y - g.dy.scale(step);
            let b1 = &b - g.db.scale(step);
            if let Ok((j1, g1)) = projected_gradient(&y1, &b1, cm) {
                let predicted = 2.0 * step * g_sq;
                let ok = if predicted >= noise_floor {
                    j1 <= j - ARMIJO * predicted
                } else {
                    let slope = re_inner(&g1.dy, &g.dy) + re_inner(&g1.db, &g.db);
                    slope >= 0.0 && j1 <= j + noise_floor && g1.norm() < g_norm
                };
                if ok {
                    accepted = Some((y1, b1, j1, g1));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((y1, b1, j1, g1)) => {
                step = next_step(&y, &b, &g, &y1, &b1, &g1, step);
                y = y1;
                b = b1;
                j = j1;
                g = g1;
                push(&mut trace, iter, j, &g);
            }
            None => {
                trace.status = TerminalStatus::LineSearchFailed;
                break;
            }
        }
        if iter == opts.max_iters {
            trace.status = TerminalStatus::MaxIters;
        }
    }
    if g.norm() <= opts.tol {
        trace.status = TerminalStatus::Converged;
    }
    Ok(GradientResult { y, b, cost: j, gradient: g, trace })
}

fn re_inner(x: &CMat, z: &CMat) -> f64 {
    x.iter().zip(z.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

fn next_step(y0: &CMat, b0: &CMat, g0: &GradientPair, y1: &CMat, b1: &CMat, g1: &GradientPair, step: f64) -> f64 {
    let (sy, sb) = (y1 - y0, b1 - b0);
    let (dy, db) = (&g1.dy - &g0.dy, &g1.db - &g0.db);
    let ss = re_inner(&sy, &sy) + re_inner(&sb, &sb);
    let sg = re_inner(&sy, &dy) + re_inner(&sb, &db);
    if sg > 0.0 && ss > 0.0 {
        (ss / sg).clamp(MIN_STEP, 1e6)
    } else {
        (2.0 * step).min(1e6)
    }
}

/// Starting point `θ₀` for a basis scaled by `λ`: unit decay, weak gain and
/// coherent terms, expressed in units of `1/λ`.
pub fn initial_theta(basis: &Basis, lambda: f64) -> Vec<f64> {
    basis
        .labels
        .iter()
        .map(|l| {
            let v = if l.starts_with("decay") {
                1.0
            } else if l.starts_with("gain") {
                0.05
            } else {
                0.1
            };
            v / lambda
        })
        .collect()
}

/// Random `θ` (coherent `U(0, 0.5)`, decay `U(0.5, 1.5)`, gain `U(0, 0.1)`) redrawn until
/// the plant is Hurwitz.
pub fn random_stable_theta<R: Rng>(rng: &mut R, basis: &Basis) -> Result<ParamSystem> {
    for _ in 0..1000 {
        let theta = basis
            .labels
            .iter()
            .map(|l| {
                if l.starts_with("decay") {
                    rng.gen_range(0.5..1.5)
                } else if l.starts_with("gain") {
                    rng.gen_range(0.0..0.1)
                } else {
                    rng.gen_range(0.0..0.5)
                }
            })
            .collect();
        let ps = ParamSystem::new(theta, basis.clone())?;
        if qsys::is_hurwitz(&build_plant(&ps)?.a) {
            return Ok(ps);
        }
    }
    Err(Error::Configuration("no stable random start found in 1000 draws".into()))
}
