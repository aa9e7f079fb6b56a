//! Outer solvers for `min_{γ ∈ Π(μ1, μ2)} ⟨γ, C⟩ + λH(γ) + J(γ)`.
//!
//! [`solve_fb`] is the Bregman forward-backward scheme with the entropy as
//! Legendre function. Its proximal step is itself an entropic transport
//! problem, so every iteration is
//!
//! ```text
//! C_k     = αC + α∇J(γ_k) − log γ_k
//! γ_{k+1} = sinkhorn(C_k, ε = 1 + αλ, μ1, μ2)
//! ```
//!
//! with a constant step `α`. An optional monotonicity safeguard halves `α`
//! (persistently) whenever a step would increase the objective.
//!
//! [`solve_cgs`] is the generalized conditional gradient baseline: linearize
//! `J` only, solve the resulting entropic problem for a direction, then
//! line-search along the segment.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{shape_mismatch, OtError, Result};
use crate::measure::DiscreteMeasure;
use crate::objective::{objective_value, ObjectiveSpec};
use crate::plan::TransportPlan;
use crate::regularizers::{composite_grad, RegularizerSpec};
use crate::sinkhorn::{sinkhorn_warm, Potentials, SinkhornOptions, SinkhornOutcome};

/// Entries are floored here before taking `log γ_k`.
pub const LOG_FLOOR: f64 = 1e-300;
/// Objective increase tolerated by the monotonicity safeguard.
pub const SAFEGUARD_SLACK: f64 = 1e-10;
/// Step halvings per iteration before the safeguard gives up.
pub const MAX_HALVINGS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    SafeguardHalted,
    BudgetExhausted,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIters => "max-iters",
            SolverStatus::SafeguardHalted => "safeguard-halted",
            SolverStatus::BudgetExhausted => "budget-exhausted",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// Cumulative wall-clock seconds since the solver started.
    pub elapsed_s: f64,
    pub objective: f64,
    pub marginal_residual: f64,
    /// `α` for forward-backward, the line-search `τ` for CGS.
    pub step_size: f64,
    pub sinkhorn_iters: usize,
    /// Seconds spent inside Sinkhorn during this iteration.
    pub sinkhorn_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    pub initial_objective: f64,
    pub records: Vec<TraceRecord>,
    pub status: SolverStatus,
}

impl SolverTrace {
    pub const CSV_HEADER: &'static str = "iter,elapsed_s,objective,marginal_residual,step_size";

    pub fn final_objective(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_objective, |r| r.objective)
    }

    /// Writes the trace as CSV, header included.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.iter, r.elapsed_s, r.objective, r.marginal_residual, r.step_size
            )?;
        }
        Ok(())
    }

    /// Cumulative time at which the objective first drops to `level` or below.
    pub fn time_to_reach(&self, level: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.objective <= level)
            .map(|r| r.elapsed_s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FbOptions {
    pub alpha: f64,
    pub max_outer_iters: usize,
    /// Stop when `‖γ_{k+1} − γ_k‖_F / ‖γ_k‖_F` is at most this.
    pub rel_change_tol: f64,
    /// Inner solver settings; `epsilon` is overwritten with `1 + αλ`.
    pub sinkhorn: SinkhornOptions,
    pub monotonicity_safeguard: bool,
    /// Reuse the previous inner solve's potentials.
    pub warm_start: bool,
    /// Use the last Sinkhorn iterate when the inner solve runs out of iterations.
    pub accept_inexact_inner: bool,
    pub time_budget: Option<Duration>,
}

impl Default for FbOptions {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            max_outer_iters: 1000,
            rel_change_tol: 1e-7,
            sinkhorn: SinkhornOptions::default(),
            monotonicity_safeguard: true,
            warm_start: false,
            accept_inexact_inner: false,
            time_budget: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgsOptions {
    pub max_outer_iters: usize,
    pub rel_change_tol: f64,
    /// Inner solver settings; `epsilon` is overwritten with `λ`.
    pub sinkhorn: SinkhornOptions,
    /// Golden-section iterations over `τ ∈ [0, 1]`.
    pub line_search_iters: usize,
    pub warm_start: bool,
    pub accept_inexact_inner: bool,
    pub time_budget: Option<Duration>,
}

impl Default for CgsOptions {
    fn default() -> Self {
        Self {
            max_outer_iters: 1000,
            rel_change_tol: 1e-7,
            sinkhorn: SinkhornOptions::default(),
            line_search_iters: 40,
            warm_start: false,
            accept_inexact_inner: false,
            time_budget: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Value(f64),
    Unavailable(&'static str),
}

/// Conservative `α = 1 / Σ_r weight_r · β_r` when every active term carries a
/// smoothness bound.
pub fn default_step_size(regs: &[RegularizerSpec]) -> StepSize {
    let active: Vec<_> = regs.iter().filter(|r| r.weight > 0.0).collect();
    if active.is_empty() {
        return StepSize::Unavailable("any α>0 valid for J=0");
    }
    let mut total = 0.0;
    for r in active {
        match r.smoothness_bound {
            Some(b) => total += r.weight * b,
            None => return StepSize::Unavailable("a regularizer has no smoothness bound"),
        }
    }
    if total > 0.0 {
        StepSize::Value(1.0 / total)
    } else {
        StepSize::Unavailable("any α>0 valid for J=0")
    }
}

fn check_problem(
    spec: &ObjectiveSpec,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    init: &TransportPlan,
) -> Result<()> {
    let dim = spec.dim();
    if dim != (mu1.len(), mu2.len()) {
        return Err(shape_mismatch("solver cost vs marginals", (mu1.len(), mu2.len()), dim));
    }
    if init.dim() != dim {
        return Err(shape_mismatch("solver initial plan", dim, init.dim()));
    }
    if let Some(((row, col), &value)) = init.view().indexed_iter().find(|(_, v)| **v <= 0.0) {
        return Err(OtError::NonPositiveInit { row, col, value });
    }
    Ok(())
}

fn relative_change(next: ArrayView2<'_, f64>, prev: ArrayView2<'_, f64>) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    Zip::from(next).and(prev).for_each(|&a, &b| {
        diff += (a - b) * (a - b);
        norm += b * b;
    });
    (diff / norm).sqrt()
}

/// Runs an inner solve and returns the outcome plus its wall time.
fn inner_solve(
    cost: ArrayView2<'_, f64>,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    opts: &SinkhornOptions,
    warm: Option<&Potentials>,
    accept_inexact: bool,
) -> Result<(SinkhornOutcome, f64)> {
    let t0 = Instant::now();
    let out = match sinkhorn_warm(cost, mu1, mu2, opts, warm) {
        Ok(out) => out,
        Err(OtError::NonConvergence {
            plan,
            iterations,
            residual,
        }) if accept_inexact => SinkhornOutcome {
            plan: *plan,
            iterations,
            residual,
            residual_history: Vec::new(),
            potentials: Potentials {
                row: ndarray::Array1::zeros(mu1.len()),
                col: ndarray::Array1::zeros(mu2.len()),
            },
        },
        Err(e) => return Err(e),
    };
    Ok((out, t0.elapsed().as_secs_f64()))
}

struct Clock {
    start: Instant,
    last: f64,
}

impl Clock {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            last: 0.0,
        }
    }

    /// Strictly increasing elapsed seconds.
    fn tick(&mut self) -> f64 {
        let now = self.start.elapsed().as_secs_f64();
        self.last = if now > self.last {
            now
        } else {
            self.last + f64::EPSILON * self.last.max(1e-9)
        };
        self.last
    }

    fn over(&self, budget: Option<Duration>) -> bool {
        budget.is_some_and(|b| self.start.elapsed() >= b)
    }
}

/// Bregman forward-backward splitting with entropic proximal steps.
pub fn solve_fb(
    spec: &ObjectiveSpec,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    init: &TransportPlan,
    opts: &FbOptions,
) -> Result<(TransportPlan, SolverTrace)> {
    check_problem(spec, mu1, mu2, init)?;
    if !(opts.alpha > 0.0 && opts.alpha.is_finite()) {
        return Err(OtError::InvalidParameter(format!(
            "step size must be positive, got {}",
            opts.alpha
        )));
    }
    opts.sinkhorn.validate()?;
    let mut clock = Clock::new();
    let cost = spec.cost.entries();
    let mut gamma = init.entries().clone();
    let mut objective = objective_value(gamma.view(), spec)?;
    let mut trace = SolverTrace {
        initial_objective: objective,
        records: Vec::new(),
        status: SolverStatus::MaxIters,
    };
    let mut alpha = opts.alpha;
    let mut potentials: Option<Potentials> = None;
    let mut last_plan: Option<TransportPlan> = None;
    let mut c_k = Array2::zeros(gamma.dim());

    for k in 0..opts.max_outer_iters {
        let grad = composite_grad(gamma.view(), &spec.regularizers)?;
        let mut sinkhorn_s = 0.0;
        let mut sinkhorn_iters = 0;
        let mut halvings = 0;
        let accepted = loop {
            Zip::from(&mut c_k)
                .and(cost)
                .and(&grad)
                .and(&gamma)
                .for_each(|c, &cost, &g, &x| *c = alpha * (cost + g) - x.max(LOG_FLOOR).ln());
            let inner = SinkhornOptions {
                epsilon: 1.0 + alpha * spec.lambda,
                ..opts.sinkhorn
            };
            let warm = if opts.warm_start { potentials.as_ref() } else { None };
            // With the safeguard on, an inner solve that runs out of
            // iterations counts as a failed step rather than an error.
            let accept_inexact = opts.accept_inexact_inner && !opts.monotonicity_safeguard;
            let started = Instant::now();
            let attempt = inner_solve(c_k.view(), mu1, mu2, &inner, warm, accept_inexact);
            sinkhorn_s += started.elapsed().as_secs_f64();
            let (out, _) = match attempt {
                Err(OtError::NonConvergence { iterations, .. })
                    if opts.monotonicity_safeguard =>
                {
                    sinkhorn_iters += iterations;
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        break None;
                    }
                    alpha *= 0.5;
                    continue;
                }
                other => other?,
            };
            sinkhorn_iters += out.iterations;
            let next_objective = objective_value(out.plan.view(), spec)?;
            if opts.monotonicity_safeguard && !(next_objective <= objective + SAFEGUARD_SLACK) {
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    break None;
                }
                alpha *= 0.5;
                continue;
            }
            break Some((out, next_objective));
        };
        let Some((out, next_objective)) = accepted else {
            trace.status = SolverStatus::SafeguardHalted;
            break;
        };
        let change = relative_change(out.plan.view(), gamma.view());
        trace.records.push(TraceRecord {
            iter: k + 1,
            elapsed_s: clock.tick(),
            objective: next_objective,
            marginal_residual: out.residual,
            step_size: alpha,
            sinkhorn_iters,
            sinkhorn_s,
        });
        objective = next_objective;
        gamma.assign(out.plan.entries());
        potentials = Some(out.potentials);
        last_plan = Some(out.plan);
        if change <= opts.rel_change_tol {
            trace.status = SolverStatus::Converged;
            break;
        }
        if clock.over(opts.time_budget) {
            trace.status = SolverStatus::BudgetExhausted;
            break;
        }
    }
    let plan = last_plan.unwrap_or_else(|| init.clone());
    Ok((plan, trace))
}

/// Minimizes a unimodal function on `[0, 1]` by golden-section search; the
/// endpoints are also compared so exact boundary optima are returned exactly.
fn golden_section<F: FnMut(f64) -> Result<f64>>(mut f: F, iters: usize) -> Result<(f64, f64)> {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for t in [0.0, 1.0] {
        let v = f(t)?;
        if v <= best.1 {
            best = (t, v);
        }
    }
    Ok(best)
}

/// Generalized conditional gradient splitting baseline.
pub fn solve_cgs(
    spec: &ObjectiveSpec,
    mu1: &DiscreteMeasure,
    mu2: &DiscreteMeasure,
    init: &TransportPlan,
    opts: &CgsOptions,
) -> Result<(TransportPlan, SolverTrace)> {
    check_problem(spec, mu1, mu2, init)?;
    opts.sinkhorn.validate()?;
    let mut clock = Clock::new();
    let cost = spec.cost.entries();
    let inner = SinkhornOptions {
        epsilon: spec.lambda,
        ..opts.sinkhorn
    };
    let mut gamma = init.entries().clone();
    let mut trace = SolverTrace {
        initial_objective: objective_value(gamma.view(), spec)?,
        records: Vec::new(),
        status: SolverStatus::MaxIters,
    };
    let mut potentials: Option<Potentials> = None;
    let mut linearized = Array2::zeros(gamma.dim());
    let mut trial = Array2::zeros(gamma.dim());

    for k in 0..opts.max_outer_iters {
        let grad = composite_grad(gamma.view(), &spec.regularizers)?;
        Zip::from(&mut linearized)
            .and(cost)
            .and(&grad)
            .for_each(|l, &c, &g| *l = c + g);
        let warm = if opts.warm_start { potentials.as_ref() } else { None };
        let (out, sinkhorn_s) =
            inner_solve(linearized.view(), mu1, mu2, &inner, warm, opts.accept_inexact_inner)?;
        let direction = out.plan.entries();
        let (tau, next_objective) = golden_section(
            |tau| {
                Zip::from(&mut trial)
                    .and(&gamma)
                    .and(direction)
                    .for_each(|t, &g, &d| *t = g + tau * (d - g));
                objective_value(trial.view(), spec)
            },
            opts.line_search_iters,
        )?;
        Zip::from(&mut trial)
            .and(&gamma)
            .and(direction)
            .for_each(|t, &g, &d| *t = g + tau * (d - g));
        let change = relative_change(trial.view(), gamma.view());
        std::mem::swap(&mut gamma, &mut trial);
        let residual = crate::plan::marginal_residual(gamma.view(), mu1, mu2)?;
        trace.records.push(TraceRecord {
            iter: k + 1,
            elapsed_s: clock.tick(),
            objective: next_objective,
            marginal_residual: residual,
            step_size: tau,
            sinkhorn_iters: out.iterations,
            sinkhorn_s,
        });
        potentials = Some(out.potentials);
        if change <= opts.rel_change_tol {
            trace.status = SolverStatus::Converged;
            break;
        }
        if clock.over(opts.time_budget) {
            trace.status = SolverStatus::BudgetExhausted;
            break;
        }
    }
    let plan = TransportPlan::from_solver(gamma, Some(opts.sinkhorn.tolerance));
    Ok((plan, trace))
}
