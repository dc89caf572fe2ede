//! Fused Gromov-Wasserstein objective, gradient and mirror-descent solvers.
//!
//! The structure term uses the squared loss, so the objective over the
//! coupling polytope reduces to
//!
//! ```text
//! f(pi) = (1 - alpha) <D, pi> - 2 alpha <A1 pi A2, pi>
//! FGW   = f(pi) + alpha (mu1' (A1 o A1) mu1 + mu2' (A2 o A2) mu2)
//! ```
//!
//! Two solvers share the same entropic mirror-descent step
//! `pi <- pi o exp(-gamma grad f(pi))`:
//!
//! * [`solve_fgw_strict`] projects onto both marginals after every step with
//!   Sinkhorn scaling (a nested loop).
//! * [`solve_fgw_relaxed`] alternates a step + closed-form row projection with
//!   a step + closed-form column projection (a single loop). Only the column
//!   marginal holds exactly on exit.

use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{feature_distance_matrix, FeatureDistanceMatrix, Graph};

/// Smallest plan entry allowed before logarithms and divisions.
pub const PLAN_FLOOR: f64 = 1e-300;

/// Solver settings shared by the strict and relaxed FGW solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgwConfig {
    /// Structure/feature trade-off in `[0, 1]`; 0 is pure Wasserstein.
    pub alpha: f64,
    /// Exponent applied to the Euclidean feature distance.
    pub q: f64,
    /// Mirror-descent step size.
    pub gamma: f64,
    pub max_inner_iters: usize,
    /// Stop once `|f_t - f_{t-1}| / max(|f_{t-1}|, 1e-12)` drops to this.
    pub inner_tol: f64,
    /// L1 marginal tolerance for the strict Sinkhorn projection.
    pub projection_tol: f64,
    pub projection_max_iters: usize,
}

impl Default for FgwConfig {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            q: 2.0,
            gamma: 1.0,
            max_inner_iters: 300,
            inner_tol: 5e-4,
            projection_tol: 1e-9,
            projection_max_iters: 1000,
        }
    }
}

impl FgwConfig {
    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.q > 0.0) || !self.q.is_finite() {
            return Err(Error::Config(format!("q must be positive, got {}", self.q)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.max_inner_iters == 0 || self.projection_max_iters == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        if !(self.inner_tol >= 0.0) || !(self.projection_tol >= 0.0) {
            return Err(Error::Config("tolerances must be >= 0".into()));
        }
        Ok(())
    }
}

/// A transport plan together with its L1 marginal residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: Array2<f64>,
    row_marginal_error: f64,
    col_marginal_error: f64,
}

impl Coupling {
    /// Wraps a nonnegative plan, measuring its residuals against `mu1`/`mu2`.
    pub fn from_plan(plan: Array2<f64>, mu1: &Array1<f64>, mu2: &Array1<f64>) -> Result<Self> {
        if plan.dim() != (mu1.len(), mu2.len()) {
            return Err(Error::Dimension(format!(
                "plan is {:?}, measures are {} and {}",
                plan.dim(),
                mu1.len(),
                mu2.len()
            )));
        }
        if plan.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Solver("plan has negative or non-finite entries".into()));
        }
        let (row_marginal_error, col_marginal_error) = marginal_errors(&plan, mu1, mu2);
        Ok(Self {
            plan,
            row_marginal_error,
            col_marginal_error,
        })
    }

    /// The product coupling `mu1 mu2^T`.
    pub fn product(mu1: &Array1<f64>, mu2: &Array1<f64>) -> Self {
        let plan = outer(mu1, mu2);
        let (row_marginal_error, col_marginal_error) = marginal_errors(&plan, mu1, mu2);
        Self {
            plan,
            row_marginal_error,
            col_marginal_error,
        }
    }

    /// `diag(mu)`: each node matched to itself.
    pub fn identity(mu: &Array1<f64>) -> Self {
        Self {
            plan: Array2::from_diag(mu),
            row_marginal_error: 0.0,
            col_marginal_error: 0.0,
        }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }

    pub fn dim(&self) -> (usize, usize) {
        self.plan.dim()
    }

    /// L1 deviation of `pi 1` from `mu1`.
    pub fn row_marginal_error(&self) -> f64 {
        self.row_marginal_error
    }

    /// L1 deviation of `pi^T 1` from `mu2`.
    pub fn col_marginal_error(&self) -> f64 {
        self.col_marginal_error
    }

    pub fn total_mass(&self) -> f64 {
        self.plan.sum()
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn marginal_errors(plan: &Array2<f64>, mu1: &Array1<f64>, mu2: &Array1<f64>) -> (f64, f64) {
    let rows = plan.sum_axis(Axis(1));
    let cols = plan.sum_axis(Axis(0));
    let row_err = rows.iter().zip(mu1).map(|(r, m)| (r - m).abs()).sum();
    let col_err = cols.iter().zip(mu2).map(|(c, m)| (c - m).abs()).sum();
    (row_err, col_err)
}

/// Per-iteration record of a solver run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Constant-free objective `f(pi)` after each iteration.
    pub objective_per_iter: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Strict solver only: false if any Sinkhorn projection hit its cap.
    pub projections_converged: bool,
}

/// Output of an FGW solve.
#[derive(Debug, Clone)]
pub struct FgwSolution {
    /// Full FGW value, constant term included.
    pub value: f64,
    pub coupling: Coupling,
    pub trace: SolveTrace,
}

fn check_dims(plan: (usize, usize), d: &FeatureDistanceMatrix, a1: &Array2<f64>, a2: &Array2<f64>) -> Result<()> {
    let (n1, n2) = plan;
    if d.dim() != (n1, n2) || a1.dim() != (n1, n1) || a2.dim() != (n2, n2) {
        return Err(Error::Dimension(format!(
            "plan {:?}, costs {:?}, A1 {:?}, A2 {:?}",
            plan,
            d.dim(),
            a1.dim(),
            a2.dim()
        )));
    }
    Ok(())
}

fn frob(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

/// Constant-free FGW objective `f(pi)`.
pub fn fgw_objective(
    plan: &Array2<f64>,
    d: &FeatureDistanceMatrix,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    alpha: f64,
) -> Result<f64> {
    check_dims(plan.dim(), d, a1, a2)?;
    let cross = a1.dot(plan).dot(a2);
    Ok(objective_from_cross(plan, d.values(), &cross, alpha))
}

fn objective_from_cross(plan: &Array2<f64>, d: &Array2<f64>, cross: &Array2<f64>, alpha: f64) -> f64 {
    (1.0 - alpha) * frob(d, plan) - 2.0 * alpha * frob(cross, plan)
}

/// The term dropped from `f`: `alpha (mu1' (A1 o A1) mu1 + mu2' (A2 o A2) mu2)`.
pub fn fgw_constant(
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    mu1: &Array1<f64>,
    mu2: &Array1<f64>,
    alpha: f64,
) -> f64 {
    let quad = |a: &Array2<f64>, mu: &Array1<f64>| {
        let sq = a.mapv(|v| v * v);
        mu.dot(&sq.dot(mu))
    };
    alpha * (quad(a1, mu1) + quad(a2, mu2))
}

/// Full FGW value of a feasible plan: `f(pi)` plus the constant term.
pub fn fgw_full_value(
    plan: &Array2<f64>,
    d: &FeatureDistanceMatrix,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    mu1: &Array1<f64>,
    mu2: &Array1<f64>,
    alpha: f64,
) -> Result<f64> {
    if mu1.len() != plan.nrows() || mu2.len() != plan.ncols() {
        return Err(Error::Dimension("measure lengths do not match the plan".into()));
    }
    Ok(fgw_objective(plan, d, a1, a2, alpha)? + fgw_constant(a1, a2, mu1, mu2, alpha))
}

/// Gradient `(1 - alpha) D - 4 alpha A1 pi A2`.
pub fn fgw_gradient(
    plan: &Array2<f64>,
    d: &FeatureDistanceMatrix,
    a1: &Array2<f64>,
    a2: &Array2<f64>,
    alpha: f64,
) -> Result<Array2<f64>> {
    check_dims(plan.dim(), d, a1, a2)?;
    let cross = a1.dot(plan).dot(a2);
    Ok(gradient_from_cross(d.values(), &cross, alpha))
}

fn gradient_from_cross(d: &Array2<f64>, cross: &Array2<f64>, alpha: f64) -> Array2<f64> {
    let mut g = d * (1.0 - alpha);
    g.scaled_add(-4.0 * alpha, cross);
    g
}

/// Result of a Sinkhorn projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coupling: Coupling,
    pub converged: bool,
    pub sweeps: usize,
}

fn scale_rows(plan: &mut Array2<f64>, mu: &Array1<f64>) -> Result<()> {
    for (i, mut row) in plan.outer_iter_mut().enumerate() {
        let s = row.sum();
        if mu[i] == 0.0 {
            row.fill(0.0);
        } else if s > 0.0 && s.is_finite() {
            row *= mu[i] / s;
        } else {
            return Err(Error::Solver(format!("row {i} has mass {s} and cannot be scaled")));
        }
    }
    Ok(())
}

fn scale_cols(plan: &mut Array2<f64>, mu: &Array1<f64>) -> Result<()> {
    for (j, mut col) in plan.axis_iter_mut(Axis(1)).enumerate() {
        let s = col.sum();
        if mu[j] == 0.0 {
            col.fill(0.0);
        } else if s > 0.0 && s.is_finite() {
            col *= mu[j] / s;
        } else {
            return Err(Error::Solver(format!("column {j} has mass {s} and cannot be scaled")));
        }
    }
    Ok(())
}

/// KL projection onto `{pi >= 0 : pi 1 = mu1, pi^T 1 = mu2}` by alternating
/// row and column scaling, until both L1 residuals are within `tol` or
/// `max_iters` sweeps have run.
pub fn project_to_polytope(
    plan: &Array2<f64>,
    mu1: &Array1<f64>,
    mu2: &Array1<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<Projection> {
    if plan.dim() != (mu1.len(), mu2.len()) {
        return Err(Error::Dimension(format!(
            "plan is {:?}, measures are {} and {}",
            plan.dim(),
            mu1.len(),
            mu2.len()
        )));
    }
    if plan.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("plan has non-finite entries".into()));
    }
    let (r, c) = marginal_errors(plan, mu1, mu2);
    if r <= tol && c <= tol {
        return Ok(Projection {
            coupling: Coupling::from_plan(plan.mapv(|v| v.max(0.0)), mu1, mu2)?,
            converged: true,
            sweeps: 0,
        });
    }
    let mut p = plan.mapv(|v| v.max(PLAN_FLOOR));
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_iters {
        scale_rows(&mut p, mu1)?;
        scale_cols(&mut p, mu2)?;
        sweeps += 1;
        let (r, c) = marginal_errors(&p, mu1, mu2);
        if r <= tol && c <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        round_to_polytope(&mut p, mu1, mu2);
    }
    Ok(Projection {
        coupling: Coupling::from_plan(p, mu1, mu2)?,
        converged,
        sweeps,
    })
}

/// Makes a nearly feasible plan exactly feasible: shrink rows and columns
/// that carry too much mass, then spread the missing mass as a rank-one
/// correction. The L1 change is at most twice the marginal residual.
fn round_to_polytope(plan: &mut Array2<f64>, mu1: &Array1<f64>, mu2: &Array1<f64>) {
    for (mut row, m) in plan.outer_iter_mut().zip(mu1) {
        let s = row.sum();
        if s > *m {
            row *= m / s;
        }
    }
    for (mut col, m) in plan.axis_iter_mut(Axis(1)).zip(mu2) {
        let s = col.sum();
        if s > *m {
            col *= m / s;
        }
    }
    let err_r: Array1<f64> = (mu1 - &plan.sum_axis(Axis(1))).mapv(|v| v.max(0.0));
    let err_c: Array1<f64> = (mu2 - &plan.sum_axis(Axis(0))).mapv(|v| v.max(0.0));
    let missing = err_r.sum();
    if missing > 0.0 {
        Zip::indexed(&mut *plan).for_each(|(i, j), v| *v += err_r[i] * err_c[j] / missing);
    }
}

/// Entropic mirror step `pi <- pi o exp(-gamma grad)` computed in the log
/// domain; the result is rescaled by a positive constant, which every
/// subsequent marginal projection absorbs.
fn mirror_step(plan: &mut Array2<f64>, grad: &Array2<f64>, gamma: f64) {
    Zip::from(&mut *plan)
        .and(grad)
        .for_each(|p, g| *p = p.max(PLAN_FLOOR).ln() - gamma * g);
    let top = plan.fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    plan.mapv_inplace(|v| (v - top).exp().max(PLAN_FLOOR));
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / prev.abs().max(1e-12)
}

/// Everything a solver needs about one graph pair.
struct Instance<'a> {
    costs: Array2<f64>,
    a1: &'a Array2<f64>,
    a2: &'a Array2<f64>,
    mu1: &'a Array1<f64>,
    mu2: &'a Array1<f64>,
    alpha: f64,
}

impl<'a> Instance<'a> {
    fn new(g1: &'a Graph, g2: &'a Graph, cfg: &FgwConfig) -> Result<Self> {
        cfg.validate()?;
        let costs = feature_distance_matrix(g1, g2, cfg.q)?.into_inner();
        Ok(Self {
            costs,
            a1: g1.structure(),
            a2: g2.structure(),
            mu1: g1.mu(),
            mu2: g2.mu(),
            alpha: cfg.alpha,
        })
    }

    fn cross(&self, plan: &Array2<f64>) -> Array2<f64> {
        self.a1.dot(plan).dot(self.a2)
    }

    fn constant(&self) -> f64 {
        fgw_constant(self.a1, self.a2, self.mu1, self.mu2, self.alpha)
    }

    fn initial_plan(&self, init: Option<&Coupling>) -> Result<Array2<f64>> {
        let shape = (self.mu1.len(), self.mu2.len());
        match init {
            None => Ok(outer(self.mu1, self.mu2)),
            Some(c) if c.dim() == shape => Ok(c.plan().clone()),
            Some(c) => Err(Error::Dimension(format!(
                "initial coupling is {:?}, expected {:?}",
                c.dim(),
                shape
            ))),
        }
    }
}

/// Mirror descent with a full Sinkhorn projection after every step.
///
/// Starts from `init` (default: the product coupling), projected onto the
/// polytope first if it is not already feasible.
pub fn solve_fgw_strict(
    g1: &Graph,
    g2: &Graph,
    cfg: &FgwConfig,
    init: Option<&Coupling>,
) -> Result<FgwSolution> {
    let inst = Instance::new(g1, g2, cfg)?;
    let start = inst.initial_plan(init)?;
    let first = project_to_polytope(
        &start,
        inst.mu1,
        inst.mu2,
        cfg.projection_tol,
        cfg.projection_max_iters,
    )?;
    let mut projections_converged = first.converged;
    let mut plan = first.coupling.into_plan();
    let mut cross = inst.cross(&plan);
    let mut prev = objective_from_cross(&plan, &inst.costs, &cross, inst.alpha);

    let mut trace = SolveTrace::default();
    for _ in 0..cfg.max_inner_iters {
        let grad = gradient_from_cross(&inst.costs, &cross, inst.alpha);
        mirror_step(&mut plan, &grad, cfg.gamma);
        let proj = project_to_polytope(
            &plan,
            inst.mu1,
            inst.mu2,
            cfg.projection_tol,
            cfg.projection_max_iters,
        )?;
        projections_converged &= proj.converged;
        plan = proj.coupling.into_plan();
        cross = inst.cross(&plan);
        let cur = objective_from_cross(&plan, &inst.costs, &cross, inst.alpha);
        trace.objective_per_iter.push(cur);
        trace.iterations_used += 1;
        if relative_change(prev, cur) <= cfg.inner_tol {
            trace.converged = true;
            break;
        }
        prev = cur;
    }
    trace.projections_converged = projections_converged;
    let f = objective_from_cross(&plan, &inst.costs, &cross, inst.alpha);
    let value = f + inst.constant();
    let coupling = Coupling::from_plan(plan, inst.mu1, inst.mu2)?;
    Ok(FgwSolution {
        value,
        coupling,
        trace,
    })
}

/// Single-loop relaxed solver: each iteration takes a mirror step, rescales
/// rows to `mu1`, takes a second mirror step and rescales columns to `mu2`.
///
/// The column marginal is exact on exit; the row residual is reported in the
/// returned [`Coupling`]. The value is `f(pi)` plus the constant term.
pub fn solve_fgw_relaxed(
    g1: &Graph,
    g2: &Graph,
    cfg: &FgwConfig,
    init: Option<&Coupling>,
) -> Result<FgwSolution> {
    let inst = Instance::new(g1, g2, cfg)?;
    let mut plan = inst.initial_plan(init)?;
    if plan.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Solver("initial plan has negative or non-finite entries".into()));
    }
    plan.mapv_inplace(|v| v.max(PLAN_FLOOR));
    let mut cross = inst.cross(&plan);
    let mut prev = objective_from_cross(&plan, &inst.costs, &cross, inst.alpha);

    let mut trace = SolveTrace {
        projections_converged: true,
        ..Default::default()
    };
    for _ in 0..cfg.max_inner_iters {
        let grad = gradient_from_cross(&inst.costs, &cross, inst.alpha);
        mirror_step(&mut plan, &grad, cfg.gamma);
        scale_rows(&mut plan, inst.mu1)?;

        let grad = gradient_from_cross(&inst.costs, &inst.cross(&plan), inst.alpha);
        mirror_step(&mut plan, &grad, cfg.gamma);
        scale_cols(&mut plan, inst.mu2)?;

        cross = inst.cross(&plan);
        let cur = objective_from_cross(&plan, &inst.costs, &cross, inst.alpha);
        trace.objective_per_iter.push(cur);
        trace.iterations_used += 1;
        if relative_change(prev, cur) <= cfg.inner_tol {
            trace.converged = true;
            break;
        }
        prev = cur;
    }
    let value = objective_from_cross(&plan, &inst.costs, &cross, inst.alpha) + inst.constant();
    let coupling = Coupling::from_plan(plan, inst.mu1, inst.mu2)?;
    Ok(FgwSolution {
        value,
        coupling,
        trace,
    })
}

/// Wasserstein distance on features (`alpha = 0`), strict solver.
pub fn wasserstein_distance(g1: &Graph, g2: &Graph, cfg: &FgwConfig) -> Result<f64> {
    Ok(solve_fgw_strict(g1, g2, &cfg.with_alpha(0.0), None)?.value)
}

/// Gromov-Wasserstein distance on structure (`alpha = 1`), strict solver.
pub fn gw_distance(g1: &Graph, g2: &Graph, cfg: &FgwConfig) -> Result<f64> {
    Ok(solve_fgw_strict(g1, g2, &cfg.with_alpha(1.0), None)?.value)
}
