//! Sparse nonlinear programming: problem interface, derivative checks and a
//! primal-dual interior-point solver.
//!
//! Problems have the form
//!
//! ```text
//! min f(x)   s.t.   g_l <= c(x) <= g_u,   x_l <= x <= x_u
//! ```
//!
//! where rows with `g_l == g_u` are equalities. Infinite bounds are allowed.

mod ipm;
pub mod ldl;

pub use ipm::solve;

use std::fmt;
use std::time::Duration;

/// Callback interface of a sparse NLP. Derivative structures are fixed for
/// the lifetime of the problem; values must be deterministic functions of `x`.
pub trait NlpProblem {
    fn num_vars(&self) -> usize;
    fn num_constraints(&self) -> usize;
    /// `(x_l, x_u)`
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// `(g_l, g_u)`
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], c: &mut [f64]);

    /// `(row, col)` coordinates of the constraint Jacobian.
    fn jacobian_structure(&self) -> Vec<(usize, usize)>;
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);

    /// Lower-triangle `(row >= col)` coordinates of the Lagrangian Hessian.
    fn hessian_structure(&self) -> Vec<(usize, usize)>;
    /// Values of `obj_factor * ∇²f + Σ λ_i ∇²c_i` on [`Self::hessian_structure`].
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]);
}

/// Step acceptance rule of the interior-point line search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineSearch {
    /// Filter on (constraint violation, barrier objective) pairs; tolerates
    /// transient infeasibility, which long-horizon collocation problems need.
    #[default]
    Filter,
    /// Backtracking on the exact ℓ1 merit function; every accepted step
    /// lowers the merit.
    Merit,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Max-norm of constraint violation accepted at termination.
    pub tol_feas: f64,
    /// Scaled dual infeasibility and complementarity accepted at termination.
    pub tol_opt: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Linear barrier reduction factor, in (0, 1).
    pub mu_linear: f64,
    /// Superlinear barrier reduction exponent, > 1.
    pub mu_superlinear: f64,
    /// Fraction-to-boundary parameter.
    pub tau: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step-size contraction during backtracking, in (0, 1).
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Relative relaxation applied to finite bounds.
    pub bound_relax: f64,
    /// Minimal relative distance of the starting point from its bounds.
    pub bound_push: f64,
    pub line_search: LineSearch,
    /// Print the iteration table to standard output.
    pub print_log: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-6,
            tol_opt: 1e-6,
            max_iter: 3000,
            mu_init: 0.1,
            mu_linear: 0.2,
            mu_superlinear: 1.5,
            tau: 0.995,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            bound_relax: 1e-8,
            bound_push: 1e-2,
            line_search: LineSearch::Filter,
            print_log: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidParameter(m.to_string()));
        if !(self.tol_feas > 0.0 && self.tol_opt > 0.0) {
            return bad("solver tolerances must be > 0");
        }
        if !(self.mu_linear > 0.0 && self.mu_linear < 1.0) {
            return bad("barrier reduction factor must lie in (0, 1)");
        }
        if !(self.mu_superlinear > 1.0 && self.mu_superlinear < 2.0) {
            return bad("superlinear barrier exponent must lie in (1, 2)");
        }
        if !(self.mu_init > 0.0) {
            return bad("initial barrier parameter must be > 0");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("fraction-to-boundary parameter must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) || !(self.armijo > 0.0 && self.armijo < 0.5)
        {
            return bad("line-search parameters out of range");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max-iter",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
        })
    }
}

/// One row of the iteration table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterLog {
    pub iter: usize,
    pub objective: f64,
    pub inf_pr: f64,
    pub inf_du: f64,
    pub mu: f64,
    /// Accepted primal step length.
    pub step: f64,
    /// Hessian regularization used for the step.
    pub reg: f64,
    /// Merit function (barrier objective + ℓ1 penalty) after the step ...
    pub merit: f64,
    /// ... and before it, with the same barrier parameter and penalty weight.
    pub merit_before: f64,
    pub backtracks: usize,
}

impl IterLog {
    pub fn header() -> String {
        format!(
            "{:>5} {:>16} {:>10} {:>10} {:>9} {:>9} {:>8} {:>3}",
            "iter", "objective", "inf_pr", "inf_du", "mu", "step", "reg", "ls"
        )
    }
}

impl fmt::Display for IterLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>5} {:>16.9e} {:>10.3e} {:>10.3e} {:>9.2e} {:>9.2e} {:>8.1e} {:>3}",
            self.iter,
            self.objective,
            self.inf_pr,
            self.inf_du,
            self.mu,
            self.step,
            self.reg,
            self.backtracks
        )
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    /// Max-norm constraint violation (unscaled).
    pub inf_pr: f64,
    /// Max-norm dual infeasibility (scaled as for the termination test).
    pub inf_du: f64,
    /// Max-norm complementarity (scaled).
    pub complementarity: f64,
    /// Barrier parameters in the order they were used.
    pub mu_history: Vec<f64>,
    pub log: Vec<IterLog>,
    pub wall_time: Duration,
    /// Human-readable reason for non-optimal exits.
    pub message: String,
}

impl fmt::Display for SolveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "status          {}", self.status)?;
        writeln!(f, "iterations      {}", self.iterations)?;
        writeln!(f, "objective       {:.12e}", self.objective)?;
        writeln!(f, "inf_pr          {:.3e}", self.inf_pr)?;
        writeln!(f, "inf_du          {:.3e}", self.inf_du)?;
        writeln!(f, "complementarity {:.3e}", self.complementarity)?;
        if !self.message.is_empty() {
            writeln!(f, "message         {}", self.message)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: Vec<f64>,
    /// Constraint multipliers (sign convention: `∇f + Jᵀλ - z_l + z_u = 0`).
    pub lambda: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub report: SolveReport,
}

/// Coordinate-format sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Dense copy (duplicates summed); for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            d[r][c] += v;
        }
        d
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[r] += v * x[c];
        }
        y
    }

    /// `y = Aᵀ x`
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[c] += v * x[r];
        }
        y
    }
}

/// Objective gradient at `x`.
pub fn gradient<P: NlpProblem + ?Sized>(problem: &P, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; problem.num_vars()];
    problem.gradient(x, &mut g);
    g
}

/// Constraint Jacobian at `x`.
pub fn jacobian<P: NlpProblem + ?Sized>(problem: &P, x: &[f64]) -> SparseMatrix {
    let (rows, cols): (Vec<usize>, Vec<usize>) = problem.jacobian_structure().into_iter().unzip();
    let mut vals = vec![0.0; rows.len()];
    problem.jacobian_values(x, &mut vals);
    SparseMatrix {
        nrows: problem.num_constraints(),
        ncols: problem.num_vars(),
        rows,
        cols,
        vals,
    }
}

/// Worst mismatches between exact first derivatives and central differences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DerivativeCheck {
    pub gradient_rel: f64,
    pub jacobian_rel: f64,
    /// Largest |FD| entry outside the declared Jacobian pattern.
    pub outside_pattern: f64,
}

impl DerivativeCheck {
    pub fn worst(&self) -> f64 {
        self.gradient_rel.max(self.jacobian_rel).max(self.outside_pattern)
    }
}

/// Relative error used by [`check_derivatives`]: `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compare gradient and Jacobian against central differences with step `h`.
///
/// Entries smaller than `floor` in magnitude are compared absolutely. Every
/// column is perturbed, so the cost is `2 n` objective/constraint
/// evaluations.
pub fn check_derivatives<P: NlpProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    h: f64,
    floor: f64,
) -> DerivativeCheck {
    let n = problem.num_vars();
    let m = problem.num_constraints();
    let g = gradient(problem, x);
    let jac = jacobian(problem, x);
    let mut dense_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for ((&r, &c), &v) in jac.rows.iter().zip(&jac.cols).zip(&jac.vals) {
        match dense_cols[c].iter_mut().find(|(rr, _)| *rr == r) {
            Some(e) => e.1 += v,
            None => dense_cols[c].push((r, v)),
        }
    }
    let mut out = DerivativeCheck::default();
    let mut xp = x.to_vec();
    let (mut cp, mut cm) = (vec![0.0; m], vec![0.0; m]);
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp = problem.objective(&xp);
        problem.constraints(&xp, &mut cp);
        xp[j] = x[j] - h;
        let fm = problem.objective(&xp);
        problem.constraints(&xp, &mut cm);
        xp[j] = x[j];
        out.gradient_rel = out.gradient_rel.max(rel_err(g[j], (fp - fm) / (2.0 * h), floor));
        let mut exact = vec![0.0; m];
        let mut declared = vec![false; m];
        for &(r, v) in &dense_cols[j] {
            exact[r] = v;
            declared[r] = true;
        }
        for i in 0..m {
            let fd = (cp[i] - cm[i]) / (2.0 * h);
            if declared[i] {
                out.jacobian_rel = out.jacobian_rel.max(rel_err(exact[i], fd, floor));
            } else {
                out.outside_pattern = out.outside_pattern.max(fd.abs() / floor.max(1.0));
            }
        }
    }
    out
}

/// Worst relative error of the Lagrangian Hessian against central
/// differences of the Lagrangian gradient.
pub fn check_hessian<P: NlpProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    lambda: &[f64],
    h: f64,
    floor: f64,
) -> f64 {
    let n = problem.num_vars();
    let lag_grad = |x: &[f64]| {
        let mut g = gradient(problem, x);
        let jt = jacobian(problem, x).tmul_vec(lambda);
        g.iter_mut().zip(jt).for_each(|(a, b)| *a += b);
        g
    };
    let structure = problem.hessian_structure();
    let mut vals = vec![0.0; structure.len()];
    problem.hessian_values(x, 1.0, lambda, &mut vals);
    let mut dense = vec![vec![0.0; n]; n];
    for (&(r, c), &v) in structure.iter().zip(&vals) {
        dense[r][c] += v;
        if r != c {
            dense[c][r] += v;
        }
    }
    let mut worst = 0.0f64;
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        let gp = lag_grad(&xp);
        xp[j] = x[j] - h;
        let gm = lag_grad(&xp);
        xp[j] = x[j];
        for i in 0..n {
            worst = worst.max(rel_err(dense[i][j], (gp[i] - gm[i]) / (2.0 * h), floor));
        }
    }
    worst
}
