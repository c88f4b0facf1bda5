//! Primal-dual interior-point method with a monotone barrier update.
//!
//! Inequality rows get a slack `s` (`c_I(x) - s = 0`, `g_l <= s <= g_u`) so
//! that all inequalities become simple bounds handled by the log barrier.
//! Newton steps come from the reduced KKT system in which the slacks have
//! been eliminated:
//!
//! ```text
//! [ W + Σx + δw I        Jᵀ       ] [dx]   [ -r_x ]
//! [ J              -(D + δc I)    ] [dλ] = [ -r_c ]
//! ```
//!
//! with `D = 0` on equality rows and `D = 1/(Σs + δw)` on inequality rows.
//! `δw` is raised until the factorization has inertia `(n, m, 0)`, which
//! makes the step a descent direction.
//!
//! Steps are accepted by a filter line search on the pair (constraint
//! violation, barrier objective): a trial point must improve one of the two
//! enough and must not be dominated by a filter entry. A rejected full step
//! gets up to [`MAX_SOC`] second-order corrections before backtracking.
//! [`LineSearch::Merit`] switches to backtracking on the ℓ1 merit function
//! `φ_μ(x, s) + ν‖c(x) - s‖₁` instead.

use std::time::Instant;

use super::ldl::{adjacency, reverse_cuthill_mckee, sym_matvec, LdlFactor, LdlSymbolic, SymmetricPattern};
use super::{IterLog, LineSearch, NlpProblem, SolveReport, SolveResult, SolveStatus, SolverOptions};
use crate::error::{Error, Result};

const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const S_MAX: f64 = 100.0;
const DELTA_W_FIRST: f64 = 1e-4;
const DELTA_W_MIN: f64 = 1e-20;
const DELTA_W_MAX: f64 = 1e40;
const LAMBDA_INIT_MAX: f64 = 1e3;
/// Second-order corrections tried per iteration.
const MAX_SOC: usize = 4;
/// Required infeasibility reduction between consecutive corrections.
const SOC_FACTOR: f64 = 0.99;
// filter line-search constants
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const DELTA_SWITCH: f64 = 1.0;

/// Bound bookkeeping for the combined primal vector `w = (x, s)`.
struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
    has_lo: Vec<bool>,
    has_hi: Vec<bool>,
}

impl Bounds {
    fn nw(&self) -> usize {
        self.lo.len()
    }
}

struct Kkt {
    pattern: SymmetricPattern,
    symbolic: LdlSymbolic,
    hess_len: usize,
    jac_len: usize,
    n: usize,
    m: usize,
}

impl Kkt {
    // entry layout: [hessian | x diagonal | jacobian | constraint diagonal]
    fn new(n: usize, m: usize, hess: &[(usize, usize)], jac: &[(usize, usize)]) -> Self {
        let mut rows = Vec::with_capacity(hess.len() + jac.len() + n + m);
        let mut cols = Vec::with_capacity(rows.capacity());
        for &(r, c) in hess {
            rows.push(r.max(c));
            cols.push(r.min(c));
        }
        rows.extend(0..n);
        cols.extend(0..n);
        for &(r, c) in jac {
            rows.push(n + r);
            cols.push(c);
        }
        rows.extend(n..n + m);
        cols.extend(n..n + m);
        let pattern = SymmetricPattern {
            dim: n + m,
            rows,
            cols,
        };
        let symbolic = LdlSymbolic::new(&pattern, ordering(n, m, hess, jac));
        Self {
            pattern,
            symbolic,
            hess_len: hess.len(),
            jac_len: jac.len(),
            n,
            m,
        }
    }
}

/// Elimination order: variables first in a bandwidth-reducing order (the
/// natural order or reverse Cuthill–McKee, whichever fills less), each
/// constraint row placed right after the last variable it touches. Rows are
/// therefore eliminated after their variables and their pivots are negative
/// Schur complements rather than tiny regularization values.
fn ordering(n: usize, m: usize, hess: &[(usize, usize)], jac: &[(usize, usize)]) -> Vec<usize> {
    let mut row_vars: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(r, c) in jac {
        row_vars[r].push(c);
    }
    let with_rows = |var_order: &[usize]| -> Vec<usize> {
        let mut pos = vec![0usize; n];
        for (i, &v) in var_order.iter().enumerate() {
            pos[v] = i;
        }
        let mut after: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for (r, vars) in row_vars.iter().enumerate() {
            match vars.iter().map(|&v| pos[v]).max() {
                Some(p) => after[p].push(n + r),
                None => after[n].push(n + r),
            }
        }
        let mut out = Vec::with_capacity(n + m);
        for (i, &v) in var_order.iter().enumerate() {
            out.push(v);
            out.extend(&after[i]);
        }
        out.extend(&after[n]);
        out
    };

    // variable graph: Hessian couplings plus variables sharing a constraint
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    for &(r, c) in hess {
        if r != c {
            rows.push(r.max(c));
            cols.push(r.min(c));
        }
    }
    for vars in &row_vars {
        let mut vs = vars.clone();
        vs.sort_unstable();
        vs.dedup();
        // a path through the row's variables keeps the graph sparse while
        // still linking them
        for w in vs.windows(2) {
            rows.push(w[1]);
            cols.push(w[0]);
        }
    }
    let var_graph = SymmetricPattern { dim: n, rows, cols };
    let natural: Vec<usize> = (0..n).collect();
    let rcm = reverse_cuthill_mckee(&adjacency(&var_graph));

    let mut kkt_rows = Vec::new();
    let mut kkt_cols = Vec::new();
    for &(r, c) in hess {
        kkt_rows.push(r.max(c));
        kkt_cols.push(r.min(c));
    }
    for &(r, c) in jac {
        kkt_rows.push(n + r);
        kkt_cols.push(c);
    }
    let kkt = SymmetricPattern {
        dim: n + m,
        rows: kkt_rows,
        cols: kkt_cols,
    };
    let a = with_rows(&natural);
    let b = with_rows(&rcm);
    let fill_a = LdlSymbolic::new(&kkt, a.clone()).factor_nnz();
    let fill_b = LdlSymbolic::new(&kkt, b.clone()).factor_nnz();
    if fill_b < fill_a {
        b
    } else {
        a
    }
}

struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    lambda: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Eval {
    f: f64,
    c: Vec<f64>,
}

/// A primal-dual search direction with its fraction-to-boundary step limits.
#[derive(Clone)]
struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dlam: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
    alpha_max: f64,
    alpha_z: f64,
}

impl Direction {
    fn new(it: &Iterate, b: &Bounds, dx: Vec<f64>, dlam: Vec<f64>, ds: Vec<f64>, mu: f64, tau: f64) -> Self {
        let n = dx.len();
        let nw = b.nw();
        let w_of = |i: usize| if i < n { it.x[i] } else { it.s[i - n] };
        let dw = |i: usize| if i < n { dx[i] } else { ds[i - n] };
        let mut dzl = vec![0.0; nw];
        let mut dzu = vec![0.0; nw];
        let mut alpha_max = 1.0f64;
        let mut alpha_z = 1.0f64;
        for i in 0..nw {
            let (w, step) = (w_of(i), dw(i));
            if b.has_lo[i] {
                let g = w - b.lo[i];
                dzl[i] = mu / g - it.zl[i] - it.zl[i] / g * step;
                if step < 0.0 {
                    alpha_max = alpha_max.min(-tau * g / step);
                }
                if dzl[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * it.zl[i] / dzl[i]);
                }
            }
            if b.has_hi[i] {
                let g = b.hi[i] - w;
                dzu[i] = mu / g - it.zu[i] + it.zu[i] / g * step;
                if step > 0.0 {
                    alpha_max = alpha_max.min(tau * g / step);
                }
                if dzu[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * it.zu[i] / dzu[i]);
                }
            }
        }
        Self {
            dx,
            ds,
            dlam,
            dzl,
            dzu,
            alpha_max,
            alpha_z,
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Solve `problem` from the starting point `x0`.
///
/// Returns `Err` only for malformed input (dimension mismatch, crossed
/// bounds, invalid options). Algorithmic failures are reported through
/// [`SolveReport::status`] together with the final residuals.
pub fn solve<P: NlpProblem + ?Sized>(problem: &P, x0: &[f64], opts: &SolverOptions) -> Result<SolveResult> {
    opts.validate()?;
    let t0 = Instant::now();
    let n = problem.num_vars();
    let m = problem.num_constraints();
    if x0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("starting point is not finite".into()));
    }
    let (mut xl, mut xu) = problem.var_bounds();
    let (mut gl, mut gu) = problem.constraint_bounds();
    if xl.len() != n || xu.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: xl.len().min(xu.len()),
        });
    }
    if gl.len() != m || gu.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: gl.len().min(gu.len()),
        });
    }
    for (i, (l, u)) in xl.iter().zip(&xu).enumerate() {
        if !(l <= u) {
            return Err(Error::InvalidParameter(format!("variable {i}: lower bound {l} > upper bound {u}")));
        }
    }
    for (i, (l, u)) in gl.iter().zip(&gu).enumerate() {
        if !(l <= u) {
            return Err(Error::InvalidParameter(format!("constraint {i}: lower bound {l} > upper bound {u}")));
        }
        if *l == f64::NEG_INFINITY && *u == f64::INFINITY {
            return Err(Error::InvalidParameter(format!("constraint {i} has no finite bound")));
        }
    }

    let relax = |b: &mut Vec<f64>, sign: f64| {
        for v in b.iter_mut().filter(|v| v.is_finite()) {
            *v += sign * opts.bound_relax * v.abs().max(1.0);
        }
    };
    relax(&mut xl, -1.0);
    relax(&mut xu, 1.0);
    let is_eq: Vec<bool> = gl.iter().zip(&gu).map(|(l, u)| l == u).collect();
    let ineq: Vec<usize> = (0..m).filter(|&i| !is_eq[i]).collect();
    let mi = ineq.len();
    let mut sl: Vec<f64> = ineq.iter().map(|&i| gl[i]).collect();
    let mut su: Vec<f64> = ineq.iter().map(|&i| gu[i]).collect();
    relax(&mut sl, -1.0);
    relax(&mut su, 1.0);
    let target: Vec<f64> = (0..m).map(|i| if is_eq[i] { gl[i] } else { 0.0 }).collect();
    gl.clear();
    gu.clear();

    let lo: Vec<f64> = xl.iter().chain(&sl).copied().collect();
    let hi: Vec<f64> = xu.iter().chain(&su).copied().collect();
    let bounds = Bounds {
        has_lo: lo.iter().map(|v| v.is_finite()).collect(),
        has_hi: hi.iter().map(|v| v.is_finite()).collect(),
        lo,
        hi,
    };
    let nw = bounds.nw();
    let n_z = bounds.has_lo.iter().filter(|&&b| b).count() + bounds.has_hi.iter().filter(|&&b| b).count();

    let jac_structure = problem.jacobian_structure();
    let hess_structure = problem.hessian_structure();
    let kkt = Kkt::new(n, m, &hess_structure, &jac_structure);

    // constraint residual d(w) = [c_E - b; c_I - s]
    let residual = |c: &[f64], s: &[f64]| -> Vec<f64> {
        let mut d: Vec<f64> = c.iter().zip(&target).map(|(c, t)| c - t).collect();
        for (k, &i) in ineq.iter().enumerate() {
            d[i] = c[i] - s[k];
        }
        d
    };
    let evaluate = |x: &[f64]| -> Option<Eval> {
        let f = problem.objective(x);
        let mut c = vec![0.0; m];
        problem.constraints(x, &mut c);
        (f.is_finite() && c.iter().all(|v| v.is_finite())).then_some(Eval { f, c })
    };

    // starting point pushed into the interior
    let push = |v: f64, lo: f64, hi: f64| -> f64 {
        let (has_lo, has_hi) = (lo.is_finite(), hi.is_finite());
        let width = hi - lo;
        let mut v = v;
        if has_lo {
            let mut p = opts.bound_push * lo.abs().max(1.0);
            if has_hi {
                p = p.min(opts.bound_push * width);
            }
            v = v.max(lo + p);
        }
        if has_hi {
            let mut p = opts.bound_push * hi.abs().max(1.0);
            if has_lo {
                p = p.min(opts.bound_push * width);
            }
            v = v.min(hi - p);
        }
        if has_lo && has_hi && !(v > lo && v < hi) {
            v = 0.5 * (lo + hi);
        }
        v
    };
    let x: Vec<f64> = (0..n).map(|i| push(x0[i], bounds.lo[i], bounds.hi[i])).collect();
    let mut cur = match evaluate(&x) {
        Some(e) => e,
        None => {
            return Err(Error::InvalidParameter(
                "objective or constraints not finite at the starting point".into(),
            ))
        }
    };
    let s: Vec<f64> = ineq
        .iter()
        .enumerate()
        .map(|(k, &i)| push(cur.c[i], bounds.lo[n + k], bounds.hi[n + k]))
        .collect();
    let mut it = Iterate {
        x,
        s,
        lambda: vec![0.0; m],
        zl: bounds.has_lo.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        zu: bounds.has_hi.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    };

    let mut grad = vec![0.0; n];
    let mut jac_vals = vec![0.0; jac_structure.len()];
    let mut hess_vals = vec![0.0; hess_structure.len()];
    problem.gradient(&it.x, &mut grad);
    problem.jacobian_values(&it.x, &mut jac_vals);

    let jt_mul = |vals: &[f64], y: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&(r, c), &v) in jac_structure.iter().zip(vals) {
            out[c] += v * y[r];
        }
        out
    };
    let w_of = |it: &Iterate, i: usize| if i < n { it.x[i] } else { it.s[i - n] };
    let mut slack_of = vec![usize::MAX; m];
    for (k, &i) in ineq.iter().enumerate() {
        slack_of[i] = k;
    }
    let hess_pattern = SymmetricPattern {
        dim: n,
        rows: hess_structure.iter().map(|&(r, c)| r.max(c)).collect(),
        cols: hess_structure.iter().map(|&(r, c)| r.min(c)).collect(),
    };

    // least-squares multiplier estimate
    if m > 0 {
        let mut vals = vec![0.0; kkt.pattern.rows.len()];
        let base = kkt.hess_len;
        vals[base..base + n].iter_mut().for_each(|v| *v = 1.0);
        vals[base + n..base + n + kkt.jac_len].copy_from_slice(&jac_vals);
        let cd = base + n + kkt.jac_len;
        for i in 0..m {
            vals[cd + i] = if is_eq[i] { 0.0 } else { -1.0 };
        }
        let fac = kkt.symbolic.factor(&vals);
        if fac.inertia.positive == n && fac.inertia.negative == m {
            let mut rhs = vec![0.0; n + m];
            for i in 0..n {
                rhs[i] = -(grad[i] - it.zl[i] + it.zu[i]);
            }
            for (k, &i) in ineq.iter().enumerate() {
                rhs[n + i] = it.zl[n + k] - it.zu[n + k];
            }
            kkt.symbolic.solve(&fac, &mut rhs);
            let lam = &rhs[n..];
            if max_abs(lam) <= LAMBDA_INIT_MAX && lam.iter().all(|v| v.is_finite()) {
                it.lambda.copy_from_slice(lam);
            }
        }
    }

    let mu_min = opts.tol_feas.min(opts.tol_opt) / (KAPPA_EPS + 1.0);
    let mut mu = opts.mu_init;
    let mut mu_history = vec![mu];
    let mut nu = 1.0;
    let mut last_delta_w = 0.0;
    let theta_init = l1(&residual(&cur.c, &it.s)).max(1.0);
    let theta_max = 1e4 * theta_init;
    let theta_min = 1e-4 * theta_init;
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut log = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut message = String::new();
    let mut iterations = 0;
    if opts.print_log {
        println!("{}", IterLog::header());
    }

    let mut measures;
    loop {
        // --- optimality measures -----------------------------------------
        let d = residual(&cur.c, &it.s);
        let jtl = jt_mul(&jac_vals, &it.lambda);
        let mut grad_lag = vec![0.0; nw];
        for i in 0..n {
            grad_lag[i] = grad[i] + jtl[i] - it.zl[i] + it.zu[i];
        }
        for (k, &i) in ineq.iter().enumerate() {
            grad_lag[n + k] = -it.lambda[i] - it.zl[n + k] + it.zu[n + k];
        }
        let z1 = l1(&it.zl) + l1(&it.zu);
        let s_d = ((l1(&it.lambda) + z1) / ((m + n_z).max(1) as f64)).max(S_MAX) / S_MAX;
        let s_c = (z1 / (n_z.max(1) as f64)).max(S_MAX) / S_MAX;
        let compl = |target_mu: f64| -> f64 {
            let mut worst = 0.0f64;
            for i in 0..nw {
                let w = w_of(&it, i);
                if bounds.has_lo[i] {
                    worst = worst.max(((w - bounds.lo[i]) * it.zl[i] - target_mu).abs());
                }
                if bounds.has_hi[i] {
                    worst = worst.max(((bounds.hi[i] - w) * it.zu[i] - target_mu).abs());
                }
            }
            worst / s_c
        };
        let inf_pr = max_abs(&d);
        let inf_du = max_abs(&grad_lag) / s_d;
        let compl0 = compl(0.0);
        measures = (inf_pr, inf_du, compl0);
        if inf_pr <= opts.tol_feas && inf_du <= opts.tol_opt && compl0 <= opts.tol_opt {
            status = SolveStatus::Optimal;
            break;
        }
        if iterations >= opts.max_iter {
            message = format!("iteration limit {} reached", opts.max_iter);
            break;
        }

        // --- barrier update ----------------------------------------------
        loop {
            let e_mu = inf_pr.max(inf_du).max(compl(mu));
            if e_mu > KAPPA_EPS * mu || mu <= mu_min {
                break;
            }
            let next = (opts.mu_linear * mu).min(mu.powf(opts.mu_superlinear)).max(mu_min);
            if next >= mu {
                break;
            }
            mu = next;
            mu_history.push(mu);
            filter.clear();
        }

        // --- Newton system -------------------------------------------------
        problem.hessian_values(&it.x, 1.0, &it.lambda, &mut hess_vals);
        let mut sigma = vec![0.0; nw];
        let mut bar_grad = vec![0.0; nw]; // gradient of the barrier terms
        for i in 0..nw {
            let w = w_of(&it, i);
            if bounds.has_lo[i] {
                let g = w - bounds.lo[i];
                sigma[i] += it.zl[i] / g;
                bar_grad[i] -= mu / g;
            }
            if bounds.has_hi[i] {
                let g = bounds.hi[i] - w;
                sigma[i] += it.zu[i] / g;
                bar_grad[i] += mu / g;
            }
        }
        let mut r_x = vec![0.0; n];
        for i in 0..n {
            r_x[i] = grad[i] + jtl[i] + bar_grad[i];
        }
        let r_s: Vec<f64> = ineq
            .iter()
            .enumerate()
            .map(|(k, &i)| -it.lambda[i] + bar_grad[n + k])
            .collect();

        let mut forced_delta = 0.0;
        let mut accepted = false;
        for _attempt in 0..6 {
            let Some(fk) = factor_kkt(
                &kkt,
                &hess_vals,
                &jac_vals,
                &sigma,
                &is_eq,
                &slack_of,
                mu,
                last_delta_w,
                forced_delta,
            ) else {
                break;
            };
            let delta_w = fk.delta_w;
            last_delta_w = delta_w;
            let newton = |d: &[f64]| {
                direction(&kkt, &fk, &sigma, &is_eq, &ineq, &slack_of, &r_x, &r_s, d).map(|(dx, dlam, ds)| {
                    Direction::new(&it, &bounds, dx, dlam, ds, mu, opts.tau)
                })
            };
            let Some(dir) = newton(&d) else {
                break;
            };

            // merit function pieces
            let barrier = |x: &[f64], s: &[f64], f: f64| -> f64 {
                let mut phi = f;
                for i in 0..nw {
                    let w = if i < n { x[i] } else { s[i - n] };
                    if bounds.has_lo[i] {
                        phi -= mu * (w - bounds.lo[i]).ln();
                    }
                    if bounds.has_hi[i] {
                        phi -= mu * (bounds.hi[i] - w).ln();
                    }
                }
                phi
            };
            let theta = l1(&d);
            let phi0 = barrier(&it.x, &it.s, cur.f);
            let mut dphi = 0.0;
            for i in 0..n {
                dphi += (grad[i] + bar_grad[i]) * dir.dx[i];
            }
            for k in 0..mi {
                dphi += bar_grad[n + k] * dir.ds[k];
            }
            // curvature of the model along the step
            let mut hdx = vec![0.0; n];
            sym_matvec(&hess_pattern, &hess_vals, &dir.dx, &mut hdx);
            let mut quad = 0.0;
            for i in 0..n {
                quad += dir.dx[i] * (hdx[i] + (sigma[i] + delta_w) * dir.dx[i]);
            }
            for k in 0..mi {
                quad += dir.ds[k] * (sigma[n + k] + delta_w) * dir.ds[k];
            }
            if theta > 0.0 {
                let nu_trial = (dphi + 0.5 * quad.max(0.0)) / (0.9 * theta);
                if nu < nu_trial {
                    nu = nu_trial + 1.0;
                }
            }
            let merit0 = phi0 + nu * theta;
            let slope = dphi - nu * theta;
            let sufficient = |merit: f64, alpha: f64| {
                merit <= merit0 + opts.armijo * alpha * slope.min(0.0) || (slope >= 0.0 && merit <= merit0)
            };
            let try_point = |dir: &Direction, alpha: f64| -> Option<(Vec<f64>, Vec<f64>, Eval, f64, f64)> {
                let xt: Vec<f64> = (0..n).map(|i| it.x[i] + alpha * dir.dx[i]).collect();
                let st: Vec<f64> = (0..mi).map(|k| it.s[k] + alpha * dir.ds[k]).collect();
                let e = evaluate(&xt)?;
                let theta_t = l1(&residual(&e.c, &st));
                let phi_t = barrier(&xt, &st, e.f);
                (theta_t.is_finite() && phi_t.is_finite()).then_some((xt, st, e, theta_t, phi_t))
            };
            // corrected residual `alpha·d(w) + d(w_trial)`
            let soc_residual = |alpha: f64, d_trial: &[f64]| -> Vec<f64> {
                d.iter().zip(d_trial).map(|(a, b)| alpha * a + b).collect()
            };
            let residual_at = |x: &[f64], s: &[f64]| -> Vec<f64> {
                let mut c = vec![0.0; m];
                problem.constraints(x, &mut c);
                residual(&c, s)
            };

            let tiny = dir
                .dx
                .iter()
                .chain(&dir.ds)
                .enumerate()
                .all(|(i, dv)| dv.abs() <= 1e-14 * (1.0 + w_of(&it, i).abs()));
            let mut chosen: Option<(Direction, f64, Vec<f64>, Vec<f64>, Eval, f64)> = None;
            let mut backtracks = 0;
            let mut corrections = 0;

            if opts.line_search == LineSearch::Filter && !tiny {
                let switching =
                    |alpha: f64| dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > DELTA_SWITCH * theta.powf(S_THETA);
                // Some(augment) when the trial point is acceptable
                let acceptable = |theta_t: f64, phi_t: f64, alpha: f64| -> Option<bool> {
                    if theta_t > theta_max || filter.iter().any(|&(tf, pf)| theta_t >= tf && phi_t >= pf) {
                        return None;
                    }
                    if theta <= theta_min && switching(alpha) {
                        (phi_t <= phi0 + opts.armijo * alpha * dphi).then_some(false)
                    } else {
                        (theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t <= phi0 - GAMMA_PHI * theta)
                            .then_some(true)
                    }
                };
                let alpha_min = GAMMA_ALPHA
                    * if dphi < 0.0 {
                        let base = GAMMA_THETA.min(GAMMA_PHI * theta / -dphi);
                        if theta <= theta_min {
                            base.min(DELTA_SWITCH * theta.powf(S_THETA) / (-dphi).powf(S_PHI))
                        } else {
                            base
                        }
                    } else {
                        GAMMA_THETA
                    };
                let mut augment = false;
                let mut alpha = dir.alpha_max;
                while alpha >= alpha_min && backtracks <= opts.max_backtracks {
                    if let Some((xt, st, e, theta_t, phi_t)) = try_point(&dir, alpha) {
                        if let Some(aug) = acceptable(theta_t, phi_t, alpha) {
                            augment = aug;
                            chosen = Some((dir.clone(), alpha, xt, st, e, phi_t + nu * theta_t));
                            break;
                        }
                        if backtracks == 0 && theta_t >= theta {
                            let first = (theta_t, soc_residual(alpha, &residual_at(&xt, &st)));
                            if let Some((c, aug, n_soc)) = second_order_correction(first, &|d_soc: &[f64]| newton(d_soc), &|cdir: &Direction| {
                                let a = cdir.alpha_max;
                                try_point(cdir, a).map(|(xc, sc, ec, th, ph)| {
                                    let dc = residual_at(&xc, &sc);
                                    ((cdir.clone(), a, xc, sc, ec, ph + nu * th), acceptable(th, ph, dir.alpha_max), th, dc)
                                })
                            }) {
                                corrections = n_soc;
                                augment = aug;
                                chosen = Some(c);
                                break;
                            }
                        }
                    }
                    alpha *= opts.backtrack;
                    backtracks += 1;
                }
                if chosen.is_some() && augment {
                    filter.push(((1.0 - GAMMA_THETA) * theta, phi0 - GAMMA_PHI * theta));
                }
            }

            if chosen.is_none() {
                // exact-penalty backtracking; also the fallback when the
                // filter rejects every step (stands in for a restoration phase)
                if opts.line_search == LineSearch::Filter && !tiny {
                    filter.clear();
                }
                let mut alpha = dir.alpha_max;
                let mut merit_backtracks = 0;
                while merit_backtracks <= opts.max_backtracks {
                    if let Some((xt, st, e, theta_t, phi_t)) = try_point(&dir, alpha) {
                        let merit = phi_t + nu * theta_t;
                        if sufficient(merit, alpha) || tiny {
                            chosen = Some((dir.clone(), alpha, xt, st, e, merit));
                            break;
                        }
                        if merit_backtracks == 0 && theta_t >= theta && theta > 0.0 {
                            let first = (theta_t, soc_residual(alpha, &residual_at(&xt, &st)));
                            if let Some((c, _, n_soc)) = second_order_correction(first, &|d_soc: &[f64]| newton(d_soc), &|cdir: &Direction| {
                                let a = cdir.alpha_max;
                                try_point(cdir, a).map(|(xc, sc, ec, th, ph)| {
                                    let dc = residual_at(&xc, &sc);
                                    let mc = ph + nu * th;
                                    ((cdir.clone(), a, xc, sc, ec, mc), sufficient(mc, dir.alpha_max).then_some(false), th, dc)
                                })
                            }) {
                                corrections += n_soc;
                                chosen = Some(c);
                                break;
                            }
                        }
                    }
                    alpha *= opts.backtrack;
                    merit_backtracks += 1;
                }
                backtracks += merit_backtracks;
            }
            let Some((used, alpha, xt, st, e, merit)) = chosen else {
                // shorten the step by regularizing the Hessian harder
                forced_delta = (10.0 * forced_delta).max(DELTA_W_FIRST).max(10.0 * delta_w);
                continue;
            };

            it.x = xt;
            it.s = st;
            for i in 0..m {
                it.lambda[i] += alpha * used.dlam[i];
            }
            for i in 0..nw {
                let w = w_of(&it, i);
                if bounds.has_lo[i] {
                    let g = w - bounds.lo[i];
                    let z = it.zl[i] + used.alpha_z * used.dzl[i];
                    it.zl[i] = z.clamp(mu / (KAPPA_SIGMA * g), KAPPA_SIGMA * mu / g);
                }
                if bounds.has_hi[i] {
                    let g = bounds.hi[i] - w;
                    let z = it.zu[i] + used.alpha_z * used.dzu[i];
                    it.zu[i] = z.clamp(mu / (KAPPA_SIGMA * g), KAPPA_SIGMA * mu / g);
                }
            }
            cur = e;
            problem.gradient(&it.x, &mut grad);
            problem.jacobian_values(&it.x, &mut jac_vals);
            iterations += 1;
            let entry = IterLog {
                iter: iterations,
                objective: cur.f,
                inf_pr: max_abs(&residual(&cur.c, &it.s)),
                inf_du,
                mu,
                step: alpha,
                reg: delta_w,
                merit,
                merit_before: merit0,
                backtracks: backtracks + corrections,
            };
            if opts.print_log {
                println!("{entry}");
            }
            log.push(entry);
            accepted = true;
            break;
        }
        if !accepted {
            if inf_pr > opts.tol_feas {
                status = SolveStatus::Infeasible;
                message = format!(
                    "line search failed with constraint violation {inf_pr:.3e}; problem may be locally infeasible"
                );
            } else {
                status = SolveStatus::NumericalFailure;
                message = "line search failed after Hessian regularization".into();
            }
            break;
        }
    }

    // unpack multipliers: bound duals on x, constraint multipliers as-is
    let report = SolveReport {
        status,
        iterations,
        objective: cur.f,
        inf_pr: measures.0,
        inf_du: measures.1,
        complementarity: measures.2,
        mu_history,
        log,
        wall_time: t0.elapsed(),
        message,
    };
    if opts.print_log {
        println!("{report}");
    }
    Ok(SolveResult {
        x: it.x,
        lambda: it.lambda,
        z_lower: it.zl[..n].to_vec(),
        z_upper: it.zu[..n].to_vec(),
        report,
    })
}

/// Regularized KKT factorization with inertia `(n, m, 0)`.
struct Factored {
    fac: LdlFactor,
    vals: Vec<f64>,
    delta_w: f64,
}

/// Factor the regularized KKT matrix with inertia correction, or `None` if
/// no regularization gives the right inertia.
fn factor_kkt(
    kkt: &Kkt,
    hess_vals: &[f64],
    jac_vals: &[f64],
    sigma: &[f64],
    is_eq: &[bool],
    slack_of: &[usize],
    mu: f64,
    last_delta_w: f64,
    forced_delta: f64,
) -> Option<Factored> {
    let (n, m) = (kkt.n, kkt.m);
    let assemble = |delta_w: f64, delta_c: f64| -> Vec<f64> {
        let mut vals = Vec::with_capacity(kkt.pattern.rows.len());
        vals.extend_from_slice(hess_vals);
        vals.extend((0..n).map(|i| sigma[i] + delta_w));
        vals.extend_from_slice(jac_vals);
        vals.extend((0..m).map(|i| {
            if is_eq[i] {
                -delta_c
            } else {
                -(1.0 / (sigma[n + slack_of[i]] + delta_w) + delta_c)
            }
        }));
        vals
    };
    let good = |f: &LdlFactor| f.inertia.positive == n && f.inertia.negative == m && f.inertia.zero == 0;

    let mut delta_c = 0.0;
    let mut delta_w = forced_delta;
    let mut vals = assemble(delta_w, delta_c);
    let mut fac = kkt.symbolic.factor(&vals);
    if fac.inertia.zero > 0 {
        delta_c = 1e-8 * mu.powf(0.25);
        vals = assemble(delta_w, delta_c);
        fac = kkt.symbolic.factor(&vals);
    }
    if !good(&fac) {
        delta_w = if forced_delta > 0.0 {
            forced_delta * 10.0
        } else if last_delta_w == 0.0 {
            DELTA_W_FIRST
        } else {
            (last_delta_w / 3.0).max(DELTA_W_MIN)
        };
        let grow = if last_delta_w == 0.0 { 100.0 } else { 8.0 };
        loop {
            vals = assemble(delta_w, delta_c);
            fac = kkt.symbolic.factor(&vals);
            if good(&fac) {
                break;
            }
            if fac.inertia.zero > 0 && delta_c == 0.0 {
                delta_c = 1e-8 * mu.powf(0.25);
                continue;
            }
            delta_w *= grow;
            if delta_w > DELTA_W_MAX {
                return None;
            }
        }
    }
    Some(Factored { fac, vals, delta_w })
}

/// Newton direction `(dx, dλ, ds)` for the residuals `r_x`, `r_s` and the
/// constraint residual `d`, using an existing factorization.
#[allow(clippy::too_many_arguments)]
fn direction(
    kkt: &Kkt,
    f: &Factored,
    sigma: &[f64],
    is_eq: &[bool],
    ineq: &[usize],
    slack_of: &[usize],
    r_x: &[f64],
    r_s: &[f64],
    d: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (n, m) = (kkt.n, kkt.m);
    let mut rhs = vec![0.0; n + m];
    for i in 0..n {
        rhs[i] = -r_x[i];
    }
    for i in 0..m {
        rhs[n + i] = -d[i];
        if !is_eq[i] {
            let k = slack_of[i];
            rhs[n + i] -= r_s[k] / (sigma[n + k] + f.delta_w);
        }
    }
    let sol = refine(kkt, &f.fac, &f.vals, &rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let dx = sol[..n].to_vec();
    let dlam = sol[n..].to_vec();
    let ds = ineq
        .iter()
        .enumerate()
        .map(|(k, &i)| (dlam[i] - r_s[k]) / (sigma[n + k] + f.delta_w))
        .collect();
    Some((dx, dlam, ds))
}

/// Second-order corrections after a rejected full step.
///
/// `first` is `(alpha, theta, residual)` of the rejected trial. `newton`
/// solves with the current factorization for a given constraint residual;
/// `probe` evaluates a corrected direction and reports
/// `(candidate, Some(augment) if acceptable, theta, residual)`.
/// Returns the accepted candidate, its filter flag and the corrections used.
#[allow(clippy::type_complexity)]
fn second_order_correction<C>(
    first: (f64, Vec<f64>),
    newton: &dyn Fn(&[f64]) -> Option<Direction>,
    probe: &dyn Fn(&Direction) -> Option<(C, Option<bool>, f64, Vec<f64>)>,
) -> Option<(C, bool, usize)> {
    let (theta_first, mut d_soc) = first;
    let mut theta_prev = f64::INFINITY;
    let mut theta_soc = theta_first;
    for k in 1..=MAX_SOC {
        if theta_soc > SOC_FACTOR * theta_prev {
            return None;
        }
        let cdir = newton(&d_soc)?;
        let (cand, ok, th, dc) = probe(&cdir)?;
        if let Some(aug) = ok {
            return Some((cand, aug, k));
        }
        theta_prev = theta_soc;
        theta_soc = th;
        let a = cdir.alpha_max;
        d_soc.iter_mut().zip(&dc).for_each(|(x, y)| *x = a * *x + y);
    }
    None
}

/// Solve with a few rounds of iterative refinement against the assembled matrix.
fn refine(kkt: &Kkt, fac: &LdlFactor, vals: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut x = rhs.to_vec();
    kkt.symbolic.solve(fac, &mut x);
    let scale = max_abs(rhs).max(1.0);
    let mut ax = vec![0.0; rhs.len()];
    for _ in 0..3 {
        sym_matvec(&kkt.pattern, vals, &x, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        if max_abs(&r) <= 1e-13 * scale {
            break;
        }
        kkt.symbolic.solve(fac, &mut r);
        x.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
    }
    x
}
