//! Trapezoidal collocation of the race OCP.
//!
//! Decision vector (scaled): `[x_0, u_0, x_1, u_1, …, u_{N-1}, x_N]` with
//! ten states per node and four piecewise-constant controls per interval.
//! Per interval `k` the constraint rows are
//!
//! | rows   | meaning                                               |
//! |--------|-------------------------------------------------------|
//! | 0..10  | collocation defects (scaled by the state scales)      |
//! | 10     | load-transfer consistency `γ = h/l · (F_d + F_b)`     |
//! | 11     | drive/brake exclusivity `F_d · (−F_b) <= ε`           |
//! | 12..16 | friction circle, front/rear, at both interval ends    |
//! | 16..18 | power cap `F_d v <= p_max` at both interval ends      |
//!
//! followed by five thermal start pins and five driving-state boundary rows.

use std::cell::RefCell;

use crate::ad::{HDual, Real};
use crate::error::{Error, Result};
use crate::nlp::NlpProblem;
use crate::thermal::ThermalModel;
use crate::vehicle::dynamics::{axle_forces, spatial_derivatives, su, sx, usage_squared};
use crate::vehicle::{Mesh, TrackData, NU, NX};

use super::boundary::{BoundarySpec, DrivingBoundary};
use super::power::power_flow;
use super::ModelParams;

/// Scalar values per stage in the decision vector.
pub const STAGE: usize = NX + NU;
/// Constraint rows per interval.
pub const ROWS_PER_INTERVAL: usize = 18;
const ROW_GAMMA: usize = 10;
const ROW_EXCL: usize = 11;
const ROW_FRICTION: usize = 12;
const ROW_POWER: usize = 16;
/// Variables seen by one endpoint evaluation: a node's states plus the interval's controls.
const HALF: usize = NX + NU;

/// Nominal magnitudes used to scale states to O(1).
pub const STATE_SCALE: [f64; NX] = [50.0, 0.1, 1.0, 5.0, 0.2, 100.0, 100.0, 100.0, 100.0, 100.0];
/// Nominal magnitudes used to scale controls to O(1).
pub const CONTROL_SCALE: [f64; NU] = [1e4, 1e4, 0.2, 1e3];

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranscriptionOptions {
    /// Enforce the component temperature limits.
    pub temperature_boxes: bool,
    /// Allowed product `F_d · |F_b|`, N².
    pub exclusivity_eps: f64,
    /// Common factor applied to every state and control scale.
    pub scale_multiplier: f64,
}

impl Default for TranscriptionOptions {
    fn default() -> Self {
        Self {
            temperature_boxes: true,
            exclusivity_eps: 1e4,
            scale_multiplier: 1.0,
        }
    }
}

/// Problem dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NlpCounts {
    pub nodes: usize,
    pub intervals: usize,
    pub variables: usize,
    pub constraints: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub defects: usize,
    pub jacobian_nnz: usize,
    pub hessian_nnz: usize,
}

impl NlpCounts {
    /// Closed-form dimensions for a mesh with `intervals` intervals.
    pub fn for_intervals(intervals: usize) -> (usize, usize) {
        (
            (intervals + 1) * NX + intervals * NU,
            intervals * ROWS_PER_INTERVAL + 2 * 5,
        )
    }
}

/// Outputs of one endpoint evaluation.
#[derive(Clone, Copy, Debug)]
struct Half<T> {
    f: [T; NX],
    lethargy: T,
    friction: [T; 2],
    power: T,
}

struct Cache {
    z: Vec<f64>,
    /// `halves[2k]` at the start of interval `k`, `halves[2k+1]` at its end.
    halves: Vec<Half<HDual<HALF>>>,
}

/// The transcribed race problem.
pub struct RaceNlp {
    pub params: ModelParams,
    pub thermal: ThermalModel,
    pub mesh: Mesh,
    pub boundary: BoundarySpec,
    pub options: TranscriptionOptions,
    kappa: Vec<f64>,
    corridor: Vec<(f64, f64)>,
    state_scale: [f64; NX],
    control_scale: [f64; NU],
    cache: RefCell<Option<Cache>>,
}

/// Assemble the NLP for `track` on `mesh`.
pub fn build_nlp(
    track: &TrackData,
    mesh: &Mesh,
    params: &ModelParams,
    boundary: &BoundarySpec,
    options: &TranscriptionOptions,
) -> Result<RaceNlp> {
    params.validate()?;
    boundary.validate(&params.limits)?;
    if mesh.nodes() < 2 {
        return Err(Error::InvalidParameter("mesh needs at least two nodes".into()));
    }
    if (mesh.horizon() - track.total_length()).abs() > 1e-6 * track.total_length() {
        return Err(Error::InvalidParameter(format!(
            "mesh covers {} m but the race is {} m",
            mesh.horizon(),
            track.total_length()
        )));
    }
    if !(options.scale_multiplier > 0.0 && options.exclusivity_eps > 0.0) {
        return Err(Error::InvalidParameter("scale multiplier and exclusivity tolerance must be > 0".into()));
    }
    let thermal = params.thermal_model()?;
    Ok(RaceNlp {
        params: *params,
        thermal,
        mesh: mesh.clone(),
        boundary: *boundary,
        options: *options,
        kappa: mesh.s.iter().map(|&s| track.kappa_at(s)).collect(),
        corridor: mesh.s.iter().map(|&s| track.corridor_at(s)).collect(),
        state_scale: STATE_SCALE.map(|v| v * options.scale_multiplier),
        control_scale: CONTROL_SCALE.map(|v| v * options.scale_multiplier),
        cache: RefCell::new(None),
    })
}

impl RaceNlp {
    pub fn intervals(&self) -> usize {
        self.mesh.intervals()
    }

    /// Offset of node `k`'s states in the decision vector.
    pub fn state_index(k: usize) -> usize {
        k * STAGE
    }

    /// Offset of interval `k`'s controls in the decision vector.
    pub fn control_index(k: usize) -> usize {
        k * STAGE + NX
    }

    pub fn state_scale(&self) -> &[f64; NX] {
        &self.state_scale
    }

    pub fn control_scale(&self) -> &[f64; NU] {
        &self.control_scale
    }

    pub fn kappa_at_node(&self, k: usize) -> f64 {
        self.kappa[k]
    }

    pub fn corridor_at_node(&self, k: usize) -> (f64, f64) {
        self.corridor[k]
    }

    pub fn counts(&self) -> NlpCounts {
        let n_int = self.intervals();
        let (variables, constraints) = NlpCounts::for_intervals(n_int);
        let inequalities = n_int * (ROWS_PER_INTERVAL - NX - 1);
        NlpCounts {
            nodes: self.mesh.nodes(),
            intervals: n_int,
            variables,
            constraints,
            equalities: constraints - inequalities,
            inequalities,
            defects: n_int * NX,
            jacobian_nnz: self.jacobian_structure().len(),
            hessian_nnz: self.hessian_structure().len(),
        }
    }

    /// Physical state at node `k` from a scaled decision vector.
    pub fn node_state(&self, z: &[f64], k: usize) -> [f64; NX] {
        let o = Self::state_index(k);
        std::array::from_fn(|i| z[o + i] * self.state_scale[i])
    }

    /// Physical control on interval `k` from a scaled decision vector.
    pub fn interval_control(&self, z: &[f64], k: usize) -> [f64; NU] {
        let o = Self::control_index(k);
        std::array::from_fn(|i| z[o + i] * self.control_scale[i])
    }

    /// Scaled decision vector from physical node states and interval controls.
    pub fn pack(&self, states: &[[f64; NX]], controls: &[[f64; NU]]) -> Result<Vec<f64>> {
        let n_int = self.intervals();
        if states.len() != n_int + 1 {
            return Err(Error::Dimension {
                expected: n_int + 1,
                got: states.len(),
            });
        }
        if controls.len() != n_int {
            return Err(Error::Dimension {
                expected: n_int,
                got: controls.len(),
            });
        }
        let mut z = vec![0.0; self.num_vars()];
        for (k, x) in states.iter().enumerate() {
            for i in 0..NX {
                z[Self::state_index(k) + i] = x[i] / self.state_scale[i];
            }
        }
        for (k, u) in controls.iter().enumerate() {
            for i in 0..NU {
                z[Self::control_index(k) + i] = u[i] / self.control_scale[i];
            }
        }
        Ok(z)
    }

    /// Global indices seen by the endpoint evaluation: the start half uses
    /// `(x_k, u_k)`, the end half `(u_k, x_{k+1})` — both contiguous.
    fn half_first_col(k: usize, end: bool) -> usize {
        if end {
            Self::control_index(k)
        } else {
            Self::state_index(k)
        }
    }

    /// Role of local slot `j` in a half: `Ok(state index)` or `Err(control index)`.
    fn half_role(end: bool, j: usize) -> std::result::Result<usize, usize> {
        if end {
            if j < NU {
                Err(j)
            } else {
                Ok(j - NU)
            }
        } else if j < NX {
            Ok(j)
        } else {
            Err(j - NX)
        }
    }

    fn eval_half<T: Real>(&self, x: &[T; NX], u: &[T; NU], kappa: f64) -> Half<T> {
        let vp = &self.params.vehicle;
        let flow = power_flow(&self.params.powertrain, u[su::F_D], x[sx::V]);
        let (f, lethargy) = spatial_derivatives(vp, &self.thermal, x, u, kappa, &flow.losses);
        let forces = axle_forces(vp, x[sx::V], x[sx::BETA], x[sx::PSI_DOT], u);
        Half {
            f,
            lethargy,
            friction: [
                usage_squared(forces.fx_f, forces.fy_f, forces.fz_f, vp.mu),
                usage_squared(forces.fx_r, forces.fy_r, forces.fz_r, vp.mu),
            ],
            power: flow.p_sigma / vp.p_max,
        }
    }

    fn half_f64(&self, z: &[f64], k: usize, end: bool) -> Half<f64> {
        let node = if end { k + 1 } else { k };
        let x = self.node_state(z, node);
        let u = self.interval_control(z, k);
        self.eval_half(&x, &u, self.kappa[node])
    }

    fn half_dual(&self, z: &[f64], k: usize, end: bool) -> Half<HDual<HALF>> {
        let node = if end { k + 1 } else { k };
        let first = Self::half_first_col(k, end);
        let mut x = [HDual::constant(0.0); NX];
        let mut u = [HDual::constant(0.0); NU];
        for j in 0..HALF {
            let d = HDual::var(z[first + j], j);
            match Self::half_role(end, j) {
                Ok(i) => x[i] = d * self.state_scale[i],
                Err(i) => u[i] = d * self.control_scale[i],
            }
        }
        self.eval_half(&x, &u, self.kappa[node])
    }

    fn with_cache<R>(&self, z: &[f64], f: impl FnOnce(&Cache) -> R) -> R {
        let mut slot = self.cache.borrow_mut();
        let fresh = matches!(&*slot, Some(c) if c.z == z);
        if !fresh {
            let n_int = self.intervals();
            let mut halves = Vec::with_capacity(2 * n_int);
            for k in 0..n_int {
                halves.push(self.half_dual(z, k, false));
                halves.push(self.half_dual(z, k, true));
            }
            *slot = Some(Cache { z: z.to_vec(), halves });
        }
        f(slot.as_ref().expect("cache filled"))
    }

    fn load_transfer_ratio(&self) -> f64 {
        self.params.vehicle.h_cg / self.params.vehicle.wheelbase()
    }

    fn exclusivity_scale(&self) -> f64 {
        self.control_scale[su::F_D] * self.control_scale[su::F_B]
    }
}

impl NlpProblem for RaceNlp {
    fn num_vars(&self) -> usize {
        NlpCounts::for_intervals(self.intervals()).0
    }

    fn num_constraints(&self) -> usize {
        NlpCounts::for_intervals(self.intervals()).1
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.num_vars();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        let vp = &self.params.vehicle;
        let lim = &self.params.limits;
        let ss = &self.state_scale;
        let cs = &self.control_scale;
        for k in 0..self.mesh.nodes() {
            let o = Self::state_index(k);
            let mut set = |i: usize, l: f64, h: f64| {
                lo[o + i] = l / ss[i];
                hi[o + i] = h / ss[i];
            };
            set(sx::V, 1.0, 150.0);
            set(sx::BETA, -0.5, 0.5);
            let (nr, nl) = self.corridor[k];
            set(sx::N, nr, nl);
            set(sx::XI, -1.0, 1.0);
            if self.options.temperature_boxes {
                for t in 0..5 {
                    set(sx::T_M + t, lim.min[t], lim.max[t]);
                }
            }
        }
        for k in 0..self.intervals() {
            let o = Self::control_index(k);
            lo[o + su::F_D] = 0.0;
            hi[o + su::F_D] = vp.f_d_max / cs[su::F_D];
            lo[o + su::F_B] = -vp.f_b_max / cs[su::F_B];
            hi[o + su::F_B] = 0.0;
            lo[o + su::DELTA] = -vp.delta_max / cs[su::DELTA];
            hi[o + su::DELTA] = vp.delta_max / cs[su::DELTA];
        }
        (lo, hi)
    }

    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.num_constraints();
        let mut lo = vec![0.0; m];
        let mut hi = vec![0.0; m];
        for k in 0..self.intervals() {
            let r = k * ROWS_PER_INTERVAL;
            lo[r + ROW_EXCL] = f64::NEG_INFINITY;
            hi[r + ROW_EXCL] = self.options.exclusivity_eps / self.exclusivity_scale();
            for j in ROW_FRICTION..ROWS_PER_INTERVAL {
                lo[r + j] = f64::NEG_INFINITY;
                hi[r + j] = 1.0;
            }
        }
        let b = self.intervals() * ROWS_PER_INTERVAL;
        let t0 = self.boundary.initial_temperatures.to_array();
        for i in 0..5 {
            let v = t0[i] / self.state_scale[sx::T_M + i];
            lo[b + i] = v;
            hi[b + i] = v;
        }
        if let DrivingBoundary::Pinned(vs) = self.boundary.driving {
            let a = vs.to_array();
            for i in 0..5 {
                lo[b + 5 + i] = a[i] / self.state_scale[i];
                hi[b + 5 + i] = a[i] / self.state_scale[i];
            }
        }
        (lo, hi)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let mut t = 0.0;
        for k in 0..self.intervals() {
            let h = self.mesh.step(k);
            let a = self.node_state(z, k);
            let b = self.node_state(z, k + 1);
            let la = crate::vehicle::dynamics::dt_ds(a[0], a[1], a[3], a[4], self.kappa[k]);
            let lb = crate::vehicle::dynamics::dt_ds(b[0], b[1], b[3], b[4], self.kappa[k + 1]);
            t += 0.5 * h * (la + lb);
        }
        t
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n_nodes = self.mesh.nodes();
        for k in 0..n_nodes {
            let mut w = 0.0;
            if k > 0 {
                w += 0.5 * self.mesh.step(k - 1);
            }
            if k + 1 < n_nodes {
                w += 0.5 * self.mesh.step(k);
            }
            let x = self.node_state(z, k);
            let kappa = self.kappa[k];
            let (v, beta, n, xi) = (x[sx::V], x[sx::BETA], x[sx::N], x[sx::XI]);
            let c = (xi + beta).cos();
            let l = (1.0 - n * kappa) / (v * c);
            let o = Self::state_index(k);
            let ss = &self.state_scale;
            grad[o + sx::V] = w * (-l / v) * ss[sx::V];
            grad[o + sx::N] = w * (-kappa / (v * c)) * ss[sx::N];
            let dang = w * l * (xi + beta).tan();
            grad[o + sx::BETA] = dang * ss[sx::BETA];
            grad[o + sx::XI] = dang * ss[sx::XI];
        }
    }

    fn constraints(&self, z: &[f64], c: &mut [f64]) {
        let ratio = self.load_transfer_ratio();
        for k in 0..self.intervals() {
            let r = k * ROWS_PER_INTERVAL;
            let h = self.mesh.step(k);
            let a = self.half_f64(z, k, false);
            let b = self.half_f64(z, k, true);
            let xa = Self::state_index(k);
            let xb = Self::state_index(k + 1);
            for i in 0..NX {
                c[r + i] = z[xb + i] - z[xa + i] - 0.5 * h * (a.f[i] + b.f[i]) / self.state_scale[i];
            }
            let u = self.interval_control(z, k);
            c[r + ROW_GAMMA] = (u[su::GAMMA] - ratio * (u[su::F_D] + u[su::F_B])) / self.control_scale[su::GAMMA];
            c[r + ROW_EXCL] = -u[su::F_D] * u[su::F_B] / self.exclusivity_scale();
            c[r + ROW_FRICTION] = a.friction[0];
            c[r + ROW_FRICTION + 1] = a.friction[1];
            c[r + ROW_FRICTION + 2] = b.friction[0];
            c[r + ROW_FRICTION + 3] = b.friction[1];
            c[r + ROW_POWER] = a.power;
            c[r + ROW_POWER + 1] = b.power;
        }
        let b = self.intervals() * ROWS_PER_INTERVAL;
        let last = Self::state_index(self.intervals());
        for i in 0..5 {
            c[b + i] = z[sx::T_M + i];
            c[b + 5 + i] = match self.boundary.driving {
                DrivingBoundary::Cyclic => z[i] - z[last + i],
                DrivingBoundary::Pinned(_) => z[i],
            };
        }
    }

    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.intervals() {
            let r = k * ROWS_PER_INTERVAL;
            let x0 = Self::state_index(k);
            let u0 = Self::control_index(k);
            for i in 0..NX {
                out.extend((x0..x0 + 2 * NX + NU).map(|col| (r + i, col)));
            }
            for j in [su::F_D, su::F_B, su::GAMMA] {
                out.push((r + ROW_GAMMA, u0 + j));
            }
            out.push((r + ROW_EXCL, u0 + su::F_D));
            out.push((r + ROW_EXCL, u0 + su::F_B));
            for (row, end) in [(0, false), (1, false), (2, true), (3, true)] {
                let first = Self::half_first_col(k, end);
                out.extend((first..first + HALF).map(|col| (r + ROW_FRICTION + row, col)));
            }
            out.push((r + ROW_POWER, x0 + sx::V));
            out.push((r + ROW_POWER, u0 + su::F_D));
            out.push((r + ROW_POWER + 1, Self::state_index(k + 1) + sx::V));
            out.push((r + ROW_POWER + 1, u0 + su::F_D));
        }
        let b = self.intervals() * ROWS_PER_INTERVAL;
        let last = Self::state_index(self.intervals());
        for i in 0..5 {
            out.push((b + i, sx::T_M + i));
        }
        for i in 0..5 {
            out.push((b + 5 + i, i));
            if self.boundary.driving == DrivingBoundary::Cyclic {
                out.push((b + 5 + i, last + i));
            }
        }
        out
    }

    fn jacobian_values(&self, z: &[f64], vals: &mut [f64]) {
        let ratio = self.load_transfer_ratio();
        let cs = self.control_scale;
        self.with_cache(z, |cache| {
            let mut p = 0;
            for k in 0..self.intervals() {
                let h = self.mesh.step(k);
                let a = &cache.halves[2 * k];
                let b = &cache.halves[2 * k + 1];
                for i in 0..NX {
                    let w = -0.5 * h / self.state_scale[i];
                    // columns: x_k (0..10), u_k (10..14), x_{k+1} (14..24)
                    for j in 0..2 * NX + NU {
                        let mut v = 0.0;
                        if j < HALF {
                            v += w * a.f[i].grad[j];
                        }
                        if j >= NX {
                            v += w * b.f[i].grad[j - NX];
                        }
                        if j == i {
                            v -= 1.0;
                        }
                        if j == HALF + i {
                            v += 1.0;
                        }
                        vals[p] = v;
                        p += 1;
                    }
                }
                let f_scale = ratio / cs[su::GAMMA];
                vals[p] = -f_scale * cs[su::F_D];
                vals[p + 1] = -f_scale * cs[su::F_B];
                vals[p + 2] = 1.0;
                p += 3;
                let o = Self::control_index(k);
                vals[p] = -z[o + su::F_B];
                vals[p + 1] = -z[o + su::F_D];
                p += 2;
                for half in [&a.friction[0], &a.friction[1], &b.friction[0], &b.friction[1]] {
                    vals[p..p + HALF].copy_from_slice(&half.grad);
                    p += HALF;
                }
                vals[p] = a.power.grad[sx::V];
                vals[p + 1] = a.power.grad[NX + su::F_D];
                vals[p + 2] = b.power.grad[NU + sx::V];
                vals[p + 3] = b.power.grad[su::F_D];
                p += 4;
            }
            for _ in 0..5 {
                vals[p] = 1.0;
                p += 1;
            }
            for _ in 0..5 {
                vals[p] = 1.0;
                p += 1;
                if self.boundary.driving == DrivingBoundary::Cyclic {
                    vals[p] = -1.0;
                    p += 1;
                }
            }
            debug_assert_eq!(p, vals.len());
        });
    }

    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.intervals() {
            for end in [false, true] {
                let first = Self::half_first_col(k, end);
                for i in 0..HALF {
                    for j in 0..=i {
                        out.push((first + i, first + j));
                    }
                }
            }
        }
        out
    }

    fn hessian_values(&self, z: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        self.with_cache(z, |cache| {
            let mut p = 0;
            for k in 0..self.intervals() {
                let r = k * ROWS_PER_INTERVAL;
                let h = self.mesh.step(k);
                for (e, end) in [false, true].into_iter().enumerate() {
                    let half = &cache.halves[2 * k + e];
                    let mut coef: Vec<(f64, &HDual<HALF>)> = Vec::with_capacity(NX + 4);
                    coef.push((obj_factor * 0.5 * h, &half.lethargy));
                    for i in 0..NX {
                        coef.push((-lambda[r + i] * 0.5 * h / self.state_scale[i], &half.f[i]));
                    }
                    coef.push((lambda[r + ROW_FRICTION + 2 * e], &half.friction[0]));
                    coef.push((lambda[r + ROW_FRICTION + 2 * e + 1], &half.friction[1]));
                    coef.push((lambda[r + ROW_POWER + e], &half.power));
                    for i in 0..HALF {
                        for j in 0..=i {
                            vals[p] = coef.iter().map(|(c, d)| c * d.hess[i][j]).sum();
                            p += 1;
                        }
                    }
                    if !end {
                        // exclusivity row: -z_Fd z_Fb has a single mixed second derivative
                        let (i, j) = (NX + su::F_B, NX + su::F_D);
                        let at = p - HALF * (HALF + 1) / 2 + i * (i + 1) / 2 + j;
                        vals[at] -= lambda[r + ROW_EXCL];
                    }
                }
            }
            debug_assert_eq!(p, vals.len());
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::{check_derivatives, check_hessian};
    use crate::vehicle::{generate_mesh, synthetic_oval, MeshOptions};
    use rand::{Rng, SeedableRng};

    fn toy(laps: usize, boundary: BoundarySpec) -> RaceNlp {
        let track = synthetic_oval(5.0, 12.0).with_laps(laps);
        let mesh = generate_mesh(&track, &MeshOptions::default()).unwrap();
        build_nlp(&track, &mesh, &ModelParams::default(), &boundary, &TranscriptionOptions::default()).unwrap()
    }

    fn two_interval_nlp() -> RaceNlp {
        let s: Vec<f64> = vec![0.0, 10.0, 20.0];
        let track = TrackData::new(s.clone(), vec![0.0; 3], vec![5.0; 3], vec![-5.0; 3]).unwrap();
        let mesh = Mesh { s, lap_length: 20.0, laps: 1 };
        build_nlp(&track, &mesh, &ModelParams::default(), &BoundarySpec::cold(), &TranscriptionOptions::default())
            .unwrap()
    }

    fn random_point(nlp: &RaceNlp, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n_int = nlp.intervals();
        let states: Vec<[f64; NX]> = (0..=n_int)
            .map(|_| {
                [
                    rng.random_range(15.0..60.0),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(30.0..150.0),
                    rng.random_range(30.0..90.0),
                    rng.random_range(30.0..50.0),
                    rng.random_range(30.0..80.0),
                    rng.random_range(30.0..55.0),
                ]
            })
            .collect();
        let controls: Vec<[f64; NU]> = (0..n_int)
            .map(|_| {
                [
                    rng.random_range(0.0..8000.0),
                    rng.random_range(-8000.0..0.0),
                    rng.random_range(-0.1..0.1),
                    rng.random_range(-500.0..500.0),
                ]
            })
            .collect();
        nlp.pack(&states, &controls).unwrap()
    }

    #[test]
    fn two_interval_counts() {
        let nlp = two_interval_nlp();
        let c = nlp.counts();
        assert_eq!(c.variables, 38);
        assert_eq!(c.defects, 20);
        assert_eq!(c.constraints, 2 * ROWS_PER_INTERVAL + 10);
        assert_eq!(nlp.num_vars(), 38);
    }

    #[test]
    fn oval_counts_follow_layout_formula() {
        let nlp = toy(2, BoundarySpec::cold());
        let c = nlp.counts();
        assert_eq!(c.nodes, 231);
        assert_eq!(c.variables, 231 * 10 + 230 * 4);
        assert_eq!(c.constraints, 230 * 18 + 10);
    }

    #[test]
    fn two_interval_jacobian_pattern() {
        let nlp = two_interval_nlp();
        let pat = nlp.jacobian_structure();
        // defect row 3 (lateral offset) of interval 1 touches exactly columns 14..38
        let cols: Vec<usize> = pat.iter().filter(|(r, _)| *r == ROWS_PER_INTERVAL + 3).map(|&(_, c)| c).collect();
        assert_eq!(cols, (14..38).collect::<Vec<_>>());
        // consistency row touches F_d, F_b, gamma of its own interval only
        let cols: Vec<usize> = pat.iter().filter(|(r, _)| *r == ROW_GAMMA).map(|&(_, c)| c).collect();
        assert_eq!(cols, vec![10, 11, 13]);
        // boundary rows: 5 pins + 5 cyclic pairs
        let tail = pat.iter().filter(|(r, _)| *r >= 2 * ROWS_PER_INTERVAL).count();
        assert_eq!(tail, 15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let nlp = two_interval_nlp();
        for seed in 0..5 {
            let z = random_point(&nlp, seed);
            let chk = check_derivatives(&nlp, &z, 1e-6, 1e-3);
            assert!(chk.worst() < 1e-5, "seed {seed}: {chk:?}");
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100 + seed);
            let lam: Vec<f64> = (0..nlp.num_constraints()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let hv = check_hessian(&nlp, &z, &lam, 1e-5, 1e-2);
            assert!(hv < 1e-4, "seed {seed}: hessian {hv}");
        }
    }

    #[test]
    fn straight_zero_control_band_structure() {
        // on a straight with zero controls the lateral-offset defect row of
        // interval 0 has no entries outside x_0, u_0, x_1
        let nlp = two_interval_nlp();
        let z = random_point(&nlp, 9);
        let jac = crate::nlp::jacobian(&nlp, &z);
        for ((&r, &c), &v) in jac.rows.iter().zip(&jac.cols).zip(&jac.vals) {
            if r == 3 && v != 0.0 {
                assert!(c < 24);
            }
        }
    }

    #[test]
    fn rejects_initial_temperature_outside_box() {
        let track = synthetic_oval(5.0, 12.0);
        let mesh = generate_mesh(&track, &MeshOptions::default()).unwrap();
        let mut b = BoundarySpec::hot();
        b.initial_temperatures.t_b = 51.0;
        let r = build_nlp(&track, &mesh, &ModelParams::default(), &b, &TranscriptionOptions::default());
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn pack_unpack_round_trip() {
        let nlp = toy(1, BoundarySpec::hot());
        let z = random_point(&nlp, 3);
        let states: Vec<[f64; NX]> = (0..nlp.mesh.nodes()).map(|k| nlp.node_state(&z, k)).collect();
        let controls: Vec<[f64; NU]> = (0..nlp.intervals()).map(|k| nlp.interval_control(&z, k)).collect();
        let back = nlp.pack(&states, &controls).unwrap();
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }
}
