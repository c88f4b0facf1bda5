//! Curvilinear single-track vehicle model.
//!
//! Rear-wheel drive; the brake force is split between the axles in
//! proportion to their vertical loads. Lateral tyre forces saturate smoothly
//! as `mu * F_z * tanh(k * alpha / mu)`, with a separate stiffness `k` for
//! each axle. The wheel-load-transfer input
//! `gamma` shifts vertical load from the front to the rear axle; the optimal
//! control problem ties it to the longitudinal force.

use crate::ad::Real;
use crate::error::{Error, Result};
use crate::thermal::{Losses, ThermalModel};

pub const GRAVITY: f64 = 9.81;

/// Number of states: five driving-dynamics states followed by five temperatures.
pub const NX: usize = 10;
/// Number of controls.
pub const NU: usize = 4;

/// Positions inside the state vector.
pub mod sx {
    pub const V: usize = 0;
    pub const BETA: usize = 1;
    pub const PSI_DOT: usize = 2;
    pub const N: usize = 3;
    pub const XI: usize = 4;
    pub const T_M: usize = 5;
    pub const T_I: usize = 6;
    pub const T_B: usize = 7;
    pub const T_F1: usize = 8;
    pub const T_F2: usize = 9;
}

/// Positions inside the control vector.
pub mod su {
    pub const F_D: usize = 0;
    pub const F_B: usize = 1;
    pub const DELTA: usize = 2;
    pub const GAMMA: usize = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// kg m²
    pub yaw_inertia: f64,
    /// CoG to front axle, m
    pub l_f: f64,
    /// CoG to rear axle, m
    pub l_r: f64,
    /// CoG height, m
    pub h_cg: f64,
    /// Tyre-road friction coefficient.
    pub mu: f64,
    /// Load-normalised cornering stiffness of the front tyres, 1/rad.
    pub stiffness_front: f64,
    /// Load-normalised cornering stiffness of the rear tyres, 1/rad. Above
    /// the front value the car understeers.
    pub stiffness_rear: f64,
    /// Drag coefficient times frontal area, m²
    pub cd_a: f64,
    /// kg/m³
    pub air_density: f64,
    pub rolling_resistance: f64,
    /// Wheel power cap, W
    pub p_max: f64,
    /// N
    pub f_d_max: f64,
    /// N (magnitude)
    pub f_b_max: f64,
    /// rad
    pub delta_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let mass = 1300.0;
        let mu = 1.4;
        Self {
            mass,
            yaw_inertia: 2700.0,
            l_f: 1.4,
            l_r: 1.5,
            h_cg: 0.3,
            mu,
            stiffness_front: 8.0,
            stiffness_rear: 24.0,
            cd_a: 0.9,
            air_density: 1.2,
            rolling_resistance: 0.012,
            p_max: 270e3,
            f_d_max: 12e3,
            f_b_max: mu * mass * GRAVITY,
            delta_max: 0.35,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("h_cg", self.h_cg),
            ("mu", self.mu),
            ("stiffness_front", self.stiffness_front),
            ("stiffness_rear", self.stiffness_rear),
            ("cd_a", self.cd_a),
            ("air_density", self.air_density),
            ("p_max", self.p_max),
            ("f_d_max", self.f_d_max),
            ("f_b_max", self.f_b_max),
            ("delta_max", self.delta_max),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.rolling_resistance >= 0.0) {
            return Err(Error::InvalidParameter("rolling_resistance must be >= 0".into()));
        }
        Ok(())
    }

    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }

    /// Quasi-static longitudinal load transfer for a total longitudinal force.
    pub fn load_transfer<T: Real>(&self, f_long: T) -> T {
        f_long * (self.h_cg / self.wheelbase())
    }

    /// Aerodynamic drag plus rolling resistance.
    pub fn resistance<T: Real>(&self, v: T) -> T {
        v * v * (0.5 * self.air_density * self.cd_a) + self.rolling_resistance * self.weight()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VehicleState {
    pub v: f64,
    pub beta: f64,
    pub psi_dot: f64,
    pub n: f64,
    pub xi: f64,
}

impl VehicleState {
    pub fn straight(v: f64) -> Self {
        Self {
            v,
            beta: 0.0,
            psi_dot: 0.0,
            n: 0.0,
            xi: 0.0,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.v, self.beta, self.psi_dot, self.n, self.xi]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            v: x[sx::V],
            beta: x[sx::BETA],
            psi_dot: x[sx::PSI_DOT],
            n: x[sx::N],
            xi: x[sx::XI],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlInput {
    pub f_d: f64,
    pub f_b: f64,
    pub delta: f64,
    pub gamma: f64,
}

impl ControlInput {
    pub fn to_array(self) -> [f64; NU] {
        [self.f_d, self.f_b, self.delta, self.gamma]
    }

    pub fn from_slice(u: &[f64]) -> Self {
        Self {
            f_d: u[su::F_D],
            f_b: u[su::F_B],
            delta: u[su::DELTA],
            gamma: u[su::GAMMA],
        }
    }
}

/// Forces acting on the two axles, in the respective wheel frames.
#[derive(Clone, Copy, Debug)]
pub struct AxleForces<T> {
    pub fx_f: T,
    pub fy_f: T,
    pub fz_f: T,
    pub fx_r: T,
    pub fy_r: T,
    pub fz_r: T,
}

pub fn axle_forces<T: Real>(vp: &VehicleParams, v: T, beta: T, psi_dot: T, u: &[T; NU]) -> AxleForces<T> {
    let [f_d, f_b, delta, gamma] = *u;
    let l = vp.wheelbase();
    let w = vp.weight();
    let fz_f = -gamma + w * vp.l_r / l;
    let fz_r = gamma + w * vp.l_f / l;
    let fx_f = f_b * fz_f / w;
    let fx_r = f_d + f_b * fz_r / w;
    let (vx, vy) = (v * beta.cos(), v * beta.sin());
    let alpha_f = delta - ((vy + psi_dot * vp.l_f) / vx).atan();
    let alpha_r = -((vy - psi_dot * vp.l_r) / vx).atan();
    let fy_f = fz_f * vp.mu * (alpha_f * (vp.stiffness_front / vp.mu)).tanh();
    let fy_r = fz_r * vp.mu * (alpha_r * (vp.stiffness_rear / vp.mu)).tanh();
    AxleForces {
        fx_f,
        fy_f,
        fz_f,
        fx_r,
        fy_r,
        fz_r,
    }
}

/// `(dv/dt, dbeta/dt, dpsi_dot/dt)`.
pub fn body_accelerations<T: Real>(
    vp: &VehicleParams,
    v: T,
    beta: T,
    psi_dot: T,
    u: &[T; NU],
) -> [T; 3] {
    let delta = u[su::DELTA];
    let f = axle_forces(vp, v, beta, psi_dot, u);
    let (sb, cb) = (beta.sin(), beta.cos());
    let (sdb, cdb) = ((delta - beta).sin(), (delta - beta).cos());
    let m = vp.mass;
    let v_dot = (f.fx_r * cb + f.fy_r * sb + f.fx_f * cdb - f.fy_f * sdb - vp.resistance(v)) / m;
    let beta_dot =
        -psi_dot + (-f.fx_r * sb + f.fy_r * cb + f.fx_f * sdb + f.fy_f * cdb) / (v * m);
    let psi_ddot = ((f.fx_f * delta.sin() + f.fy_f * delta.cos()) * vp.l_f - f.fy_r * vp.l_r)
        / vp.yaw_inertia;
    [v_dot, beta_dot, psi_ddot]
}

/// Lethargy `dt/ds` for generic scalars (no domain checks).
pub fn dt_ds<T: Real>(v: T, beta: T, n: T, xi: T, kappa: f64) -> T {
    (-(n * kappa) + 1.0) / (v * (xi + beta).cos())
}

/// Time needed per metre of reference line, s/m.
pub fn lethargy(state: &VehicleState, kappa: f64) -> Result<f64> {
    let along = 1.0 - state.n * kappa;
    if !(along > 0.0) {
        return Err(Error::Domain(format!(
            "offset n = {} is beyond the curvature centre (1 - n*kappa = {along})",
            state.n
        )));
    }
    let fwd = state.v * (state.xi + state.beta).cos();
    if !(fwd > 0.0) {
        return Err(Error::Domain(format!(
            "no forward progress (v = {}, xi + beta = {})",
            state.v,
            state.xi + state.beta
        )));
    }
    Ok(along / fwd)
}

/// Time derivatives of the full state plus the progress rate `ds/dt`.
pub fn time_derivatives<T: Real>(
    vp: &VehicleParams,
    thermal: &ThermalModel,
    x: &[T; NX],
    u: &[T; NU],
    kappa: f64,
    losses: &Losses<T>,
) -> ([T; NX], T) {
    let (v, beta, psi_dot, n, xi) = (x[0], x[1], x[2], x[3], x[4]);
    let [v_dot, beta_dot, psi_ddot] = body_accelerations(vp, v, beta, psi_dot, u);
    let s_dot = v * (xi + beta).cos() / (-(n * kappa) + 1.0);
    let temps = [x[5], x[6], x[7], x[8], x[9]];
    let rates = thermal.rates(&temps, losses);
    let out = [
        v_dot,
        beta_dot,
        psi_ddot,
        v * (xi + beta).sin(),
        psi_dot - s_dot * kappa,
        rates[0],
        rates[1],
        rates[2],
        rates[3],
        rates[4],
    ];
    (out, s_dot)
}

/// Arc-length derivatives `dx/ds` and the lethargy `dt/ds`.
pub fn spatial_derivatives<T: Real>(
    vp: &VehicleParams,
    thermal: &ThermalModel,
    x: &[T; NX],
    u: &[T; NU],
    kappa: f64,
    losses: &Losses<T>,
) -> ([T; NX], T) {
    let lth = dt_ds(x[0], x[1], x[3], x[4], kappa);
    let (dt, _) = time_derivatives(vp, thermal, x, u, kappa, losses);
    let mut ds = dt.map(|d| d * lth);
    // d(xi)/ds = psi_dot * dt/ds - kappa, written without the s_dot round trip
    ds[sx::XI] = x[sx::PSI_DOT] * lth - kappa;
    (ds, lth)
}

/// Combined force over available adhesion for one axle.
pub fn combined_usage(fx: f64, fy: f64, fz: f64, mu: f64) -> f64 {
    fx.hypot(fy) / (mu * fz)
}

/// Squared usage (smooth form used as a constraint).
pub fn usage_squared<T: Real>(fx: T, fy: T, fz: T, mu: f64) -> T {
    let cap = fz * mu;
    (fx * fx + fy * fy) / (cap * cap)
}

/// `[front, rear]` friction-circle utilisation; values above 1 exceed adhesion.
pub fn friction_circle_usage(state: &VehicleState, u: &ControlInput, vp: &VehicleParams) -> [f64; 2] {
    let f = axle_forces(vp, state.v, state.beta, state.psi_dot, &u.to_array());
    [
        combined_usage(f.fx_f, f.fy_f, f.fz_f, vp.mu),
        combined_usage(f.fx_r, f.fy_r, f.fz_r, vp.mu),
    ]
}
