//! Starting point for the NLP: a quasi-steady-state speed profile from a
//! forward/backward pass under the friction circle, with controls and
//! kinematic steering derived from it.

use crate::nlp::NlpProblem;
use crate::vehicle::dynamics::{su, sx, GRAVITY};
use crate::vehicle::{NU, NX};

use super::boundary::DrivingBoundary;
use super::transcription::RaceNlp;

/// Share of the friction circle the guess is allowed to use.
const GRIP_MARGIN: f64 = 0.9;
/// Share of the power and force caps the guess is allowed to use.
const DRIVE_MARGIN: f64 = 0.95;

/// Top speed where drive power balances the driving resistance.
fn power_limited_top_speed(nlp: &RaceNlp) -> f64 {
    let vp = &nlp.params.vehicle;
    let net = |v: f64| vp.p_max * DRIVE_MARGIN - v * vp.resistance(v);
    let (mut lo, mut hi) = (1.0, 150.0);
    if net(hi) > 0.0 {
        return hi;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if net(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Longitudinal acceleration left over by cornering at speed `v`.
fn spare_grip(nlp: &RaceNlp, v: f64, kappa: f64) -> f64 {
    let a_max = GRIP_MARGIN * nlp.params.vehicle.mu * GRAVITY;
    let a_lat = v * v * kappa.abs();
    (a_max * a_max - a_lat * a_lat).max(0.0).sqrt()
}

/// Node speeds of the quasi-steady profile.
pub fn speed_profile(nlp: &RaceNlp) -> Vec<f64> {
    let vp = &nlp.params.vehicle;
    let nodes = nlp.mesh.nodes();
    let v_top = power_limited_top_speed(nlp);
    let limit: Vec<f64> = (0..nodes)
        .map(|k| {
            let kappa = nlp.kappa_at_node(k).abs();
            if kappa > 0.0 {
                v_top.min((GRIP_MARGIN * vp.mu * GRAVITY / kappa).sqrt())
            } else {
                v_top
            }
        })
        .collect();
    let drive = |v: f64, kappa: f64| {
        let f = (vp.f_d_max * DRIVE_MARGIN).min(vp.p_max * DRIVE_MARGIN / v);
        ((f - vp.resistance(v)) / vp.mass).min(spare_grip(nlp, v, kappa))
    };
    let brake = |v: f64, kappa: f64| spare_grip(nlp, v, kappa) + vp.resistance(v) / vp.mass;

    let mut v = limit.clone();
    let mut start = match nlp.boundary.driving {
        DrivingBoundary::Pinned(s) => s.v,
        DrivingBoundary::Cyclic => limit[0],
    };
    // a cyclic run needs start == end; three sweeps settle the wrap-around
    let sweeps = if nlp.boundary.driving == DrivingBoundary::Cyclic { 3 } else { 1 };
    for _ in 0..sweeps {
        v[0] = start.min(limit[0]);
        for k in 0..nodes - 1 {
            let h = nlp.mesh.step(k);
            let reach = (v[k] * v[k] + 2.0 * h * drive(v[k], nlp.kappa_at_node(k))).max(1.0).sqrt();
            v[k + 1] = limit[k + 1].min(reach);
        }
        for k in (0..nodes - 1).rev() {
            let h = nlp.mesh.step(k);
            let reach = (v[k + 1] * v[k + 1] + 2.0 * h * brake(v[k + 1], nlp.kappa_at_node(k + 1))).sqrt();
            v[k] = v[k].min(reach);
        }
        if let DrivingBoundary::Pinned(_) = nlp.boundary.driving {
            break;
        }
        start = v[nodes - 1];
    }
    v
}

/// Scaled decision vector to start the solver from.
pub fn initial_guess(nlp: &RaceNlp) -> Vec<f64> {
    let vp = &nlp.params.vehicle;
    let speeds = speed_profile(nlp);
    let t0 = nlp.boundary.initial_temperatures.to_array();
    let ratio = vp.h_cg / vp.wheelbase();
    let states: Vec<[f64; NX]> = speeds
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut x = [0.0; NX];
            x[sx::V] = v;
            x[sx::PSI_DOT] = v * nlp.kappa_at_node(k);
            if let DrivingBoundary::Pinned(s) = nlp.boundary.driving {
                if k == 0 {
                    x[..5].copy_from_slice(&s.to_array());
                }
            }
            x[sx::T_M..].copy_from_slice(&t0);
            x
        })
        .collect();
    let controls: Vec<[f64; NU]> = (0..nlp.intervals())
        .map(|k| {
            let (va, vb) = (speeds[k], speeds[k + 1]);
            let h = nlp.mesh.step(k);
            let v_mid = 0.5 * (va + vb);
            let force = vp.mass * (vb * vb - va * va) / (2.0 * h) + vp.resistance(v_mid);
            let mut u = [0.0; NU];
            if force >= 0.0 {
                u[su::F_D] = force.min(DRIVE_MARGIN * vp.f_d_max).min(DRIVE_MARGIN * vp.p_max / va.max(vb));
            } else {
                u[su::F_B] = force.max(-DRIVE_MARGIN * vp.f_b_max);
            }
            let kappa = 0.5 * (nlp.kappa_at_node(k) + nlp.kappa_at_node(k + 1));
            u[su::DELTA] = (vp.wheelbase() * kappa).clamp(-vp.delta_max, vp.delta_max);
            u[su::GAMMA] = ratio * (u[su::F_D] + u[su::F_B]);
            u
        })
        .collect();
    let z = nlp.pack(&states, &controls).expect("dimensions follow the mesh");
    debug_assert_eq!(z.len(), nlp.num_vars());
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocp::{build_nlp, BoundarySpec, ModelParams, TranscriptionOptions};
    use crate::vehicle::{generate_mesh, synthetic_oval, MeshOptions};

    #[test]
    fn profile_respects_corners_and_is_periodic() {
        let track = synthetic_oval(5.0, 12.0).with_laps(2);
        let mesh = generate_mesh(&track, &MeshOptions::default()).unwrap();
        let nlp = build_nlp(&track, &mesh, &ModelParams::default(), &BoundarySpec::cold(), &TranscriptionOptions::default())
            .unwrap();
        let v = speed_profile(&nlp);
        let vp = &nlp.params.vehicle;
        for (k, &vk) in v.iter().enumerate() {
            let kappa = nlp.kappa_at_node(k).abs();
            assert!(vk * vk * kappa <= GRIP_MARGIN * vp.mu * GRAVITY + 1e-9);
            assert!(vk >= 1.0);
        }
        assert!((v[0] - v[v.len() - 1]).abs() < 1e-6 * v[0]);
        let z = initial_guess(&nlp);
        let (lo, hi) = nlp.var_bounds();
        for i in 0..z.len() {
            assert!(z[i] >= lo[i] && z[i] <= hi[i], "var {i}: {} not in [{}, {}]", z[i], lo[i], hi[i]);
        }
    }
}
