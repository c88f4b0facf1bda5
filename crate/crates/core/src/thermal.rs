//! Two-circuit lumped-parameter thermal model of the powertrain.
//!
//! Circuit 1 carries coolant through both inverters, then both machines,
//! then radiator R_MI. Circuit 2 cools the battery through radiator R_B.
//! Component losses are per single component; the machine and inverter
//! pair each contribute twice to circuit 1. Temperatures are in °C.

use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};

/// Plausibility window for any modelled temperature (°C).
pub const TEMP_WINDOW: (f64, f64) = (-40.0, 250.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalParams {
    /// Heat capacity of one machine (J/K).
    pub c_m: f64,
    /// Heat capacity of one inverter (J/K).
    pub c_i: f64,
    /// Battery heat capacity (J/K).
    pub c_b: f64,
    /// Coolant heat capacity, circuit 1 (J/K).
    pub c_f1: f64,
    /// Coolant heat capacity, circuit 2 (J/K).
    pub c_f2: f64,
    /// Inverter to coolant resistance (K/W).
    pub r_i_th: f64,
    /// Battery to coolant resistance (K/W).
    pub r_b_th: f64,
    /// Radiator R_MI resistance (K/W); infinite disables the radiator.
    pub r_rmi: f64,
    /// Radiator R_B resistance (K/W); infinite disables the radiator.
    pub r_rb: f64,
    /// Coolant mass flow in circuit 1 (kg/s).
    pub mdot_f1: f64,
    /// Coolant specific heat (J/(kg K)).
    pub c_f: f64,
    /// Ambient temperature (°C).
    pub t_env: f64,
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_m", self.c_m),
            ("c_i", self.c_i),
            ("c_b", self.c_b),
            ("c_f1", self.c_f1),
            ("c_f2", self.c_f2),
            ("r_i_th", self.r_i_th),
            ("r_b_th", self.r_b_th),
            ("r_rmi", self.r_rmi),
            ("r_rb", self.r_rb),
            ("mdot_f1", self.mdot_f1),
            ("c_f", self.c_f),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if !self.t_env.is_finite() {
            return Err(Error::InvalidParameter("t_env must be finite".into()));
        }
        self.radiator_gain()?;
        Ok(())
    }

    /// `1/(2·ṁ·c·R_RMI)`; must stay below one for the radiator inlet
    /// relation to be well posed.
    fn radiator_gain(&self) -> Result<f64> {
        let g = 1.0 / (2.0 * self.mdot_f1 * self.c_f * self.r_rmi);
        if 1.0 - g <= 1e-9 {
            return Err(Error::Singular(format!(
                "2*mdot*c_f*R_RMI = {:.6} must exceed 1",
                1.0 / g
            )));
        }
        Ok(g)
    }

    fn flow_product(&self) -> f64 {
        self.mdot_f1 * self.c_f * self.r_i_th
    }
}

/// Radial geometry of an electric machine (radii increasing outward).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorGeometry {
    /// Shaft radius (m).
    pub r1: f64,
    /// Rotor outer radius (m).
    pub r2: f64,
    /// Air-gap / stator inner radius (m).
    pub r3: f64,
    /// Stator outer radius (m).
    pub r4: f64,
    /// Active length (m).
    pub length: f64,
    /// Iron conductivity (W/(m K)).
    pub k_iro: f64,
    /// Coolant convection coefficient (W/(m² K)).
    pub h_f: f64,
    /// Air-gap convection coefficient (W/(m² K)).
    pub h_g: f64,
}

impl MotorGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.r1 && self.r1 < self.r2 && self.r2 <= self.r3 && self.r3 < self.r4) {
            return Err(Error::InvalidParameter(format!(
                "machine radii must satisfy 0 < r1 < r2 <= r3 < r4, got {} {} {} {}",
                self.r1, self.r2, self.r3, self.r4
            )));
        }
        for (name, v) in [
            ("length", self.length),
            ("k_iro", self.k_iro),
            ("h_f", self.h_f),
            ("h_g", self.h_g),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Stator conduction in series with convection into the coolant.
    pub fn stator_path(&self) -> f64 {
        let tau = 2.0 * std::f64::consts::PI * self.length;
        (self.r4 / self.r3).ln() / (tau * self.k_iro) + 1.0 / (tau * self.r4 * self.h_f)
    }

    /// Rotor and shaft conduction in series with air-gap convection.
    pub fn rotor_path(&self) -> f64 {
        let tau = 2.0 * std::f64::consts::PI * self.length;
        (self.r2 / self.r1).ln() / (tau * self.k_iro)
            + 1.0 / (2.0 * tau * self.k_iro)
            + 1.0 / (tau * self.r3 * self.h_g)
    }
}

/// Thermal resistance of the machine: stator and rotor paths in parallel.
pub fn motor_resistance(geom: &MotorGeometry) -> f64 {
    let (r1, r2) = (geom.stator_path(), geom.rotor_path());
    r1 * r2 / (r1 + r2)
}

/// Convective resistance `1/(A·h)`.
pub fn surface_resistance(area: f64, h: f64) -> f64 {
    1.0 / (area * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub t_m: f64,
    pub t_i: f64,
    pub t_b: f64,
    pub t_f1: f64,
    pub t_f2: f64,
}

impl ThermalState {
    pub fn uniform(t: f64) -> Self {
        Self::from_array([t; 5])
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            t_m: a[0],
            t_i: a[1],
            t_b: a[2],
            t_f1: a[3],
            t_f2: a[4],
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.t_m, self.t_i, self.t_b, self.t_f1, self.t_f2]
    }

    pub fn check(&self) -> Result<()> {
        for t in self.to_array() {
            if !(t.is_finite() && t >= TEMP_WINDOW.0 && t <= TEMP_WINDOW.1) {
                return Err(Error::Domain(format!(
                    "temperature {t} outside [{}, {}] °C",
                    TEMP_WINDOW.0, TEMP_WINDOW.1
                )));
            }
        }
        Ok(())
    }
}

/// Per-component power losses (W): one machine, one inverter, the battery.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Losses<T> {
    pub machine: T,
    pub inverter: T,
    pub battery: T,
}

/// Coolant temperature between the inverters and the machines.
pub fn coolant_temp_after_inverters(ts: &ThermalState, p: &ThermalParams) -> f64 {
    after_inverters(ts.t_f1, ts.t_i, p)
}

fn after_inverters<T: Real>(t_f1: T, t_i: T, p: &ThermalParams) -> T {
    let k = p.flow_product();
    (t_f1 * (k - 1.0) + t_i * 2.0) / (1.0 + k)
}

/// Coolant temperature at the inlet of radiator R_MI.
pub fn coolant_temp_into_radiator(ts: &ThermalState, p: &ThermalParams) -> Result<f64> {
    let g = p.radiator_gain()?;
    Ok(into_radiator(ts.t_f1, g, p.t_env))
}

// (T(2ṁcR+1) − 2T_env)/(2ṁcR−1) written with g = 1/(2ṁcR) so that an
// infinite radiator resistance reduces to T_F1.
fn into_radiator<T: Real>(t_f1: T, g: f64, t_env: f64) -> T {
    (t_f1 * (1.0 + g) - 2.0 * g * t_env) / (1.0 - g)
}

/// Intermediate quantities of one thermal evaluation.
#[derive(Clone, Copy, Debug)]
pub struct ThermalBreakdown<T> {
    pub t_f1_m: T,
    pub t_f1_rmi: T,
    pub col_m: T,
    pub col_i: T,
    pub col_b: T,
    pub rejected_rmi: T,
    pub rejected_rb: T,
}

/// Validated parameters plus the derived machine resistance, ready for
/// repeated evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThermalModel {
    pub params: ThermalParams,
    pub r_m: f64,
    gain: f64,
}

impl ThermalModel {
    pub fn new(params: ThermalParams, geom: &MotorGeometry) -> Result<Self> {
        params.validate()?;
        geom.validate()?;
        Ok(Self {
            params,
            r_m: motor_resistance(geom),
            gain: params.radiator_gain()?,
        })
    }

    pub fn breakdown<T: Real>(&self, temps: &[T; 5]) -> ThermalBreakdown<T> {
        let p = &self.params;
        let [t_m, t_i, t_b, t_f1, t_f2] = *temps;
        let t_f1_m = after_inverters(t_f1, t_i, p);
        let t_f1_rmi = into_radiator(t_f1, self.gain, p.t_env);
        let col_m = (t_m * 2.0 - (t_f1_m + t_f1_rmi)) / (2.0 * self.r_m);
        let col_i = (t_i * 2.0 - (t_f1 + t_f1_m)) / (2.0 * p.r_i_th);
        let col_b = (t_b - t_f2) / p.r_b_th;
        let rejected_rmi = ((t_f1_rmi + t_f1) * 0.5 - p.t_env) * (1.0 / p.r_rmi);
        let rejected_rb = (t_f2 - p.t_env) * (1.0 / p.r_rb);
        ThermalBreakdown {
            t_f1_m,
            t_f1_rmi,
            col_m,
            col_i,
            col_b,
            rejected_rmi,
            rejected_rb,
        }
    }

    /// Time derivatives of `[T_M, T_I, T_B, T_F1, T_F2]` (K/s).
    pub fn rates<T: Real>(&self, temps: &[T; 5], losses: &Losses<T>) -> [T; 5] {
        let p = &self.params;
        let b = self.breakdown(temps);
        [
            (losses.machine - b.col_m) / p.c_m,
            (losses.inverter - b.col_i) / p.c_i,
            (losses.battery - b.col_b) / p.c_b,
            (b.col_m * 2.0 + b.col_i * 2.0 - b.rejected_rmi) / p.c_f1,
            (b.col_b - b.rejected_rb) / p.c_f2,
        ]
    }
}

/// Time derivatives of the five temperatures for given per-component losses.
pub fn thermal_derivatives(
    ts: &ThermalState,
    losses: &Losses<f64>,
    p: &ThermalParams,
    geom: &MotorGeometry,
) -> Result<ThermalState> {
    let model = ThermalModel::new(*p, geom)?;
    Ok(ThermalState::from_array(
        model.rates(&ts.to_array(), losses),
    ))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn params() -> ThermalParams {
        ThermalParams {
            c_m: 2.0e4,
            c_i: 6.0e3,
            c_b: 5.0e4,
            c_f1: 1.5e4,
            c_f2: 2.0e4,
            r_i_th: 0.01,
            r_b_th: 0.005,
            r_rmi: 0.005,
            r_rb: 0.004,
            mdot_f1: 0.2,
            c_f: 3500.0,
            t_env: 30.0,
        }
    }

    pub fn geometry() -> MotorGeometry {
        MotorGeometry {
            r1: 0.01,
            r2: 0.03,
            r3: 0.05,
            r4: 0.07,
            length: 0.2,
            k_iro: 45.0,
            h_f: 3000.0,
            h_g: 100.0,
        }
    }
}
