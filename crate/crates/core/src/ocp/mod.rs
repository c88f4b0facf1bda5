//! Minimum-time optimal control problem: model parameters, boundary
//! conditions, the collocation transcription and solution handling.

pub mod boundary;
pub mod guess;
pub mod power;
pub mod solution;
pub mod transcription;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::thermal::{MotorGeometry, ThermalModel, ThermalParams};
use crate::vehicle::VehicleParams;

pub use boundary::{BoundarySpec, DrivingBoundary, TemperatureLimits};
pub use guess::initial_guess;
pub use power::{power_chain, power_flow, PowerFlow, PowertrainParams};
pub use solution::{ActivityReport, Solution};
pub use transcription::{build_nlp, NlpCounts, RaceNlp, TranscriptionOptions};

/// Everything that describes the car, independent of track and scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub vehicle: VehicleParams,
    pub powertrain: PowertrainParams,
    pub thermal: ThermalParams,
    pub geometry: MotorGeometry,
    pub limits: TemperatureLimits,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            powertrain: PowertrainParams::default(),
            thermal: ThermalParams {
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
            },
            geometry: MotorGeometry {
                r1: 0.02,
                r2: 0.06,
                r3: 0.065,
                r4: 0.1,
                length: 0.2,
                k_iro: 45.0,
                h_f: 3000.0,
                h_g: 100.0,
            },
            limits: TemperatureLimits::default(),
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.powertrain.validate()?;
        self.thermal.validate()?;
        self.geometry.validate()?;
        self.limits.validate()
    }

    pub fn thermal_model(&self) -> Result<ThermalModel> {
        ThermalModel::new(self.thermal, &self.geometry)
    }
}
