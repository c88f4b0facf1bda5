use crate::error::{Error, Result};
use crate::thermal::ThermalState;
use crate::vehicle::VehicleState;

/// Lower and upper temperature limits per component, °C, in state order
/// `(T_M, T_I, T_B, T_F1, T_F2)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureLimits {
    pub min: [f64; 5],
    pub max: [f64; 5],
}

impl Default for TemperatureLimits {
    fn default() -> Self {
        Self {
            min: [0.0; 5],
            max: [180.0, 100.0, 50.0, 90.0, 60.0],
        }
    }
}

impl TemperatureLimits {
    pub const NAMES: [&'static str; 5] = ["T_M", "T_I", "T_B", "T_F1", "T_F2"];

    pub fn validate(&self) -> Result<()> {
        for i in 0..5 {
            if !(self.min[i] < self.max[i]) {
                return Err(Error::InvalidParameter(format!(
                    "{}: limits [{}, {}] are empty",
                    Self::NAMES[i],
                    self.min[i],
                    self.max[i]
                )));
            }
        }
        Ok(())
    }
}

/// How the driving-dynamics states are constrained at the horizon ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DrivingBoundary {
    /// Start state equals end state (flying, periodic run).
    Cyclic,
    /// Start state fixed, end state free.
    Pinned(VehicleState),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySpec {
    pub initial_temperatures: ThermalState,
    pub driving: DrivingBoundary,
}

impl BoundarySpec {
    /// All components at 30 °C.
    pub fn cold() -> Self {
        Self {
            initial_temperatures: ThermalState::uniform(30.0),
            driving: DrivingBoundary::Cyclic,
        }
    }

    /// Pre-heated powertrain: machine 100, inverter 70, battery 48, circuit
    /// one 55 and circuit two 40 °C.
    pub fn hot() -> Self {
        Self {
            initial_temperatures: ThermalState::from_array([100.0, 70.0, 48.0, 55.0, 40.0]),
            driving: DrivingBoundary::Cyclic,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "cold" => Some(Self::cold()),
            "hot" => Some(Self::hot()),
            _ => None,
        }
    }

    /// Initial temperatures must lie inside the box they will be held to.
    pub fn validate(&self, limits: &TemperatureLimits) -> Result<()> {
        let t0 = self.initial_temperatures.to_array();
        for i in 0..5 {
            if !(t0[i] >= limits.min[i] && t0[i] <= limits.max[i]) {
                return Err(Error::InvalidParameter(format!(
                    "initial {} = {} °C lies outside its limits [{}, {}]",
                    TemperatureLimits::NAMES[i],
                    t0[i],
                    limits.min[i],
                    limits.max[i]
                )));
            }
        }
        if let DrivingBoundary::Pinned(vs) = self.driving {
            if !(vs.v > 0.0) || vs.to_array().iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("pinned start needs finite state with v > 0".into()));
            }
        }
        Ok(())
    }
}
