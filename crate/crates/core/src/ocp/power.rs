use crate::ad::Real;
use crate::error::{Error, Result};
use crate::powertrain::{BatteryCircuit, LossPolyFit};
use crate::thermal::Losses;

/// Electrical side of the drivetrain: two machines, each fed by its own
/// inverter, both inverters on one battery, plus a constant auxiliary load.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowertrainParams {
    pub machine: LossPolyFit,
    pub inverter: LossPolyFit,
    pub battery: BatteryCircuit,
    /// Sensors, compute and pumps, W.
    pub aux_power: f64,
}

impl Default for PowertrainParams {
    fn default() -> Self {
        Self {
            machine: LossPolyFit { a: 1.5e-7, b: 1.02, c: 500.0 },
            inverter: LossPolyFit { a: 5e-8, b: 1.01, c: 200.0 },
            battery: BatteryCircuit { u_ocv: 720.0, r_i: 0.08 },
            aux_power: 1000.0,
        }
    }
}

impl PowertrainParams {
    pub fn validate(&self) -> Result<()> {
        LossPolyFit::new(self.machine.a, self.machine.b, self.machine.c)?;
        LossPolyFit::new(self.inverter.a, self.inverter.b, self.inverter.c)?;
        BatteryCircuit::new(self.battery.u_ocv, self.battery.r_i)?;
        if !(self.aux_power >= 0.0 && self.aux_power.is_finite()) {
            return Err(Error::InvalidParameter("aux_power must be >= 0".into()));
        }
        Ok(())
    }
}

/// Power flows through the chain for one operating point (per component
/// where a component exists twice).
#[derive(Clone, Copy, Debug)]
pub struct PowerFlow<T> {
    /// Drive power at the wheels, `F_d · v`.
    pub p_sigma: T,
    pub machine_out: T,
    pub machine_in: T,
    pub inverter_in: T,
    pub battery_out: T,
    pub battery_in: T,
    pub losses: Losses<T>,
}

/// Generic chain used inside the optimisation; the battery square root is
/// smoothly continued past its maximum-power point.
pub fn power_flow<T: Real>(pp: &PowertrainParams, f_d: T, v: T) -> PowerFlow<T> {
    let p_sigma = f_d * v;
    let machine_out = p_sigma * 0.5;
    let machine_in = pp.machine.input_power(machine_out);
    let inverter_in = pp.inverter.input_power(machine_in);
    let battery_out = inverter_in * 2.0 + pp.aux_power;
    let battery_in = pp.battery.input_power_smooth(battery_out);
    PowerFlow {
        p_sigma,
        machine_out,
        machine_in,
        inverter_in,
        battery_out,
        battery_in,
        losses: Losses {
            machine: machine_in - machine_out,
            inverter: inverter_in - machine_in,
            battery: battery_in - battery_out,
        },
    }
}

/// Chain evaluation for one operating point. Braking is mechanical, so only
/// the drive force loads the powertrain.
pub fn power_chain(pp: &PowertrainParams, f_d: f64, v: f64) -> Result<PowerFlow<f64>> {
    let flow = power_flow(pp, f_d, v);
    let max = pp.battery.max_output_power();
    if flow.battery_out > max {
        return Err(Error::InfeasiblePower {
            requested: flow.battery_out,
            max,
        });
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powertrain::battery_input_power;

    const BATTERY_LOSS: f64 = 4118.743425971814;

    #[test]
    fn lossless_coasting_has_no_losses() {
        let pp = PowertrainParams {
            machine: LossPolyFit::LOSSLESS,
            inverter: LossPolyFit::LOSSLESS,
            aux_power: 0.0,
            ..Default::default()
        };
        let f = power_chain(&pp, 0.0, 40.0).unwrap();
        assert_eq!(f.losses.machine, 0.0);
        assert_eq!(f.losses.inverter, 0.0);
        assert_eq!(f.losses.battery, 0.0);
    }

    #[test]
    fn mid_power_composition() {
        // 6 kN at 25 m/s = 150 kW at the wheels; values from an independent
        // step-by-step evaluation of the three maps
        let pp = PowertrainParams::default();
        let f = power_chain(&pp, 6000.0, 25.0).unwrap();
        assert_eq!(f.p_sigma, 150_000.0);
        assert!((f.losses.machine - 2843.75).abs() < 1e-9, "{}", f.losses.machine);
        assert!((f.losses.inverter - 1281.419970703122).abs() < 1e-8, "{}", f.losses.inverter);
        assert!((f.battery_out - 159250.33994140624).abs() < 1e-7);
        // battery loss from the current: I = (U - sqrt(U² - 4 P R)) / 2R, loss = I² R
        assert!((f.losses.battery - BATTERY_LOSS).abs() < 1e-6, "{}", f.losses.battery);
        let p_bi = battery_input_power(&pp.battery, f.battery_out).unwrap();
        assert!((f.battery_in - p_bi).abs() < 1e-9);
    }

    #[test]
    fn infeasible_battery_power_is_reported() {
        let pp = PowertrainParams {
            battery: BatteryCircuit { u_ocv: 100.0, r_i: 0.1 },
            ..Default::default()
        };
        assert!(matches!(
            power_chain(&pp, 10_000.0, 50.0),
            Err(Error::InfeasiblePower { .. })
        ));
    }
}
