//! Heat up the cooling circuits under constant losses and watch them settle.
//!
//! The machine/inverter loop and the battery loop are integrated with the
//! same fixed-step RK4 used for verification.

use evrace::ocp::ModelParams;
use evrace::sim::simulate_thermal;
use evrace::thermal::{Losses, ThermalState};

fn main() -> evrace::Result<()> {
    let params = ModelParams::default();
    let model = params.thermal_model()?;
    let losses = Losses { machine: 6e3, inverter: 2.5e3, battery: 4e3 };
    let start = ThermalState::uniform(30.0).to_array();
    let run = simulate_thermal(&model, start, &|_| losses, [false; 5], 3600.0, 0.5)?;

    println!("{:>7} {:>7} {:>7} {:>7} {:>7} {:>7}", "t s", "T_M", "T_I", "T_B", "T_F1", "T_F2");
    for (t, y) in run.iter().step_by(600) {
        println!("{:>7.0} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}", t, y[0], y[1], y[2], y[3], y[4]);
    }
    let (_, last) = run.last().copied().unwrap();
    let rates = model.rates(&last, &losses);
    println!("rates after one hour, K/s: {:?}", rates.map(|r| format!("{r:.1e}")));
    for (name, i) in [("machine", 0), ("inverter", 1), ("battery", 2)] {
        println!("{name:<8} limit {:>5.1} °C  reached {:>6.2} °C", params.limits.max[i], last[i]);
    }
    Ok(())
}
