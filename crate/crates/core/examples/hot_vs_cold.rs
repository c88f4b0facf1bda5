//! Compare the race from cold components with a start at the thermal limits.
//!
//! The hot car has to cap its power on the straights to keep the battery
//! under its limit, and loses time doing so.

use std::path::PathBuf;

use evrace::config::Scenario;
use evrace::ocp::TemperatureLimits;
use evrace::race::{self, RaceRun};

fn solve(name: &str) -> evrace::Result<(Scenario, RaceRun)> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    let mut sc = Scenario::load(path)?;
    sc.solver.print_log = false;
    let run = race::solve_race(&sc)?;
    run.require_optimal()?;
    Ok((sc, run))
}

fn main() -> evrace::Result<()> {
    let (_, cold) = solve("cold.toml")?;
    let (hot_sc, hot) = solve("hot.toml")?;
    let (c, h) = (&cold.solution, &hot.solution);

    println!("{:<24} {:>10} {:>10}", "", "cold", "hot");
    println!("{:<24} {:>10.4} {:>10.4}", "race time, s", c.race_time(), h.race_time());
    for (i, (a, b)) in c.lap_times().iter().zip(h.lap_times()).enumerate() {
        println!("{:<24} {:>10.4} {:>10.4}", format!("lap {}, s", i + 1), a, b);
    }
    println!("{:<24} {:>10.1} {:>10.1}", "mean drive power, kW", c.mean_drive_power() / 1e3, h.mean_drive_power() / 1e3);
    for (i, name) in TemperatureLimits::NAMES.iter().enumerate() {
        println!("{:<24} {:>10.2} {:>10.2}", format!("max {name}, °C"), c.max_temperature(i), h.max_temperature(i));
    }
    println!("time lost to heat: {:.3} s", h.race_time() - c.race_time());

    let activity = h.activity(&hot_sc.params, race::ACTIVE_TOL_KELVIN, race::ACTIVE_TOL_REL);
    println!("\nhot race constraint activity:\n{activity}");
    Ok(())
}
