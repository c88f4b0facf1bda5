//! Solve the bundled cold-start scenario and print its summary.
//!
//! ```text
//! cargo run --release --example cold_race
//! ```

use std::path::PathBuf;

use evrace::config::Scenario;
use evrace::race;

fn main() -> evrace::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join("cold.toml");
    let mut scenario = Scenario::load(path)?;
    scenario.solver.print_log = false;

    let run = race::solve_race(&scenario)?;
    run.require_optimal()?;
    let verification = race::verify(&scenario, &run.solution)?;
    print!("{}", race::summary_text(&scenario, &run, Some(&verification)));

    // where the car is fastest and slowest
    let v = |k: usize| run.solution.states[k][0];
    let (fast, slow) = (0..run.solution.nodes()).fold((0, 0), |(f, s), k| {
        (if v(k) > v(f) { k } else { f }, if v(k) < v(s) { k } else { s })
    });
    println!(
        "\ntop speed {:.1} km/h at s = {:.0} m, slowest {:.1} km/h at s = {:.0} m",
        3.6 * v(fast),
        run.solution.s[fast],
        3.6 * v(slow),
        run.solution.s[slow]
    );
    Ok(())
}
