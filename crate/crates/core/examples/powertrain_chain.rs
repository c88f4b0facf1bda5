//! Follow one operating point from the wheels back to the battery cells.

use evrace::ocp::{power_chain, PowertrainParams};

fn main() -> evrace::Result<()> {
    let pp = PowertrainParams::default();
    println!("battery can deliver at most {:.0} kW", pp.battery.max_output_power() / 1e3);
    println!("{:>8} {:>8} | {:>9} {:>9} {:>9} {:>9} | {:>6}", "v m/s", "F_d N", "wheels kW", "machine", "inverter", "battery", "eff %");
    for (v, f_d) in [(20.0, 4000.0), (40.0, 3000.0), (60.0, 3500.0), (80.0, 3375.0)] {
        let flow = power_chain(&pp, f_d, v)?;
        let l = flow.losses;
        println!(
            "{:>8.1} {:>8.0} | {:>9.1} {:>9.2} {:>9.2} {:>9.2} | {:>6.1}",
            v,
            f_d,
            flow.p_sigma / 1e3,
            2.0 * l.machine / 1e3,
            2.0 * l.inverter / 1e3,
            l.battery / 1e3,
            100.0 * flow.p_sigma / flow.battery_in
        );
    }
    // a request beyond the cells' maximum-power point is refused
    match power_chain(&pp, 20_000.0, 90.0) {
        Err(e) => println!("1800 kW at the wheels: {e}"),
        Ok(flow) => println!("unexpectedly feasible: {:.0} kW", flow.battery_in / 1e3),
    }
    Ok(())
}
