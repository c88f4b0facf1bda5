//! Fit quadratic loss models to the bundled machine and inverter
//! measurements and tabulate the fitted losses.
//!
//! ```text
//! cargo run --example fit_losses
//! ```

use std::path::PathBuf;

use evrace::powertrain::{fit_parabola_named, MeasurementSet};

fn main() -> evrace::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    for component in ["machine", "inverter"] {
        let set = MeasurementSet::from_csv(data.join(format!("{component}.csv")))?;
        let (lo, hi) = set.output_range();
        let (fit, report) = fit_parabola_named(&set, component)?;
        println!("{report}");
        println!("  {} samples, output {:.1} .. {:.1} kW", set.len(), lo / 1e3, hi / 1e3);
        for p_out in [0.0, 25e3, 50e3, 100e3, 135e3] {
            let loss = fit.loss(p_out);
            let eff = if p_out > 0.0 { 100.0 * p_out / (p_out + loss) } else { 0.0 };
            println!("  P_out {:>6.1} kW  loss {:>6.2} kW  efficiency {:>5.1} %", p_out / 1e3, loss / 1e3, eff);
        }
    }
    Ok(())
}
