//! Build the collocation mesh for two laps of the synthetic oval.
//!
//! Steps are fine in the corners and their transitions, coarse on the
//! straights; every curvature breakpoint is a node.

use evrace::ocp::NlpCounts;
use evrace::vehicle::{generate_mesh, synthetic_oval, MeshOptions};

fn main() -> evrace::Result<()> {
    let track = synthetic_oval(5.0, 12.0).with_laps(2);
    for opts in [MeshOptions::default(), MeshOptions { ds_fine: 1.5, ds_coarse: 4.0, ..Default::default() }] {
        let mesh = generate_mesh(&track, &opts)?;
        let (n, m) = NlpCounts::for_intervals(mesh.intervals());
        println!(
            "fine {} m / coarse {} m: {} nodes over {:.0} m -> {n} variables, {m} constraints",
            opts.ds_fine,
            opts.ds_coarse,
            mesh.nodes(),
            mesh.horizon()
        );
    }

    let mesh = generate_mesh(&track, &MeshOptions::default())?;
    println!("\n{:>9} {:>8} {:>10}", "s m", "step m", "kappa 1/m");
    let mut s = 0.0;
    for k in 0..mesh.intervals() / 2 {
        let h = mesh.step(k);
        if k % 5 == 0 {
            println!("{:>9.2} {:>8.3} {:>10.5}", s, h, track.kappa_at(s));
        }
        s += h;
    }
    Ok(())
}
