//! Check an optimal trajectory by forward simulation in the time domain.
//!
//! The open-loop replay integrates the whole race from the initial state
//! with the optimal controls; the segmented replay restarts from the
//! collocation state every few intervals and so measures the local
//! transcription error without the unstable yaw mode taking over.

use evrace::nlp::{solve, SolverOptions};
use evrace::ocp::{build_nlp, initial_guess, BoundarySpec, ModelParams, Solution, TranscriptionOptions};
use evrace::sim::{verify_solution, ReplayMode, VerifyOptions};
use evrace::vehicle::{generate_mesh, synthetic_oval, MeshOptions};

fn main() -> evrace::Result<()> {
    let track = synthetic_oval(5.0, 12.0).with_laps(1);
    let params = ModelParams::default();
    let mesh = generate_mesh(&track, &MeshOptions::default())?;
    let nlp = build_nlp(&track, &mesh, &params, &BoundarySpec::cold(), &TranscriptionOptions::default())?;
    let result = solve(&nlp, &initial_guess(&nlp), &SolverOptions::default())?;
    let solution = Solution::from_nlp(&nlp, &result.x)?;
    println!("one lap: {:.4} s ({})", solution.race_time(), result.report.status);

    for (mode, k) in [(ReplayMode::OpenLoop, 0), (ReplayMode::Segmented, 40), (ReplayMode::Segmented, 10)] {
        let opts = VerifyOptions { mode, segment_intervals: k.max(1), dt: 1e-3, ..Default::default() };
        let (report, trace) = verify_solution(&params, &track, &solution, &opts)?;
        println!(
            "\n{mode:?}{}: {} after {:.3} s",
            if k > 0 { format!(" every {k} intervals") } else { String::new() },
            if report.passed() { "pass" } else { "FAIL" },
            trace.final_time()
        );
        println!("{report}");
    }
    Ok(())
}
