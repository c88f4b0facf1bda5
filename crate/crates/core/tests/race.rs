//! Solved-scenario properties on the bundled oval.

use std::path::PathBuf;
use std::sync::OnceLock;

use evrace::config::Scenario;
use evrace::ocp::Solution;
use evrace::race::{self, RaceRun};
use evrace::sim::{verify_solution, ReplayMode, VerifyOptions, STATE_NAMES};
use evrace::vehicle::dynamics::{su, sx};
use evrace::vehicle::NX;

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name);
    let mut sc = Scenario::load(path).unwrap();
    sc.solver.print_log = false;
    sc
}

fn cold() -> &'static (Scenario, RaceRun) {
    static COLD: OnceLock<(Scenario, RaceRun)> = OnceLock::new();
    COLD.get_or_init(|| {
        let sc = scenario("cold.toml");
        let run = race::solve_race(&sc).unwrap();
        run.require_optimal().unwrap();
        (sc, run)
    })
}

fn segmented(dt: f64) -> VerifyOptions {
    VerifyOptions { mode: ReplayMode::Segmented, segment_intervals: 20, dt, ..Default::default() }
}

#[test]
fn solver_statistics_are_sane() {
    let (_, run) = cold();
    assert_eq!(run.counts.nodes, 231);
    assert!(run.report.iterations < 200, "{} iterations", run.report.iterations);
    assert!(run.report.inf_pr <= 1e-6);
    let laps = run.solution.lap_times();
    assert_eq!(laps.len(), 2);
    assert!((laps.iter().sum::<f64>() - run.solution.race_time()).abs() < 1e-9);
    // a flying start on a cyclic horizon: both laps take the same time
    assert!((laps[0] - laps[1]).abs() < 1e-3, "{laps:?}");
}

#[test]
fn more_drive_force_is_faster_or_flagged() {
    let (sc, run) = cold();
    let mut pushed: Solution = run.solution.clone();
    for u in &mut pushed.controls {
        u[su::F_D] *= 1.01;
    }
    let opts = segmented(1e-3);
    let (base, base_trace) = verify_solution(&sc.params, &sc.track, &run.solution, &opts).unwrap();
    let (more, more_trace) = verify_solution(&sc.params, &sc.track, &pushed, &opts).unwrap();
    // the replays now differ from the collocation states
    assert!(more.max_deviation.iter().zip(&base.max_deviation).any(|(a, b)| a > b));
    let faster = more_trace.final_time() < base_trace.final_time();
    // the extra force breaks the power cap wherever the optimum rides on it
    let cap_broken = pushed
        .states
        .iter()
        .zip(&pushed.controls)
        .any(|(x, u)| u[su::F_D] * x[sx::V] > sc.params.vehicle.p_max * (1.0 + 1e-6));
    assert!(faster || cap_broken);
    assert!(faster, "replay time {} vs {}", more_trace.final_time(), base_trace.final_time());
}

#[test]
fn halving_the_step_does_not_increase_deviations() {
    let (sc, run) = cold();
    let (coarse, _) = verify_solution(&sc.params, &sc.track, &run.solution, &segmented(1e-3)).unwrap();
    let (fine, _) = verify_solution(&sc.params, &sc.track, &run.solution, &segmented(5e-4)).unwrap();
    assert!(coarse.passed() && fine.passed());
    for i in 0..NX {
        // once the replay has converged the deviation is the transcription
        // error itself; it may then move by round-off-sized amounts
        let slack = 1e-2 * coarse.tolerances.state_abs[i];
        assert!(
            fine.max_deviation[i] <= coarse.max_deviation[i] + slack,
            "{}: {} -> {}",
            STATE_NAMES[i],
            coarse.max_deviation[i],
            fine.max_deviation[i]
        );
    }
}

#[test]
fn rescaling_all_variables_keeps_the_optimum() {
    let (sc, run) = cold();
    let mut scaled = sc.clone();
    scaled.transcription.scale_multiplier = 2.0;
    let other = race::solve_race(&scaled).unwrap();
    other.require_optimal().unwrap();
    let t = run.solution.race_time();
    assert!((other.solution.race_time() - t).abs() <= 1e-6 * t);
    for (a, b) in run.solution.states.iter().zip(&other.solution.states) {
        assert!((a[sx::V] - b[sx::V]).abs() < 1e-3);
        assert!((a[sx::N] - b[sx::N]).abs() < 1e-3);
        assert!((a[sx::T_B] - b[sx::T_B]).abs() < 1e-4);
    }
}

#[test]
fn exports_are_byte_identical_across_runs() {
    let (sc, run) = cold();
    let again = race::solve_race(sc).unwrap();
    assert_eq!(race::solution_csv(sc, &run.solution), race::solution_csv(sc, &again.solution));
    assert_eq!(race::summary_text(sc, run, None), race::summary_text(sc, &again, None));
}

#[test]
fn summary_reports_the_essentials() {
    let (sc, run) = cold();
    let v = race::verify(sc, &run.solution).unwrap();
    assert!(v.passed());
    let open = v.open_loop.as_ref().expect("segmented scenarios also report the open-loop replay");
    assert_eq!(open.mode, ReplayMode::OpenLoop);
    let text = race::summary_text(sc, run, Some(&v));
    for needle in [
        "config_sha256",
        "race_time_s",
        "lap_1_s",
        "lap_2_s",
        "status             optimal",
        "T_B   inactive",
        "segmented replay restarting every 20 interval(s)",
        "open-loop replay, dt 0.001 s, for reference",
    ] {
        assert!(text.contains(needle), "missing `{needle}` in\n{text}");
    }
}
