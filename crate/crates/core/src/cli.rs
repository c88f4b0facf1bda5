//! Command-line front end: `fit`, `race`, `verify` and `mesh`.
//!
//! Every command returns a process exit code: 0 success, 1 I/O, 2 bad data
//! or parameters, 3 solver failure, 4 failed verification.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{files, Scenario};
use crate::error::{Error, Result};
use crate::ocp::NlpCounts;
use crate::powertrain::{fit_parabola_named, MeasurementSet};
use crate::race;
use crate::sim::ReplayMode;
use crate::vehicle::generate_mesh;

#[derive(Debug, Parser)]
#[command(name = "evrace", version, about = "Minimum race-time strategies for electric racecars")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a quadratic loss model to measured input/output power.
    Fit {
        /// Measurement CSV with header `p_out_w,p_in_w`.
        #[arg(long)]
        data: PathBuf,
        /// Component name used in the report and its file name.
        #[arg(long, default_value = "component")]
        component: String,
        /// Directory for `<component>_fit.toml`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve a race scenario and verify the result by forward simulation.
    Race {
        #[arg(long)]
        scenario: PathBuf,
        /// Solution directory; overrides the scenario's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
        /// Integration step of the verification replay, s.
        #[arg(long)]
        dt: Option<f64>,
        /// Do not print the iteration log.
        #[arg(long)]
        quiet: bool,
    },
    /// Re-verify a solution directory written by `race`.
    Verify {
        /// Solution directory.
        dir: PathBuf,
        /// Integration step, s.
        #[arg(long)]
        dt: Option<f64>,
        /// Replay mode: `open-loop` or `segmented`.
        #[arg(long)]
        mode: Option<ReplayMode>,
        /// Intervals per segment in segmented mode.
        #[arg(long)]
        segment_intervals: Option<usize>,
        /// Where to write the report and the trace; defaults to the solution directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep every n-th sample in the exported trace.
        #[arg(long, default_value_t = 100)]
        trace_stride: usize,
    },
    /// Build the mesh of a scenario and print its statistics.
    Mesh {
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for `mesh.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    #[arg(long)]
    pub tol_feas: Option<f64>,
    #[arg(long)]
    pub tol_opt: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl std::str::FromStr for ReplayMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "open-loop" => Ok(ReplayMode::OpenLoop),
            "segmented" => Ok(ReplayMode::Segmented),
            _ => Err(format!("unknown replay mode `{s}` (open-loop | segmented)")),
        }
    }
}

/// Parse `args` and run the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Fit { data, component, out } => cmd_fit(&data, &component, &out),
        Command::Race { scenario, out, solver, dt, quiet } => {
            let mut sc = Scenario::load(&scenario)?;
            if let Some(dir) = out {
                sc.output = dir;
            }
            apply_solver_flags(&mut sc, &solver)?;
            if let Some(dt) = dt {
                sc.verify.dt = dt;
            }
            sc.solver.print_log = !quiet;
            cmd_race(&sc)
        }
        Command::Verify { dir, dt, mode, segment_intervals, out, trace_stride } => {
            let (mut sc, solution) = race::load_solution_dir(&dir)?;
            if let Some(dt) = dt {
                sc.verify.dt = dt;
            }
            if let Some(mode) = mode {
                sc.verify.mode = mode;
            }
            if let Some(k) = segment_intervals {
                sc.verify.segment_intervals = k;
            }
            let out = out.unwrap_or(dir);
            cmd_verify(&sc, &solution, &out, trace_stride)
        }
        Command::Mesh { scenario, out } => cmd_mesh(&Scenario::load(&scenario)?, out.as_deref()),
    }
}

fn apply_solver_flags(sc: &mut Scenario, flags: &SolverFlags) -> Result<()> {
    if let Some(v) = flags.tol_feas {
        sc.solver.tol_feas = v;
    }
    if let Some(v) = flags.tol_opt {
        sc.solver.tol_opt = v;
    }
    if let Some(v) = flags.max_iter {
        sc.solver.max_iter = v;
    }
    sc.solver.validate()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_fit(data: &Path, component: &str, out: &Path) -> Result<i32> {
    let set = MeasurementSet::from_csv(data)?;
    let (_, report) = fit_parabola_named(&set, component)?;
    create_dir(out)?;
    let path = out.join(format!("{component}_fit.toml"));
    write(&path, &report.to_text())?;
    println!("{report}");
    println!("wrote {}", path.display());
    Ok(0)
}

pub fn cmd_race(sc: &Scenario) -> Result<i32> {
    let dir = sc.output.clone();
    create_dir(&dir)?;
    let started = std::time::Instant::now();
    let run = race::solve_race(sc)?;
    let wall = started.elapsed();
    print_counts(&run.counts);
    if let Err(e) = run.require_optimal() {
        sc.write_resolved(&dir)?;
        // a trajectory from an earlier run must not pass for this one
        let _ = std::fs::remove_file(dir.join(files::SOLUTION));
        let path = dir.join(files::SOLVER_REPORT);
        write(&path, &race::solver_report_text(sc, &run.report))?;
        eprint!("{}", run.report);
        eprintln!("solver report written to {}", path.display());
        return Err(e);
    }
    let verification = race::verify(sc, &run.solution)?;
    race::write_outputs(&dir, sc, &run, Some(&verification))?;
    println!(
        "race time {:.4} s, laps {}, {} iterations in {:.1} s",
        run.solution.race_time(),
        run.solution
            .lap_times()
            .iter()
            .map(|t| format!("{t:.3}"))
            .collect::<Vec<_>>()
            .join(" / "),
        run.report.iterations,
        wall.as_secs_f64()
    );
    print_verification(sc, &verification);
    println!("outputs in {}", dir.display());
    Ok(if verification.passed() { 0 } else { 4 })
}

fn print_counts(c: &NlpCounts) {
    println!(
        "{} nodes, {} variables, {} constraints ({} equality)",
        c.nodes, c.variables, c.constraints, c.equalities
    );
}

fn print_verification(sc: &Scenario, v: &race::Verification) {
    let verdict = |passed: bool| if passed { "pass" } else { "FAIL" };
    let c = &v.configured;
    println!(
        "verification ({}): {} — race time mismatch {:.3} %{}",
        race::describe_replay(&sc.verify),
        verdict(c.passed()),
        100.0 * c.race_time_rel,
        if c.passed() { String::new() } else { format!(", failing: {}", failing(c)) }
    );
    if let Some(ol) = &v.open_loop {
        println!(
            "open-loop replay (reference): {} — {}, race time mismatch {:.3} %{}",
            verdict(ol.passed()),
            ol.termination,
            100.0 * ol.race_time_rel,
            if ol.passed() { String::new() } else { format!(", failing: {}", failing(ol)) }
        );
    }
}

fn failing(r: &crate::sim::VerifyReport) -> String {
    let mut items: Vec<String> = r.failing_states().iter().map(|s| s.to_string()).collect();
    if !r.completed() {
        items.insert(0, "incomplete run".into());
    } else if !r.time_ok() {
        items.insert(0, "race time".into());
    }
    items.join(", ")
}

pub fn cmd_verify(sc: &Scenario, solution: &crate::ocp::Solution, out: &Path, trace_stride: usize) -> Result<i32> {
    let v = race::verify(sc, solution)?;
    create_dir(out)?;
    write(&out.join(files::VERIFY), &race::verify_text(sc, &v))?;
    write(&out.join(files::TRACE), &v.trace.to_csv(trace_stride))?;
    println!("{}", v.configured);
    print_verification(sc, &v);
    Ok(if v.passed() { 0 } else { 4 })
}

pub fn cmd_mesh(sc: &Scenario, out: Option<&Path>) -> Result<i32> {
    let mesh = generate_mesh(&sc.track, &sc.mesh)?;
    let steps: Vec<f64> = (0..mesh.intervals()).map(|k| mesh.step(k)).collect();
    let (lo, hi) = steps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
    let (n, m) = NlpCounts::for_intervals(mesh.intervals());
    println!("horizon {:.3} m over {} lap(s)", mesh.horizon(), mesh.laps);
    println!("{} nodes, {} intervals, step {:.3} .. {:.3} m", mesh.nodes(), mesh.intervals(), lo, hi);
    println!("NLP size: {n} variables, {m} constraints");
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join(files::MESH);
        write(&path, &mesh.to_csv(&sc.track))?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}
