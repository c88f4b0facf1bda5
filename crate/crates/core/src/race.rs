//! End-to-end race solve on a [`Scenario`]: mesh, transcription, starting
//! point, interior-point solve and the output files.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{files, Scenario, TOOL_VERSION};
use crate::error::{Error, Result};
use crate::nlp::{solve, IterLog, SolveReport, SolveStatus};
use crate::ocp::{build_nlp, initial_guess, NlpCounts, Solution, TemperatureLimits};
use crate::sim::{verify_solution, ReplayMode, SimTrace, VerifyOptions, VerifyReport};
use crate::vehicle::{generate_mesh, Mesh};

/// Temperatures within this distance of their limit count as active, K.
pub const ACTIVE_TOL_KELVIN: f64 = 1e-3;
/// Power and friction within this fraction of their limit count as active.
pub const ACTIVE_TOL_REL: f64 = 1e-3;

/// Outcome of one solve. The trajectory is the final iterate whether or not
/// the solver converged; check [`RaceRun::converged`].
#[derive(Clone, Debug)]
pub struct RaceRun {
    pub mesh: Mesh,
    pub counts: NlpCounts,
    pub report: SolveReport,
    pub solution: Solution,
}

impl RaceRun {
    pub fn converged(&self) -> bool {
        self.report.status == SolveStatus::Optimal
    }

    /// `Err(Error::Solver)` unless the solver reached the optimum.
    pub fn require_optimal(&self) -> Result<()> {
        if self.converged() {
            Ok(())
        } else {
            Err(Error::Solver(format!(
                "{} after {} iterations (inf_pr {:.2e}, inf_du {:.2e}){}",
                self.report.status,
                self.report.iterations,
                self.report.inf_pr,
                self.report.inf_du,
                if self.report.message.is_empty() { String::new() } else { format!(": {}", self.report.message) }
            )))
        }
    }
}

/// Build and solve the race of `scenario`.
pub fn solve_race(scenario: &Scenario) -> Result<RaceRun> {
    let mesh = generate_mesh(&scenario.track, &scenario.mesh)?;
    let nlp = build_nlp(&scenario.track, &mesh, &scenario.params, &scenario.boundary, &scenario.transcription)?;
    let z0 = initial_guess(&nlp);
    let result = solve(&nlp, &z0, &scenario.solver)?;
    let solution = Solution::from_nlp(&nlp, &result.x)?;
    Ok(RaceRun {
        counts: nlp.counts(),
        mesh,
        report: result.report,
        solution,
    })
}

/// Forward-simulation checks of a solution: the scenario's own replay mode
/// and, when that is not already it, the plain open-loop replay.
#[derive(Clone, Debug)]
pub struct Verification {
    pub configured: VerifyReport,
    pub trace: SimTrace,
    pub open_loop: Option<VerifyReport>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.configured.passed()
    }
}

pub fn verify(scenario: &Scenario, solution: &Solution) -> Result<Verification> {
    let (configured, trace) = verify_solution(&scenario.params, &scenario.track, solution, &scenario.verify)?;
    let open_loop = if scenario.verify.mode == ReplayMode::OpenLoop {
        None
    } else {
        let opts = VerifyOptions { mode: ReplayMode::OpenLoop, ..scenario.verify };
        Some(verify_solution(&scenario.params, &scenario.track, solution, &opts)?.0)
    };
    Ok(Verification { configured, trace, open_loop })
}

fn header(scenario: &Scenario) -> String {
    format!("# {TOOL_VERSION}\n# config_sha256 = {}\n# scenario = {}\n", scenario.config_hash(), scenario.name)
}

/// One-line description of a replay configuration.
pub fn describe_replay(opts: &VerifyOptions) -> String {
    match opts.mode {
        ReplayMode::OpenLoop => format!("open-loop replay, dt {} s", opts.dt),
        ReplayMode::Segmented => format!(
            "segmented replay restarting every {} interval(s), dt {} s",
            opts.segment_intervals, opts.dt
        ),
    }
}

/// Human-readable summary of a race: time, splits, solver statistics,
/// active constraints and, if given, the verification results.
pub fn summary_text(scenario: &Scenario, run: &RaceRun, verification: Option<&Verification>) -> String {
    let sol = &run.solution;
    let p = &scenario.params;
    let c = &run.counts;
    let r = &run.report;
    let mut out = header(scenario);
    let _ = writeln!(out, "\n[race]");
    let _ = writeln!(out, "race_time_s        {:.6}", sol.race_time());
    for (i, t) in sol.lap_times().iter().enumerate() {
        let _ = writeln!(out, "lap_{}_s            {:.6}", i + 1, t);
    }
    let _ = writeln!(out, "mean_drive_kw      {:.3}", 1e-3 * sol.mean_drive_power());
    let _ = writeln!(out, "battery_energy_kj  {:.3}", 1e-3 * sol.battery_energy(p));

    let _ = writeln!(out, "\n[problem]");
    let _ = writeln!(out, "nodes              {}", c.nodes);
    let _ = writeln!(out, "variables          {}", c.variables);
    let _ = writeln!(out, "constraints        {} ({} equality, {} inequality)", c.constraints, c.equalities, c.inequalities);
    let _ = writeln!(out, "jacobian_nnz       {}", c.jacobian_nnz);
    let _ = writeln!(out, "hessian_nnz        {}", c.hessian_nnz);

    let _ = writeln!(out, "\n[solver]");
    let _ = writeln!(out, "status             {}", r.status);
    let _ = writeln!(out, "iterations         {}", r.iterations);
    let _ = writeln!(out, "objective          {:.9e}", r.objective);
    let _ = writeln!(out, "inf_pr             {:.3e}", r.inf_pr);
    let _ = writeln!(out, "inf_du             {:.3e}", r.inf_du);
    let _ = writeln!(out, "complementarity    {:.3e}", r.complementarity);
    if !r.message.is_empty() {
        let _ = writeln!(out, "message            {}", r.message);
    }

    let _ = writeln!(out, "\n[temperatures]");
    for (i, name) in TemperatureLimits::NAMES.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<5} start {:>7.2}  max {:>7.2}  end {:>7.2}  limit {:>6.1} °C",
            name,
            sol.states[0][5 + i],
            sol.max_temperature(i),
            sol.states[sol.nodes() - 1][5 + i],
            p.limits.max[i]
        );
    }

    let activity = sol.activity(p, ACTIVE_TOL_KELVIN, ACTIVE_TOL_REL);
    let _ = writeln!(out, "\n[active constraints]");
    let _ = writeln!(out, "{activity}");
    for (a, b) in activity.power_cap_runs() {
        let _ = writeln!(out, "  power cap from s = {:.1} m to {:.1} m", sol.s[a], sol.s[b]);
    }

    if let Some(v) = verification {
        out.push_str(&verification_block(scenario, v));
    }
    out
}

fn verification_block(scenario: &Scenario, v: &Verification) -> String {
    let mut out = format!("\n[verification: {}]\n{}\n", describe_replay(&scenario.verify), v.configured);
    if let Some(ol) = &v.open_loop {
        let _ = writeln!(out, "\n[verification: open-loop replay, dt {} s, for reference]\n{ol}", scenario.verify.dt);
    }
    out
}

/// Iteration table plus the final report, for failed solves.
pub fn solver_report_text(scenario: &Scenario, report: &SolveReport) -> String {
    let mut out = header(scenario);
    let _ = writeln!(out, "{report}");
    let _ = writeln!(out, "{}", IterLog::header());
    for row in &report.log {
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Per-node trajectory with the scenario header.
pub fn solution_csv(scenario: &Scenario, solution: &Solution) -> String {
    let mut meta = scenario.metadata();
    meta.push(("laps".into(), solution.laps.to_string()));
    meta.push(("race_time_s".into(), format!("{:.9}", solution.race_time())));
    solution.to_csv(&meta)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write the solution directory: resolved scenario, mesh, trajectory and
/// summary (plus the iteration log when the solver did not converge).
pub fn write_outputs(dir: &Path, scenario: &Scenario, run: &RaceRun, verification: Option<&Verification>) -> Result<()> {
    scenario.write_resolved(dir)?;
    write(&dir.join(files::MESH), &run.mesh.to_csv(&scenario.track))?;
    write(&dir.join(files::SOLUTION), &solution_csv(scenario, &run.solution))?;
    write(&dir.join(files::SUMMARY), &summary_text(scenario, run, verification))?;
    if !run.converged() {
        write(&dir.join(files::SOLVER_REPORT), &solver_report_text(scenario, &run.report))?;
    }
    Ok(())
}

/// Load a solution directory written by [`write_outputs`].
pub fn load_solution_dir(dir: &Path) -> Result<(Scenario, Solution)> {
    let scenario = Scenario::load(dir.join(files::SCENARIO))?;
    let path = dir.join(files::SOLUTION);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta = Solution::csv_metadata(&text);
    if let Some((_, hash)) = meta.iter().find(|(k, _)| k == "config_sha256") {
        if *hash != scenario.config_hash() {
            return Err(Error::parse(&path, "trajectory was produced by a different configuration"));
        }
    }
    let solution = Solution::from_csv(&text, &scenario.track).map_err(|e| match e {
        Error::Parse { msg, .. } => Error::parse(&path, msg),
        other => other,
    })?;
    Ok((scenario, solution))
}

/// Verification report file.
pub fn verify_text(scenario: &Scenario, v: &Verification) -> String {
    header(scenario) + &verification_block(scenario, v)
}
