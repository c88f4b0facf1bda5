//! Forward integration in time, used as an independent check of the
//! collocation solution.
//!
//! The full state is integrated with classic fourth-order Runge–Kutta at a
//! fixed time step, together with the arc-length progress `s` and the energy
//! accumulators of the powertrain. Controls come from any [`ControlSource`];
//! optimised trajectories are replayed as piecewise-constant functions of
//! `s`, the same parametrisation the optimiser used.

use std::fmt;

use crate::error::{Error, Result};
use crate::ocp::{power_flow, ModelParams, Solution, TemperatureLimits};
use crate::thermal::{Losses, ThermalModel};
use crate::vehicle::dynamics::{su, sx, time_derivatives};
use crate::vehicle::{TrackData, NU, NX};

/// Integrated quantities: the ten model states, arc length, then energies
/// (battery terminal, wheels, machine losses, inverter losses, battery
/// losses, auxiliaries), all in joules.
const NY: usize = NX + 7;
const IDX_S: usize = NX;
const IDX_E: usize = NX + 1;

/// Controls as a function of time and arc length.
pub trait ControlSource {
    fn control(&self, t: f64, s: f64) -> [f64; NU];
}

impl<F: Fn(f64, f64) -> [f64; NU]> ControlSource for F {
    fn control(&self, t: f64, s: f64) -> [f64; NU] {
        self(t, s)
    }
}

/// How interval controls are turned into a function of arc length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlInterpolation {
    /// Constant over each mesh interval, exactly as the transcription uses them.
    #[default]
    Hold,
    /// Linear between interval midpoints, constant before the first and
    /// after the last midpoint.
    Linear,
}

/// Interval controls of a solution as a function of arc length.
pub struct ReplayControls<'a> {
    solution: &'a Solution,
    mode: ControlInterpolation,
    mid: Vec<f64>,
}

impl<'a> ReplayControls<'a> {
    pub fn new(solution: &'a Solution, mode: ControlInterpolation) -> Self {
        let mid = solution.s.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self { solution, mode, mid }
    }
}

impl ControlSource for ReplayControls<'_> {
    fn control(&self, _t: f64, s: f64) -> [f64; NU] {
        let u = &self.solution.controls;
        match self.mode {
            ControlInterpolation::Hold => {
                let k = self.solution.s.partition_point(|&x| x <= s).saturating_sub(1);
                u[k.min(u.len() - 1)]
            }
            ControlInterpolation::Linear => {
                let j = self.mid.partition_point(|&x| x <= s);
                if j == 0 {
                    return u[0];
                }
                if j == self.mid.len() {
                    return u[j - 1];
                }
                let w = (s - self.mid[j - 1]) / (self.mid[j] - self.mid[j - 1]);
                std::array::from_fn(|i| u[j - 1][i] + w * (u[j][i] - u[j - 1][i]))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopAt {
    /// Stop when the arc length reaches this value; the last step is shortened
    /// so that the crossing time is exact up to the integrator error.
    Distance(f64),
    /// Stop after this much time.
    Time(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// Time step, s.
    pub dt: f64,
    /// Give up after this much simulated time.
    pub max_time: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            max_time: 3600.0,
        }
    }
}

/// Energy bookkeeping over a run, J. Machine and inverter losses are for
/// both units together.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub battery_drawn: f64,
    pub wheel: f64,
    pub machine_losses: f64,
    pub inverter_losses: f64,
    pub battery_losses: f64,
    pub auxiliary: f64,
}

impl EnergyLedger {
    /// `|drawn - (wheel + losses + aux)| / drawn`.
    pub fn closure_error(&self) -> f64 {
        let parts = self.wheel + self.machine_losses + self.inverter_losses + self.battery_losses + self.auxiliary;
        (self.battery_drawn - parts).abs() / self.battery_drawn.abs().max(f64::MIN_POSITIVE)
    }
}

/// Why a forward run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    /// The requested distance or time was reached.
    Completed,
    /// A state invariant broke (speed not positive, offset beyond the
    /// curvature centre, non-finite values); the trace stops at the last
    /// valid sample.
    Invariant { t: f64, s: f64, reason: String },
    /// The simulated-time budget ran out before the finish.
    TimeLimit { t: f64, s: f64 },
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Completed => f.write_str("completed"),
            Termination::Invariant { t, s, reason } => {
                write!(f, "stopped at t = {t:.4} s, s = {s:.2} m: {reason}")
            }
            Termination::TimeLimit { t, s } => write!(f, "time budget exhausted at t = {t:.1} s, s = {s:.2} m"),
        }
    }
}

/// Sampled result of a forward run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    pub x: Vec<[f64; NX]>,
    /// Energies up to the last sample.
    pub energy: EnergyLedger,
    pub termination: Termination,
}

impl SimTrace {
    fn single(s: f64, x: [f64; NX]) -> Self {
        Self {
            t: vec![0.0],
            s: vec![s],
            x: vec![x],
            energy: EnergyLedger::default(),
            termination: Termination::Completed,
        }
    }

    /// Append `next` (which starts at time 0) after the last sample, shifting
    /// its times; its first sample is dropped. Energies add up.
    fn append(&mut self, next: &SimTrace) {
        let t0 = self.final_time();
        self.t.extend(next.t[1..].iter().map(|t| t + t0));
        self.s.extend_from_slice(&next.s[1..]);
        self.x.extend_from_slice(&next.x[1..]);
        let (a, b) = (&mut self.energy, &next.energy);
        a.battery_drawn += b.battery_drawn;
        a.wheel += b.wheel;
        a.machine_losses += b.machine_losses;
        a.inverter_losses += b.inverter_losses;
        a.battery_losses += b.battery_losses;
        a.auxiliary += b.auxiliary;
        self.termination = next.termination.clone();
    }

    /// The node states of a solution as a trace, timed by its lethargy.
    pub fn from_solution(solution: &Solution) -> Self {
        Self {
            t: solution.node_times(),
            s: solution.s.clone(),
            x: solution.states.clone(),
            energy: EnergyLedger::default(),
            termination: Termination::Completed,
        }
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    pub fn final_time(&self) -> f64 {
        *self.t.last().expect("trace has samples")
    }

    pub fn final_state(&self) -> [f64; NX] {
        *self.x.last().expect("trace has samples")
    }

    /// State at arc length `s`, linearly interpolated between samples.
    pub fn state_at_distance(&self, s: f64) -> Option<([f64; NX], f64)> {
        let i = self.s.partition_point(|&v| v < s);
        if i == 0 {
            return (self.s[0] == s).then(|| (self.x[0], self.t[0]));
        }
        if i >= self.s.len() {
            // the finishing step lands on its target only up to rounding
            let last = self.s.len() - 1;
            let close = (s - self.s[last]) <= 1e-9 * s.abs().max(1.0);
            return close.then(|| (self.x[last], self.t[last]));
        }
        let w = (s - self.s[i - 1]) / (self.s[i] - self.s[i - 1]);
        let x = std::array::from_fn(|j| self.x[i - 1][j] + w * (self.x[i][j] - self.x[i - 1][j]));
        Some((x, self.t[i - 1] + w * (self.t[i] - self.t[i - 1])))
    }

    /// Time-stamped CSV of the trace, every `stride`-th sample plus the last.
    pub fn to_csv(&self, stride: usize) -> String {
        let mut out = String::from("t,s,v,beta,psidot,n,xi,T_M,T_I,T_B,T_F1,T_F2\n");
        let stride = stride.max(1);
        let last = self.t.len() - 1;
        for i in (0..self.t.len()).filter(|i| i % stride == 0 || *i == last) {
            let mut row = vec![self.t[i], self.s[i]];
            row.extend_from_slice(&self.x[i]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// One classic Runge–Kutta step.
pub fn rk4_step<const N: usize>(f: &impl Fn(f64, &[f64; N]) -> [f64; N], t: f64, y: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], c: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + c * b[i]) };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = f(t + h, &add(y, &k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Time derivative of the augmented state.
fn rhs(params: &ModelParams, thermal: &ThermalModel, track: &TrackData, controls: &dyn ControlSource, t: f64, y: &[f64; NY]) -> [f64; NY] {
    let x: [f64; NX] = std::array::from_fn(|i| y[i]);
    let s = y[IDX_S];
    let u = controls.control(t, s);
    let flow = power_flow(&params.powertrain, u[su::F_D], x[sx::V]);
    let (dx, s_dot) = time_derivatives(&params.vehicle, thermal, &x, &u, track.kappa_at(s), &flow.losses);
    let mut out = [0.0; NY];
    out[..NX].copy_from_slice(&dx);
    out[IDX_S] = s_dot;
    out[IDX_E] = flow.battery_in;
    out[IDX_E + 1] = flow.p_sigma;
    out[IDX_E + 2] = 2.0 * flow.losses.machine;
    out[IDX_E + 3] = 2.0 * flow.losses.inverter;
    out[IDX_E + 4] = flow.losses.battery;
    out[IDX_E + 5] = params.powertrain.aux_power;
    out
}

/// Reason the sample breaks a state invariant, if it does.
fn invariant_violation(track: &TrackData, y: &[f64; NY]) -> Option<String> {
    if y.iter().any(|v| !v.is_finite()) {
        return Some("state became non-finite".into());
    }
    if !(y[sx::V] > 0.0) {
        return Some(format!("speed dropped to {:.4} m/s", y[sx::V]));
    }
    if !((y[sx::XI] + y[sx::BETA]).cos() > 0.0) {
        return Some(format!("no forward progress (xi + beta = {:.3} rad)", y[sx::XI] + y[sx::BETA]));
    }
    let along = 1.0 - y[sx::N] * track.kappa_at(y[IDX_S]);
    if !(along > 0.0) {
        return Some(format!("offset n = {:.3} m lies beyond the curvature centre", y[sx::N]));
    }
    None
}

/// Integrate the model from `x0` at `s = 0`.
///
/// Invalid inputs are errors. A run that breaks a state invariant part-way
/// is not: it returns the trace up to the last valid sample, with the reason
/// in [`SimTrace::termination`].
pub fn simulate(
    params: &ModelParams,
    track: &TrackData,
    x0: &[f64; NX],
    controls: &dyn ControlSource,
    stop: StopAt,
    opts: &SimOptions,
) -> Result<SimTrace> {
    simulate_from(params, track, 0.0, x0, controls, stop, opts)
}

/// As [`simulate`], starting at arc length `s0` (time still starts at 0).
/// [`StopAt::Distance`] is an absolute arc length.
pub fn simulate_from(
    params: &ModelParams,
    track: &TrackData,
    s0: f64,
    x0: &[f64; NX],
    controls: &dyn ControlSource,
    stop: StopAt,
    opts: &SimOptions,
) -> Result<SimTrace> {
    params.validate()?;
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be > 0, got {}", opts.dt)));
    }
    let thermal = params.thermal_model()?;
    let f = |t: f64, y: &[f64; NY]| rhs(params, &thermal, track, controls, t, y);

    let mut y = [0.0; NY];
    y[..NX].copy_from_slice(x0);
    y[IDX_S] = s0;
    if let Some(reason) = invariant_violation(track, &y) {
        return Err(Error::Domain(format!("initial state: {reason}")));
    }
    let mut t = 0.0;
    let mut trace = SimTrace {
        t: vec![0.0],
        s: vec![s0],
        x: vec![*x0],
        energy: EnergyLedger::default(),
        termination: Termination::Completed,
    };
    let push = |trace: &mut SimTrace, t: f64, y: &[f64; NY]| {
        trace.t.push(t);
        trace.s.push(y[IDX_S]);
        trace.x.push(std::array::from_fn(|i| y[i]));
    };
    loop {
        if t > opts.max_time {
            trace.termination = Termination::TimeLimit { t, s: y[IDX_S] };
            break;
        }
        let h = match stop {
            StopAt::Time(end) => {
                if t >= end - 1e-12 * end.max(1.0) {
                    break;
                }
                opts.dt.min(end - t)
            }
            StopAt::Distance(_) => opts.dt,
        };
        let next = rk4_step(&f, t, &y, h);
        if let StopAt::Distance(end) = stop {
            if next[IDX_S] >= end {
                let (tf, yf) = finish_step(&f, t, &y, h, end)?;
                push(&mut trace, tf, &yf);
                y = yf;
                break;
            }
        }
        if let Some(reason) = invariant_violation(track, &next) {
            trace.termination = Termination::Invariant { t: t + h, s: y[IDX_S], reason };
            break;
        }
        t += h;
        y = next;
        push(&mut trace, t, &y);
    }
    trace.energy = EnergyLedger {
        battery_drawn: y[IDX_E],
        wheel: y[IDX_E + 1],
        machine_losses: y[IDX_E + 2],
        inverter_losses: y[IDX_E + 3],
        battery_losses: y[IDX_E + 4],
        auxiliary: y[IDX_E + 5],
    };
    Ok(trace)
}

/// Shorten the last step so that it ends on `s = end` (secant iteration on
/// the step length, bracketed by `[0, h]`).
fn finish_step(
    f: &impl Fn(f64, &[f64; NY]) -> [f64; NY],
    t: f64,
    y: &[f64; NY],
    h: f64,
    end: f64,
) -> Result<(f64, [f64; NY])> {
    let gap = |tau: f64| rk4_step(f, t, y, tau)[IDX_S] - end;
    let (mut a, mut fa) = (0.0, y[IDX_S] - end);
    let (mut b, mut fb) = (h, gap(h));
    for _ in 0..60 {
        let c = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        let c = if c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = gap(c);
        if fc.abs() <= 1e-12 * end.abs().max(1.0) {
            return Ok((t + c, rk4_step(f, t, y, c)));
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
    }
    Err(Error::Verification("finish-line crossing did not converge".into()))
}

/// Integrate only the thermal network under prescribed per-component
/// losses. States flagged in `frozen` are held at their initial value.
pub fn simulate_thermal(
    model: &ThermalModel,
    t0: [f64; 5],
    losses: &dyn Fn(f64) -> Losses<f64>,
    frozen: [bool; 5],
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, [f64; 5])>> {
    if !(dt > 0.0 && t_end >= 0.0) {
        return Err(Error::InvalidParameter("thermal run needs dt > 0 and t_end >= 0".into()));
    }
    let f = |t: f64, y: &[f64; 5]| {
        let mut r = model.rates(y, &losses(t));
        for i in 0..5 {
            if frozen[i] {
                r[i] = 0.0;
            }
        }
        r
    };
    let mut out = vec![(0.0, t0)];
    let (mut t, mut y) = (0.0, t0);
    while t < t_end - 1e-12 * t_end.max(1.0) {
        let h = dt.min(t_end - t);
        y = rk4_step(&f, t, &y, h);
        t += h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("temperature became non-finite at t = {t:.3} s")));
        }
        out.push((t, y));
    }
    Ok(out)
}

/// Allowed absolute deviation per state between replay and collocation.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareTolerances {
    /// Relative race-time mismatch.
    pub race_time_rel: f64,
    /// v, beta, psi_dot, n, xi, then the five temperatures.
    pub state_abs: [f64; NX],
}

impl Default for CompareTolerances {
    fn default() -> Self {
        Self {
            race_time_rel: 5e-3,
            state_abs: [1.0, 0.05, 0.1, 1.0, 0.1, 1.0, 1.0, 1.0, 1.0, 1.0],
        }
    }
}

pub const STATE_NAMES: [&str; NX] = ["v", "beta", "psidot", "n", "xi", "T_M", "T_I", "T_B", "T_F1", "T_F2"];

/// How a solution is replayed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayMode {
    /// A single run over the whole horizon from the first collocation node.
    #[default]
    OpenLoop,
    /// Multiple shooting: restart from the collocation state every
    /// `segment_intervals` mesh intervals; the race time is the sum of the
    /// segment times. Errors cannot accumulate across segments, so this
    /// measures the transcription's accuracy rather than the sensitivity of
    /// the trajectory.
    Segmented,
}

impl fmt::Display for ReplayMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReplayMode::OpenLoop => "open-loop",
            ReplayMode::Segmented => "segmented",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub dt: f64,
    pub mode: ReplayMode,
    /// Mesh intervals per segment in [`ReplayMode::Segmented`].
    pub segment_intervals: usize,
    pub interpolation: ControlInterpolation,
    pub tolerances: CompareTolerances,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            dt: SimOptions::default().dt,
            mode: ReplayMode::OpenLoop,
            segment_intervals: 1,
            interpolation: ControlInterpolation::Hold,
            tolerances: CompareTolerances::default(),
        }
    }
}

/// Outcome of replaying a solution.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub mode: ReplayMode,
    pub race_time_nlp: f64,
    /// Finish time of the replay; the time of its last sample if it stopped early.
    pub race_time_sim: f64,
    pub race_time_rel: f64,
    /// First abnormal termination among the runs, or `Completed`.
    pub termination: Termination,
    /// Arc length the replay reached, m.
    pub reached: f64,
    /// Mesh nodes the replay passed, over which the deviations are taken.
    pub nodes_compared: usize,
    /// Largest |sim - nlp| per state over the compared nodes.
    pub max_deviation: [f64; NX],
    /// Node index where each maximum occurs.
    pub worst_node: [usize; NX],
    /// Largest temperature excess over the upper limits in the replay, K.
    pub limit_excess: f64,
    pub energy_closure: f64,
    pub tolerances: CompareTolerances,
}

impl VerifyReport {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    pub fn time_ok(&self) -> bool {
        self.completed() && self.race_time_rel <= self.tolerances.race_time_rel
    }

    pub fn states_ok(&self) -> bool {
        self.max_deviation.iter().zip(&self.tolerances.state_abs).all(|(d, t)| d <= t)
    }

    pub fn passed(&self) -> bool {
        self.completed() && self.time_ok() && self.states_ok()
    }

    /// States whose deviation exceeds the tolerance.
    pub fn failing_states(&self) -> Vec<&'static str> {
        (0..NX)
            .filter(|&i| self.max_deviation[i] > self.tolerances.state_abs[i])
            .map(|i| STATE_NAMES[i])
            .collect()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} replay: {} ({} nodes compared, reached s = {:.2} m)",
            self.mode, self.termination, self.nodes_compared, self.reached
        )?;
        writeln!(
            f,
            "race time: collocation {:.4} s, replay {:.4} s, mismatch {:.3} % (limit {:.3} %)",
            self.race_time_nlp,
            self.race_time_sim,
            100.0 * self.race_time_rel,
            100.0 * self.tolerances.race_time_rel
        )?;
        for i in 0..NX {
            writeln!(
                f,
                "  {:<7} max dev {:>10.3e} at node {:>4}  (limit {:.3e}) {}",
                STATE_NAMES[i],
                self.max_deviation[i],
                self.worst_node[i],
                self.tolerances.state_abs[i],
                if self.max_deviation[i] <= self.tolerances.state_abs[i] { "ok" } else { "FAIL" }
            )?;
        }
        writeln!(f, "  temperature limit excess in replay: {:.3e} K", self.limit_excess)?;
        writeln!(f, "  energy closure: {:.3e}", self.energy_closure)?;
        write!(f, "verdict: {}", if self.passed() { "pass" } else { "FAIL" })
    }
}

/// Running maxima of the node-wise comparison.
struct Deviations {
    max: [f64; NX],
    node: [usize; NX],
    compared: usize,
}

impl Deviations {
    fn new() -> Self {
        Self { max: [0.0; NX], node: [0; NX], compared: 0 }
    }

    /// Compare the nodes in `nodes` against `trace`; stops at the first node
    /// the trace did not reach. Returns whether all of them were reached.
    fn add(&mut self, trace: &SimTrace, solution: &Solution, nodes: std::ops::Range<usize>) -> bool {
        for k in nodes {
            let Some((xs, _)) = trace.state_at_distance(solution.s[k]) else { return false };
            self.compared += 1;
            for i in 0..NX {
                let dev = (xs[i] - solution.states[k][i]).abs();
                if dev > self.max[i] {
                    self.max[i] = dev;
                    self.node[i] = k;
                }
            }
        }
        true
    }
}

fn check_horizon(track: &TrackData, solution: &Solution) -> Result<()> {
    let horizon = *solution.s.last().expect("solution has nodes");
    let total = track.total_length();
    if (horizon - total).abs() > 1e-6 * total.max(1.0) {
        return Err(Error::Verification(format!(
            "solution horizon {horizon} m does not match the track's {total} m"
        )));
    }
    Ok(())
}

/// Compare an open-loop trace that starts at the first node of `solution`.
pub fn compare(
    params: &ModelParams,
    track: &TrackData,
    trace: &SimTrace,
    solution: &Solution,
    tol: &CompareTolerances,
) -> Result<VerifyReport> {
    check_horizon(track, solution)?;
    let mut dev = Deviations::new();
    dev.add(trace, solution, 0..solution.nodes());
    Ok(report(ReplayMode::OpenLoop, params, solution, trace, trace.termination.clone(), trace.final_time(), dev, tol))
}

#[allow(clippy::too_many_arguments)]
fn report(
    mode: ReplayMode,
    params: &ModelParams,
    solution: &Solution,
    trace: &SimTrace,
    termination: Termination,
    race_time_sim: f64,
    dev: Deviations,
    tol: &CompareTolerances,
) -> VerifyReport {
    let race_time_nlp = solution.race_time();
    VerifyReport {
        mode,
        race_time_nlp,
        race_time_sim,
        race_time_rel: (race_time_sim - race_time_nlp).abs() / race_time_nlp,
        termination,
        reached: *trace.s.last().expect("trace has samples"),
        nodes_compared: dev.compared,
        max_deviation: dev.max,
        worst_node: dev.node,
        limit_excess: excess_over_limits(&params.limits, trace),
        energy_closure: trace.energy.closure_error(),
        tolerances: *tol,
    }
}

/// Replay the controls of `solution` and compare with its states at the
/// mesh nodes. For a segmented replay the returned trace is the
/// concatenation of the segments (time accumulated across them; the states
/// jump at each restart).
pub fn verify_solution(
    params: &ModelParams,
    track: &TrackData,
    solution: &Solution,
    opts: &VerifyOptions,
) -> Result<(VerifyReport, SimTrace)> {
    check_horizon(track, solution)?;
    let sim = SimOptions { dt: opts.dt, ..SimOptions::default() };
    let controls = ReplayControls::new(solution, opts.interpolation);
    let horizon = *solution.s.last().expect("solution has nodes");
    if opts.mode == ReplayMode::OpenLoop {
        let trace = simulate(params, track, &solution.states[0], &controls, StopAt::Distance(horizon), &sim)?;
        let rep = compare(params, track, &trace, solution, &opts.tolerances)?;
        return Ok((rep, trace));
    }

    if opts.segment_intervals == 0 {
        return Err(Error::InvalidParameter("segments need at least one interval".into()));
    }
    let last = solution.nodes() - 1;
    let mut dev = Deviations::new();
    dev.add(&SimTrace::single(solution.s[0], solution.states[0]), solution, 0..1);
    let mut joined = SimTrace::single(solution.s[0], solution.states[0]);
    let mut termination = Termination::Completed;
    let mut k0 = 0;
    while k0 < last {
        let k1 = (k0 + opts.segment_intervals).min(last);
        let seg = simulate_from(
            params,
            track,
            solution.s[k0],
            &solution.states[k0],
            &controls,
            StopAt::Distance(solution.s[k1]),
            &sim,
        )?;
        let reached_all = dev.add(&seg, solution, k0 + 1..k1 + 1);
        joined.append(&seg);
        if !seg.completed() || !reached_all {
            termination = seg.termination.clone();
            break;
        }
        k0 = k1;
    }
    let race_time_sim = joined.final_time();
    let rep = report(ReplayMode::Segmented, params, solution, &joined, termination, race_time_sim, dev, &opts.tolerances);
    Ok((rep, joined))
}

fn excess_over_limits(limits: &TemperatureLimits, trace: &SimTrace) -> f64 {
    trace
        .x
        .iter()
        .flat_map(|x| (0..5).map(move |c| x[sx::T_M + c] - limits.max[c]))
        .fold(0.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::ThermalState;
    use crate::vehicle::synthetic_oval;
    use crate::vehicle::dynamics::su;

    #[test]
    fn rk4_is_exact_for_cubic_time_polynomials() {
        // y' = 3 t^2 -> y = t^3, integrated exactly by Simpson-weighted stages
        let f = |t: f64, _y: &[f64; 1]| [3.0 * t * t];
        let mut y = [0.0];
        let mut t = 0.0;
        for _ in 0..7 {
            y = rk4_step(&f, t, &y, 0.3);
            t += 0.3;
        }
        assert!((y[0] - t.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn coasting_on_a_straight_loses_speed_and_keeps_line() {
        let params = ModelParams::default();
        let track = synthetic_oval(5.0, 12.0);
        let mut x0 = [0.0; NX];
        x0[sx::V] = 30.0;
        x0[sx::T_M..].copy_from_slice(&ThermalState::uniform(30.0).to_array());
        let zero = |_t: f64, _s: f64| [0.0; NU];
        let tr = simulate(&params, &track, &x0, &zero, StopAt::Distance(90.0), &SimOptions::default()).unwrap();
        let xf = tr.final_state();
        assert!(xf[sx::V] < 30.0 && xf[sx::V] > 28.0);
        assert!(xf[sx::N].abs() < 1e-12 && xf[sx::BETA].abs() < 1e-12);
        assert!((tr.s.last().unwrap() - 90.0).abs() < 1e-9);
        // distance covered equals integral of speed: 90 m at ~29 m/s
        assert!(tr.final_time() > 3.0 && tr.final_time() < 3.2);
    }

    #[test]
    fn energy_ledger_closes() {
        let params = ModelParams::default();
        let track = synthetic_oval(5.0, 12.0);
        let mut x0 = [0.0; NX];
        x0[sx::V] = 20.0;
        x0[sx::T_M..].copy_from_slice(&[30.0; 5]);
        let drive = |t: f64, _s: f64| [4000.0 + 1000.0 * t.sin(), 0.0, 0.0, 0.0];
        let tr = simulate(&params, &track, &x0, &drive, StopAt::Time(4.0), &SimOptions::default()).unwrap();
        assert!(tr.energy.battery_drawn > 0.0);
        assert!(tr.energy.closure_error() < 1e-6, "{:?}", tr.energy);
    }

    fn straight(length: f64) -> TrackData {
        TrackData::new(vec![0.0, length], vec![0.0; 2], vec![5.0; 2], vec![-5.0; 2]).unwrap()
    }

    fn start_state(v: f64, temp: f64) -> [f64; NX] {
        let mut x = [temp; NX];
        x[..5].copy_from_slice(&[v, 0.0, 0.0, 0.0, 0.0]);
        x
    }

    #[test]
    fn fourth_order_convergence_on_a_smooth_manoeuvre() {
        let params = ModelParams::default();
        let track = straight(2000.0);
        let x0 = start_state(25.0, 40.0);
        let law = |t: f64, _s: f64| [3000.0 + 1500.0 * (0.7 * t).cos(), 0.0, 0.03 * (1.3 * t).sin(), 0.0];
        let run = |dt: f64| {
            let o = SimOptions { dt, ..Default::default() };
            simulate(&params, &track, &x0, &law, StopAt::Time(4.0), &o).unwrap().final_state()
        };
        let reference = run(0.05 / 64.0);
        let err = |dt: f64| {
            let x = run(dt);
            (0..NX).map(|i| (x[i] - reference[i]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(0.05), err(0.025), err(0.0125));
        for ratio in [e1 / e2, e2 / e3] {
            assert!(ratio > 8.0 && ratio < 32.0, "ratio {ratio} ({e1:e}, {e2:e}, {e3:e})");
        }
    }

    #[test]
    fn battery_heats_along_the_first_order_exponential() {
        let model = ModelParams::default().thermal_model().unwrap();
        let p = model.params;
        let t0 = [p.t_env; 5];
        let loss = 8000.0;
        let losses = |_t: f64| Losses { machine: 0.0, inverter: 0.0, battery: loss };
        let frozen = [true, true, false, true, true];
        let out = simulate_thermal(&model, t0, &losses, frozen, 600.0, 0.01).unwrap();
        let tau = p.r_b_th * p.c_b;
        let rise = p.r_b_th * loss;
        let worst = out
            .iter()
            .map(|(t, y)| (y[2] - (p.t_env + rise * (1.0 - (-t / tau).exp()))).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-4, "worst {worst}");
    }

    #[test]
    fn battery_equilibrium_is_held() {
        let model = ModelParams::default().thermal_model().unwrap();
        let p = model.params;
        let loss = 5000.0;
        let mut t0 = [p.t_env; 5];
        t0[2] = p.t_env + p.r_b_th * loss;
        let losses = |_t: f64| Losses { machine: 0.0, inverter: 0.0, battery: loss };
        let out = simulate_thermal(&model, t0, &losses, [true, true, false, true, true], 100.0, 1e-3).unwrap();
        let drift = out.iter().map(|(_, y)| (y[2] - t0[2]).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn isothermal_run_without_losses_stays_isothermal() {
        let mut params = ModelParams::default();
        params.thermal.r_rmi = f64::INFINITY;
        params.thermal.r_rb = f64::INFINITY;
        let model = params.thermal_model().unwrap();
        let zero = |_t: f64| Losses { machine: 0.0, inverter: 0.0, battery: 0.0 };
        let out = simulate_thermal(&model, [55.0; 5], &zero, [false; 5], 200.0, 0.01).unwrap();
        assert!(out.iter().all(|(_, y)| y.iter().all(|&v| v == 55.0)));
    }

    fn toy_solution() -> (ModelParams, TrackData, Solution) {
        // coasting on a straight, collocated by hand from a fine forward run
        let params = ModelParams::default();
        let track = straight(60.0);
        let zero = |_t: f64, _s: f64| [0.0; NU];
        let fine = simulate(&params, &track, &start_state(30.0, 30.0), &zero, StopAt::Distance(60.0), &SimOptions::default())
            .unwrap();
        let s: Vec<f64> = (0..=6).map(|k| 10.0 * k as f64).collect();
        let states = s.iter().map(|&si| fine.state_at_distance(si).unwrap().0).collect();
        let sol = Solution {
            s: s.clone(),
            kappa: vec![0.0; s.len()],
            states,
            controls: vec![[0.0; NU]; s.len() - 1],
            lap_length: 60.0,
            laps: 1,
        };
        (params, track, sol)
    }

    #[test]
    fn solution_compared_with_itself_has_zero_deviation() {
        let (params, track, sol) = toy_solution();
        let rep = compare(&params, &track, &SimTrace::from_solution(&sol), &sol, &CompareTolerances::default()).unwrap();
        assert_eq!(rep.max_deviation, [0.0; NX]);
        assert_eq!(rep.race_time_rel, 0.0);
        assert_eq!(rep.nodes_compared, sol.nodes());
        assert!(rep.passed());
    }

    #[test]
    fn replay_of_consistent_solution_passes_in_both_modes() {
        let (params, track, sol) = toy_solution();
        for mode in [ReplayMode::OpenLoop, ReplayMode::Segmented] {
            let opts = VerifyOptions { mode, segment_intervals: 2, ..Default::default() };
            let (rep, trace) = verify_solution(&params, &track, &sol, &opts).unwrap();
            assert!(rep.passed(), "{rep}");
            assert!(rep.max_deviation.iter().all(|&d| d < 1e-6), "{rep}");
            assert!((trace.s.last().unwrap() - 60.0).abs() < 1e-9);
        }
    }

    #[test]
    fn horizon_mismatch_is_rejected() {
        let (params, _, sol) = toy_solution();
        let longer = straight(80.0);
        assert!(matches!(
            verify_solution(&params, &longer, &sol, &VerifyOptions::default()),
            Err(Error::Verification(_))
        ));
    }

    #[test]
    fn invariant_violation_truncates_the_trace() {
        let params = ModelParams::default();
        let track = straight(500.0);
        let brake = |_t: f64, _s: f64| [0.0, -12000.0, 0.0, 0.0];
        let tr = simulate(&params, &track, &start_state(10.0, 30.0), &brake, StopAt::Distance(500.0), &SimOptions::default())
            .unwrap();
        assert!(matches!(tr.termination, Termination::Invariant { .. }), "{:?}", tr.termination);
        assert!(!tr.completed());
        assert!(tr.final_state()[sx::V] > 0.0);
        assert!(*tr.s.last().unwrap() < 500.0);
    }

    #[test]
    fn linear_interpolation_passes_through_interval_midpoints() {
        let (_, _, mut sol) = toy_solution();
        for (k, u) in sol.controls.iter_mut().enumerate() {
            u[su::F_D] = 100.0 * k as f64;
        }
        let lin = ReplayControls::new(&sol, ControlInterpolation::Linear);
        let hold = ReplayControls::new(&sol, ControlInterpolation::Hold);
        assert_eq!(lin.control(0.0, 15.0)[su::F_D], 100.0);
        assert!((lin.control(0.0, 20.0)[su::F_D] - 150.0).abs() < 1e-12);
        assert_eq!(lin.control(0.0, 1.0)[su::F_D], 0.0);
        assert_eq!(lin.control(0.0, 59.0)[su::F_D], 500.0);
        assert_eq!(hold.control(0.0, 19.9)[su::F_D], 100.0);
        assert_eq!(hold.control(0.0, 20.0)[su::F_D], 200.0);
        assert_eq!(hold.control(0.0, 60.0)[su::F_D], 500.0);
    }

    #[test]
    fn rejects_bad_step() {
        let params = ModelParams::default();
        let track = synthetic_oval(5.0, 12.0);
        let mut x0 = [30.0; NX];
        x0[..5].copy_from_slice(&[20.0, 0.0, 0.0, 0.0, 0.0]);
        let zero = |_t: f64, _s: f64| [0.0; NU];
        let o = SimOptions { dt: 0.0, ..Default::default() };
        assert!(simulate(&params, &track, &x0, &zero, StopAt::Time(1.0), &o).is_err());
    }
}
