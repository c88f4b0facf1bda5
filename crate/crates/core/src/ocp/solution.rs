//! Optimal trajectories in physical units, constraint-activity analysis and
//! the per-node CSV format.

use std::fmt;

use crate::error::{Error, Result};
use crate::vehicle::dynamics::{axle_forces, combined_usage, dt_ds, su, sx};
use crate::vehicle::{TrackData, NU, NX};

use super::boundary::TemperatureLimits;
use super::power::power_flow;
use super::transcription::RaceNlp;
use super::ModelParams;

/// Column names of the trajectory CSV, in order.
pub const CSV_COLUMNS: [&str; 17] = [
    "s", "v", "beta", "psidot", "n", "xi", "T_M", "T_I", "T_B", "T_F1", "T_F2", "F_d", "F_b", "delta", "gamma",
    "P_sigma", "dt_ds",
];

/// A trajectory on mesh nodes: states at every node, controls held
/// constant on each interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
    pub states: Vec<[f64; NX]>,
    pub controls: Vec<[f64; NU]>,
    pub lap_length: f64,
    pub laps: usize,
}

/// Where the optimum rides on its limits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivityReport {
    /// Per component, nodes whose temperature sits at the upper limit.
    pub temperature_upper: [Vec<usize>; 5],
    /// Nodes where drive power is at the cap.
    pub power_cap: Vec<usize>,
    /// Nodes where either axle uses the full friction circle.
    pub friction: Vec<usize>,
    pub nodes: usize,
    pub tolerance_kelvin: f64,
    pub tolerance_relative: f64,
}

impl ActivityReport {
    pub fn temperature_binds(&self, component: usize) -> bool {
        !self.temperature_upper[component].is_empty()
    }

    /// Maximal runs of consecutive nodes where the power cap binds, as
    /// `(first, last)` node indices.
    pub fn power_cap_runs(&self) -> Vec<(usize, usize)> {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &k in &self.power_cap {
            match runs.last_mut() {
                Some(r) if r.1 + 1 == k => r.1 = k,
                _ => runs.push((k, k)),
            }
        }
        runs
    }

    /// Fraction of nodes with drive power at the cap.
    pub fn power_cap_share(&self) -> f64 {
        self.power_cap.len() as f64 / self.nodes.max(1) as f64
    }
}

impl fmt::Display for ActivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "active limits ({} nodes):", self.nodes)?;
        for (i, name) in TemperatureLimits::NAMES.iter().enumerate() {
            let hits = &self.temperature_upper[i];
            match (hits.first(), hits.last()) {
                (Some(a), Some(b)) => writeln!(f, "  {name:<5} at limit on {} nodes ({a}..={b})", hits.len())?,
                _ => writeln!(f, "  {name:<5} inactive")?,
            }
        }
        writeln!(f, "  power cap on {} nodes ({:.1} %)", self.power_cap.len(), 100.0 * self.power_cap_share())?;
        write!(f, "  friction circle saturated on {} nodes", self.friction.len())
    }
}

impl Solution {
    /// Unscale a solver iterate.
    pub fn from_nlp(nlp: &RaceNlp, z: &[f64]) -> Result<Self> {
        use crate::nlp::NlpProblem;
        if z.len() != nlp.num_vars() {
            return Err(Error::Dimension {
                expected: nlp.num_vars(),
                got: z.len(),
            });
        }
        Ok(Self {
            s: nlp.mesh.s.clone(),
            kappa: (0..nlp.mesh.nodes()).map(|k| nlp.kappa_at_node(k)).collect(),
            states: (0..nlp.mesh.nodes()).map(|k| nlp.node_state(z, k)).collect(),
            controls: (0..nlp.intervals()).map(|k| nlp.interval_control(z, k)).collect(),
            lap_length: nlp.mesh.lap_length,
            laps: nlp.mesh.laps,
        })
    }

    pub fn nodes(&self) -> usize {
        self.s.len()
    }

    /// Control acting at node `k` (the last node repeats the final interval).
    pub fn control_at_node(&self, k: usize) -> [f64; NU] {
        self.controls[k.min(self.controls.len() - 1)]
    }

    /// Lethargy `dt/ds` per node.
    pub fn lethargy(&self) -> Vec<f64> {
        self.states
            .iter()
            .zip(&self.kappa)
            .map(|(x, &kappa)| dt_ds(x[sx::V], x[sx::BETA], x[sx::N], x[sx::XI], kappa))
            .collect()
    }

    /// Elapsed time at every node (trapezoidal quadrature of the lethargy).
    pub fn node_times(&self) -> Vec<f64> {
        let l = self.lethargy();
        let mut t = vec![0.0; self.nodes()];
        for k in 1..self.nodes() {
            t[k] = t[k - 1] + 0.5 * (self.s[k] - self.s[k - 1]) * (l[k - 1] + l[k]);
        }
        t
    }

    pub fn race_time(&self) -> f64 {
        *self.node_times().last().unwrap_or(&0.0)
    }

    /// Time for each lap, split at the nodes on lap boundaries.
    pub fn lap_times(&self) -> Vec<f64> {
        let t = self.node_times();
        let mut out = Vec::with_capacity(self.laps);
        let mut last = 0.0;
        for lap in 1..=self.laps {
            let target = lap as f64 * self.lap_length;
            let k = self
                .s
                .iter()
                .position(|&s| (s - target).abs() <= 1e-9 * self.lap_length)
                .unwrap_or(self.nodes() - 1);
            out.push(t[k] - last);
            last = t[k];
        }
        out
    }

    /// Drive power `F_d · v` per node.
    pub fn drive_power(&self) -> Vec<f64> {
        (0..self.nodes())
            .map(|k| self.control_at_node(k)[su::F_D] * self.states[k][sx::V])
            .collect()
    }

    /// Mean drive power over time, W.
    pub fn mean_drive_power(&self) -> f64 {
        let l = self.lethargy();
        let mut e = 0.0;
        for k in 0..self.nodes() - 1 {
            let ds = self.s[k + 1] - self.s[k];
            let u = self.controls[k][su::F_D];
            e += 0.5 * ds * u * (self.states[k][sx::V] * l[k] + self.states[k + 1][sx::V] * l[k + 1]);
        }
        e / self.race_time()
    }

    /// Energy drawn from the battery terminals (internal losses included), J.
    pub fn battery_energy(&self, params: &ModelParams) -> f64 {
        let l = self.lethargy();
        let mut e = 0.0;
        for k in 0..self.nodes() - 1 {
            let ds = self.s[k + 1] - self.s[k];
            let f_d = self.controls[k][su::F_D];
            let pa = power_flow(&params.powertrain, f_d, self.states[k][sx::V]).battery_in;
            let pb = power_flow(&params.powertrain, f_d, self.states[k + 1][sx::V]).battery_in;
            e += 0.5 * ds * (pa * l[k] + pb * l[k + 1]);
        }
        e
    }

    pub fn max_temperature(&self, component: usize) -> f64 {
        self.states.iter().map(|x| x[sx::T_M + component]).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Which limits the trajectory rides on. Temperatures count as active
    /// within `tol_kelvin` of their limit; power and friction within the
    /// relative tolerance `tol_rel`.
    pub fn activity(&self, params: &ModelParams, tol_kelvin: f64, tol_rel: f64) -> ActivityReport {
        let mut rep = ActivityReport {
            nodes: self.nodes(),
            tolerance_kelvin: tol_kelvin,
            tolerance_relative: tol_rel,
            ..Default::default()
        };
        let vp = &params.vehicle;
        for (k, x) in self.states.iter().enumerate() {
            for c in 0..5 {
                if x[sx::T_M + c] >= params.limits.max[c] - tol_kelvin {
                    rep.temperature_upper[c].push(k);
                }
            }
            let u = self.control_at_node(k);
            // the cap binds at both ends of an interval: use the larger of
            // the two drive forces acting at this node
            let f_d = if k > 0 { u[su::F_D].max(self.controls[k - 1][su::F_D]) } else { u[su::F_D] };
            if f_d * x[sx::V] >= vp.p_max * (1.0 - tol_rel) {
                rep.power_cap.push(k);
            }
            let f = axle_forces(vp, x[sx::V], x[sx::BETA], x[sx::PSI_DOT], &u);
            let usage = combined_usage(f.fx_f, f.fy_f, f.fz_f, vp.mu).max(combined_usage(f.fx_r, f.fy_r, f.fz_r, vp.mu));
            if usage >= 1.0 - tol_rel {
                rep.friction.push(k);
            }
        }
        rep
    }

    /// Per-node CSV with `#` metadata lines in front.
    pub fn to_csv(&self, metadata: &[(String, String)]) -> String {
        let mut out = String::new();
        for (key, value) in metadata {
            out.push_str(&format!("# {key}: {value}\n"));
        }
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        let p = self.drive_power();
        let l = self.lethargy();
        for k in 0..self.nodes() {
            let mut row = Vec::with_capacity(CSV_COLUMNS.len());
            row.push(self.s[k]);
            row.extend_from_slice(&self.states[k]);
            row.extend_from_slice(&self.control_at_node(k));
            row.push(p[k]);
            row.push(l[k]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Read a trajectory written by [`Solution::to_csv`]; curvature and lap
    /// layout come from `track`.
    pub fn from_csv(text: &str, track: &TrackData) -> Result<Self> {
        let body: String = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
            .map(|l| format!("{l}\n"))
            .collect();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::parse("trajectory", format!("trajectory header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != CSV_COLUMNS {
            return Err(Error::parse("trajectory", format!(
                "trajectory columns must be {}, got {}",
                CSV_COLUMNS.join(","),
                header.join(",")
            )));
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse("trajectory", format!("trajectory row {}: {e}", i + 1)))?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::parse("trajectory", format!("trajectory row {}: '{c}': {e}", i + 1))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::DegenerateData("a trajectory needs at least two nodes".into()));
        }
        let s: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::parse("trajectory", "trajectory arc length must increase strictly"));
        }
        let horizon = track.total_length();
        if s[0].abs() > 1e-9 || (s[s.len() - 1] - horizon).abs() > 1e-6 * horizon {
            return Err(Error::parse("trajectory", format!(
                "trajectory covers [{}, {}] m but the track horizon is {horizon} m",
                s[0],
                s[s.len() - 1]
            )));
        }
        let n = rows.len();
        Ok(Self {
            kappa: s.iter().map(|&v| track.kappa_at(v)).collect(),
            states: rows.iter().map(|r| std::array::from_fn(|i| r[1 + i])).collect(),
            controls: rows[..n - 1].iter().map(|r| std::array::from_fn(|i| r[1 + NX + i])).collect(),
            s,
            lap_length: track.lap_length,
            laps: track.lap_count,
        })
    }

    /// Metadata lines found at the top of a trajectory CSV.
    pub fn csv_metadata(text: &str) -> Vec<(String, String)> {
        text.lines()
            .map_while(|l| l.trim_start().strip_prefix('#'))
            .filter_map(|l| l.split_once(':'))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    }
}
