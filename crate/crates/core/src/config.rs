//! Scenario and parameter files.
//!
//! A scenario is a TOML file that names a track, the lap count, the boundary
//! conditions and the parameter files, and carries optional `[mesh]`,
//! `[transcription]`, `[solver]` and `[verify]` sections. Relative paths are
//! resolved against the directory of the scenario file.
//!
//! ```toml
//! track = "oval.csv"
//! laps = 2
//! boundary = "hot"            # "cold", "hot" or a boundary file
//! params = "params.toml"      # full model parameters (optional)
//! thermal = "thermal.toml"    # flat thermal parameter file (optional)
//! machine_fit = "machine_fit.toml"   # output of `evrace fit` (optional)
//!
//! [solver]
//! tol_feas = 1e-6
//!
//! [verify]
//! mode = "segmented"
//! segment_intervals = 20
//! ```
//!
//! Later sources override earlier ones: built-in defaults, then `params`,
//! then `thermal`, then the fit reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nlp::SolverOptions;
use crate::ocp::{BoundarySpec, DrivingBoundary, ModelParams, TranscriptionOptions};
use crate::powertrain::FitReport;
use crate::sim::VerifyOptions;
use crate::thermal::{MotorGeometry, ThermalParams, ThermalState};
use crate::vehicle::{MeshOptions, TrackData, VehicleState};

/// Name and version written into every output header.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// File names inside a solution directory.
pub mod files {
    pub const SCENARIO: &str = "scenario.toml";
    pub const PARAMS: &str = "params.toml";
    pub const BOUNDARY: &str = "boundary.toml";
    pub const TRACK: &str = "track.csv";
    pub const MESH: &str = "mesh.csv";
    pub const SOLUTION: &str = "solution.csv";
    pub const SUMMARY: &str = "summary.txt";
    pub const SOLVER_REPORT: &str = "solver_report.txt";
    pub const VERIFY: &str = "verify.txt";
    pub const TRACE: &str = "trace.csv";
}

/// The scenario file as written on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub track: PathBuf,
    #[serde(default = "default_laps")]
    pub laps: usize,
    #[serde(default = "default_boundary")]
    pub boundary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine_fit: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverter_fit: Option<PathBuf>,
    /// Output directory; defaults to `out/<name>` next to the scenario.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub mesh: MeshOptions,
    #[serde(default)]
    pub transcription: TranscriptionOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub verify: VerifyOptions,
}

fn default_laps() -> usize {
    2
}

fn default_boundary() -> String {
    "cold".to_string()
}

/// Flat thermal parameter file: lumped thermal network plus machine geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalFile {
    pub c_m: f64,
    pub c_i: f64,
    pub c_b: f64,
    pub c_f1: f64,
    pub c_f2: f64,
    pub r_i_th: f64,
    pub r_b_th: f64,
    pub r_rmi: f64,
    pub r_rb: f64,
    pub mdot_f1: f64,
    pub c_f: f64,
    pub t_env: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub length: f64,
    pub k_iro: f64,
    pub h_f: f64,
    pub h_g: f64,
}

impl ThermalFile {
    pub fn new(t: &ThermalParams, g: &MotorGeometry) -> Self {
        Self {
            c_m: t.c_m,
            c_i: t.c_i,
            c_b: t.c_b,
            c_f1: t.c_f1,
            c_f2: t.c_f2,
            r_i_th: t.r_i_th,
            r_b_th: t.r_b_th,
            r_rmi: t.r_rmi,
            r_rb: t.r_rb,
            mdot_f1: t.mdot_f1,
            c_f: t.c_f,
            t_env: t.t_env,
            r1: g.r1,
            r2: g.r2,
            r3: g.r3,
            r4: g.r4,
            length: g.length,
            k_iro: g.k_iro,
            h_f: g.h_f,
            h_g: g.h_g,
        }
    }

    pub fn split(&self) -> (ThermalParams, MotorGeometry) {
        (
            ThermalParams {
                c_m: self.c_m,
                c_i: self.c_i,
                c_b: self.c_b,
                c_f1: self.c_f1,
                c_f2: self.c_f2,
                r_i_th: self.r_i_th,
                r_b_th: self.r_b_th,
                r_rmi: self.r_rmi,
                r_rb: self.r_rb,
                mdot_f1: self.mdot_f1,
                c_f: self.c_f,
                t_env: self.t_env,
            },
            MotorGeometry {
                r1: self.r1,
                r2: self.r2,
                r3: self.r3,
                r4: self.r4,
                length: self.length,
                k_iro: self.k_iro,
                h_f: self.h_f,
                h_g: self.h_g,
            },
        )
    }
}

/// Custom boundary conditions.
///
/// ```toml
/// driving = "cyclic"
/// [initial_temperatures]
/// t_m = 60.0
/// t_i = 50.0
/// t_b = 35.0
/// t_f1 = 40.0
/// t_f2 = 30.0
/// ```
///
/// A standing or rolling start replaces `driving = "cyclic"` with a
/// `[driving.pinned]` table holding `v, beta, psi_dot, n, xi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryFile {
    pub driving: DrivingFile,
    pub initial_temperatures: ThermalState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrivingFile {
    Cyclic,
    Pinned(VehicleState),
}

impl From<BoundaryFile> for BoundarySpec {
    fn from(b: BoundaryFile) -> Self {
        BoundarySpec {
            initial_temperatures: b.initial_temperatures,
            driving: match b.driving {
                DrivingFile::Cyclic => DrivingBoundary::Cyclic,
                DrivingFile::Pinned(s) => DrivingBoundary::Pinned(s),
            },
        }
    }
}

impl From<BoundarySpec> for BoundaryFile {
    fn from(b: BoundarySpec) -> Self {
        BoundaryFile {
            initial_temperatures: b.initial_temperatures,
            driving: match b.driving {
                DrivingBoundary::Cyclic => DrivingFile::Cyclic,
                DrivingBoundary::Pinned(s) => DrivingFile::Pinned(s),
            },
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::parse(path, e.to_string().trim_end()))
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("configuration types serialise to TOML")
}

/// Read a full parameter file; missing sections keep their defaults.
pub fn load_params(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    parse_toml(path, &read(path)?)
}

pub fn load_thermal(path: impl AsRef<Path>) -> Result<ThermalFile> {
    let path = path.as_ref();
    parse_toml(path, &read(path)?)
}

pub fn load_fit_report(path: impl AsRef<Path>) -> Result<FitReport> {
    let path = path.as_ref();
    parse_toml(path, &read(path)?)
}

/// `"cold"`, `"hot"` or the path of a [`BoundaryFile`].
pub fn load_boundary(spec: &str, base: &Path) -> Result<BoundarySpec> {
    if let Some(b) = BoundarySpec::preset(spec) {
        return Ok(b);
    }
    let path = base.join(spec);
    let file: BoundaryFile = parse_toml(&path, &read(&path)?)?;
    Ok(file.into())
}

/// A scenario with every file read and every override applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Track with the lap count of the scenario.
    pub track: TrackData,
    pub params: ModelParams,
    pub boundary: BoundarySpec,
    pub mesh: MeshOptions,
    pub transcription: TranscriptionOptions,
    pub solver: SolverOptions,
    pub verify: VerifyOptions,
    pub output: PathBuf,
}

impl Scenario {
    /// Default parameters and options on `track`, for programmatic use.
    pub fn new(name: &str, track: TrackData, boundary: BoundarySpec) -> Self {
        Self {
            name: name.to_string(),
            track,
            params: ModelParams::default(),
            boundary,
            mesh: MeshOptions::default(),
            transcription: TranscriptionOptions::default(),
            solver: SolverOptions::default(),
            verify: VerifyOptions::default(),
            output: PathBuf::from("out").join(name),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read(path)?;
        let file: ScenarioFile = parse_toml(path, &text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::resolve(file, base, stem)
    }

    /// Read every referenced file relative to `base`.
    pub fn resolve(file: ScenarioFile, base: &Path, fallback_name: &str) -> Result<Self> {
        if file.laps == 0 {
            return Err(Error::InvalidParameter("laps must be >= 1".into()));
        }
        let name = file.name.clone().unwrap_or_else(|| fallback_name.to_string());
        let track = TrackData::load(base.join(&file.track))?.with_laps(file.laps);
        let mut params = match &file.params {
            Some(p) => load_params(base.join(p))?,
            None => ModelParams::default(),
        };
        if let Some(p) = &file.thermal {
            let (thermal, geometry) = load_thermal(base.join(p))?.split();
            params.thermal = thermal;
            params.geometry = geometry;
        }
        if let Some(p) = &file.machine_fit {
            params.powertrain.machine = load_fit_report(base.join(p))?.fit();
        }
        if let Some(p) = &file.inverter_fit {
            params.powertrain.inverter = load_fit_report(base.join(p))?.fit();
        }
        params.validate()?;
        let boundary = load_boundary(&file.boundary, base)?;
        boundary.validate(&params.limits)?;
        file.solver.validate()?;
        let output = match &file.output {
            Some(p) => base.join(p),
            None => base.join("out").join(&name),
        };
        Ok(Self {
            name,
            track,
            params,
            boundary,
            mesh: file.mesh,
            transcription: file.transcription,
            solver: file.solver,
            verify: file.verify,
            output,
        })
    }

    /// SHA-256 over the canonical text of everything that shapes the
    /// solution: track, parameters, boundary and the numerical options.
    /// Output locations and log verbosity do not enter.
    pub fn config_hash(&self) -> String {
        let mut solver = self.solver.clone();
        solver.print_log = false;
        let mut h = Sha256::new();
        for part in [
            self.track.to_csv(),
            format!("laps = {}\n", self.track.lap_count),
            to_toml(&self.params),
            to_toml(&BoundaryFile::from(self.boundary)),
            to_toml(&self.mesh),
            to_toml(&self.transcription),
            to_toml(&solver),
        ] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Header lines for output files.
    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("tool".into(), TOOL_VERSION.into()),
            ("scenario".into(), self.name.clone()),
            ("config_sha256".into(), self.config_hash()),
        ]
    }

    /// Write a self-contained copy of the scenario into `dir`: the scenario
    /// file, full parameters, boundary and a single-lap track.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = format!("# {TOOL_VERSION}\n# config_sha256 = {}\n", self.config_hash());
        write(&dir.join(files::TRACK), &self.track.to_csv())?;
        write(&dir.join(files::PARAMS), &format!("{header}{}", to_toml(&self.params)))?;
        write(
            &dir.join(files::BOUNDARY),
            &format!("{header}{}", to_toml(&BoundaryFile::from(self.boundary))),
        )?;
        let file = ScenarioFile {
            name: Some(self.name.clone()),
            track: files::TRACK.into(),
            laps: self.track.lap_count,
            boundary: files::BOUNDARY.into(),
            params: Some(files::PARAMS.into()),
            thermal: None,
            machine_fit: None,
            inverter_fit: None,
            output: Some(".".into()),
            mesh: self.mesh,
            transcription: self.transcription,
            solver: self.solver.clone(),
            verify: self.verify,
        };
        write(&dir.join(files::SCENARIO), &format!("{header}{}", to_toml(&file)))
    }
}

/// Text of a flat thermal parameter file with units in comments.
pub fn thermal_file_text(t: &ThermalParams, g: &MotorGeometry) -> String {
    let f = ThermalFile::new(t, g);
    let rows: [(&str, f64, &str); 20] = [
        ("c_m", f.c_m, "J/K, heat capacity of one machine"),
        ("c_i", f.c_i, "J/K, heat capacity of one inverter"),
        ("c_b", f.c_b, "J/K, battery heat capacity"),
        ("c_f1", f.c_f1, "J/K, coolant heat capacity, machine/inverter circuit"),
        ("c_f2", f.c_f2, "J/K, coolant heat capacity, battery circuit"),
        ("r_i_th", f.r_i_th, "K/W, inverter to coolant"),
        ("r_b_th", f.r_b_th, "K/W, battery to coolant"),
        ("r_rmi", f.r_rmi, "K/W, machine/inverter radiator (inf disables)"),
        ("r_rb", f.r_rb, "K/W, battery radiator (inf disables)"),
        ("mdot_f1", f.mdot_f1, "kg/s, coolant mass flow, machine/inverter circuit"),
        ("c_f", f.c_f, "J/(kg K), coolant specific heat"),
        ("t_env", f.t_env, "°C, ambient temperature"),
        ("r1", f.r1, "m, shaft radius"),
        ("r2", f.r2, "m, rotor outer radius"),
        ("r3", f.r3, "m, stator inner radius"),
        ("r4", f.r4, "m, stator outer radius"),
        ("length", f.length, "m, active length"),
        ("k_iro", f.k_iro, "W/(m K), iron conductivity"),
        ("h_f", f.h_f, "W/(m² K), stator to coolant film coefficient"),
        ("h_g", f.h_g, "W/(m² K), air-gap film coefficient"),
    ];
    let mut out = String::new();
    for (key, value, note) in rows {
        let value = if value.is_infinite() { "inf".to_string() } else { format!("{value:?}") };
        out.push_str(&format!("{key} = {value}  # {note}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ReplayMode;
    use crate::vehicle::synthetic_oval;

    fn scratch_dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn write_oval(dir: &Path) {
        std::fs::write(dir.join("oval.csv"), synthetic_oval(5.0, 12.0).to_csv()).unwrap();
    }

    #[test]
    fn minimal_scenario_takes_defaults() {
        let dir = scratch_dir();
        write_oval(dir.path());
        std::fs::write(dir.path().join("s.toml"), "track = \"oval.csv\"\n").unwrap();
        let sc = Scenario::load(dir.path().join("s.toml")).unwrap();
        assert_eq!(sc.name, "s");
        assert_eq!(sc.track.lap_count, 2);
        assert_eq!(sc.boundary, BoundarySpec::cold());
        assert_eq!(sc.params, ModelParams::default());
        assert_eq!(sc.solver, SolverOptions::default());
        assert_eq!(sc.output, dir.path().join("out").join("s"));
    }

    #[test]
    fn overrides_apply_in_order() {
        let dir = scratch_dir();
        write_oval(dir.path());
        let mut params = ModelParams::default();
        params.vehicle.mass = 1400.0;
        params.thermal.c_b = 1.0;
        std::fs::write(dir.path().join("p.toml"), to_toml(&params)).unwrap();
        let mut t = ModelParams::default();
        t.thermal.c_b = 6.0e4;
        std::fs::write(dir.path().join("t.toml"), thermal_file_text(&t.thermal, &t.geometry)).unwrap();
        std::fs::write(
            dir.path().join("s.toml"),
            "track = \"oval.csv\"\nlaps = 1\nboundary = \"hot\"\nparams = \"p.toml\"\nthermal = \"t.toml\"\n\
             [solver]\ntol_feas = 1e-7\nline_search = \"merit\"\n[verify]\nmode = \"segmented\"\nsegment_intervals = 20\n",
        )
        .unwrap();
        let sc = Scenario::load(dir.path().join("s.toml")).unwrap();
        assert_eq!(sc.params.vehicle.mass, 1400.0);
        assert_eq!(sc.params.thermal.c_b, 6.0e4);
        assert_eq!(sc.boundary, BoundarySpec::hot());
        assert_eq!(sc.solver.tol_feas, 1e-7);
        assert_eq!(sc.solver.line_search, crate::nlp::LineSearch::Merit);
        assert_eq!(sc.verify.mode, ReplayMode::Segmented);
        assert_eq!(sc.verify.segment_intervals, 20);
        assert_eq!(sc.track.lap_count, 1);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let dir = scratch_dir();
        write_oval(dir.path());
        let path = dir.path().join("s.toml");
        std::fs::write(&path, "track = \"oval.csv\"\ntrakc = 1\n").unwrap();
        assert!(matches!(Scenario::load(&path), Err(Error::Parse { .. })));
        std::fs::write(&path, "track = \"oval.csv\"\n[solver]\nmu_linear = 2.0\n").unwrap();
        assert!(matches!(Scenario::load(&path), Err(Error::InvalidParameter(_))));
        std::fs::write(&path, "track = \"missing.csv\"\n").unwrap();
        assert!(matches!(Scenario::load(&path), Err(Error::Io { .. })));
        std::fs::write(&path, "track = \"oval.csv\"\nboundary = \"warm\"\n").unwrap();
        assert!(matches!(Scenario::load(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn custom_boundary_file() {
        let dir = scratch_dir();
        write_oval(dir.path());
        std::fs::write(
            dir.path().join("b.toml"),
            "[driving.pinned]\nv = 20.0\nbeta = 0.0\npsi_dot = 0.0\nn = 0.0\nxi = 0.0\n\
             [initial_temperatures]\nt_m = 60.0\nt_i = 50.0\nt_b = 35.0\nt_f1 = 40.0\nt_f2 = 30.0\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("s.toml"), "track = \"oval.csv\"\nboundary = \"b.toml\"\n").unwrap();
        let sc = Scenario::load(dir.path().join("s.toml")).unwrap();
        assert_eq!(sc.boundary.driving, DrivingBoundary::Pinned(VehicleState::straight(20.0)));
        assert_eq!(sc.boundary.initial_temperatures.to_array(), [60.0, 50.0, 35.0, 40.0, 30.0]);
    }

    #[test]
    fn resolved_copy_round_trips_with_the_same_hash() {
        let dir = scratch_dir();
        write_oval(dir.path());
        std::fs::write(dir.path().join("s.toml"), "track = \"oval.csv\"\nboundary = \"hot\"\n").unwrap();
        let sc = Scenario::load(dir.path().join("s.toml")).unwrap();
        let out = dir.path().join("copy");
        sc.write_resolved(&out).unwrap();
        let back = Scenario::load(out.join(files::SCENARIO)).unwrap();
        assert_eq!(back.params, sc.params);
        assert_eq!(back.boundary, sc.boundary);
        assert_eq!(back.track, sc.track);
        assert_eq!(back.config_hash(), sc.config_hash());
        assert_eq!(back.output, out.join("."));
    }

    #[test]
    fn hash_tracks_content_but_not_verbosity() {
        let sc = Scenario::new("x", synthetic_oval(5.0, 12.0).with_laps(2), BoundarySpec::cold());
        let h = sc.config_hash();
        assert_eq!(h.len(), 64);
        let mut quiet = sc.clone();
        quiet.solver.print_log = true;
        quiet.output = "elsewhere".into();
        assert_eq!(quiet.config_hash(), h);
        let mut heavier = sc.clone();
        heavier.params.vehicle.mass += 1.0;
        assert_ne!(heavier.config_hash(), h);
        let mut hot = sc;
        hot.boundary = BoundarySpec::hot();
        assert_ne!(hot.config_hash(), h);
    }

    #[test]
    fn thermal_file_text_parses_back() {
        let p = ModelParams::default();
        let text = thermal_file_text(&p.thermal, &p.geometry);
        let f: ThermalFile = toml::from_str(&text).unwrap();
        assert_eq!(f.split(), (p.thermal, p.geometry));
        let mut open = p.thermal;
        open.r_rb = f64::INFINITY;
        let f: ThermalFile = toml::from_str(&thermal_file_text(&open, &p.geometry)).unwrap();
        assert!(f.r_rb.is_infinite());
    }
}
