use std::path::Path;

use crate::error::{Error, Result};

const CLOSURE_TOL: f64 = 1e-6;

/// Arc-length indexed reference line with a lateral corridor.
///
/// Curvature is positive for left turns and the lateral offset `n` is
/// positive towards the left. Curvature and corridor bounds are linearly
/// interpolated between samples and repeat every `lap_length`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackData {
    pub s: Vec<f64>,
    pub kappa: Vec<f64>,
    pub n_left: Vec<f64>,
    pub n_right: Vec<f64>,
    pub lap_length: f64,
    pub lap_count: usize,
}

impl TrackData {
    pub fn new(
        s: Vec<f64>,
        kappa: Vec<f64>,
        n_left: Vec<f64>,
        n_right: Vec<f64>,
    ) -> Result<Self> {
        let n = s.len();
        if n < 2 {
            return Err(Error::InvalidTrack("a track needs at least two samples".into()));
        }
        if kappa.len() != n || n_left.len() != n || n_right.len() != n {
            return Err(Error::InvalidTrack("column lengths differ".into()));
        }
        if s[0] != 0.0 {
            return Err(Error::InvalidTrack(format!("arc length must start at 0, got {}", s[0])));
        }
        if let Some(i) = s.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidTrack(format!(
                "arc length not strictly increasing at row {} ({} -> {})",
                i + 1,
                s[i],
                s[i + 1]
            )));
        }
        if s.iter().chain(&kappa).chain(&n_left).chain(&n_right).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrack("non-finite value".into()));
        }
        if let Some(i) = (0..n).find(|&i| !(n_right[i] < n_left[i])) {
            return Err(Error::InvalidTrack(format!(
                "corridor empty at s = {} (n_right {} >= n_left {})",
                s[i], n_right[i], n_left[i]
            )));
        }
        if (kappa[0] - kappa[n - 1]).abs() > CLOSURE_TOL {
            return Err(Error::InvalidTrack(format!(
                "open loop: curvature {} at start vs {} at end",
                kappa[0],
                kappa[n - 1]
            )));
        }
        let lap_length = s[n - 1];
        Ok(Self {
            s,
            kappa,
            n_left,
            n_right,
            lap_length,
            lap_count: 1,
        })
    }

    pub fn with_laps(mut self, laps: usize) -> Self {
        self.lap_count = laps.max(1);
        self
    }

    /// Total horizon length over all laps.
    pub fn total_length(&self) -> f64 {
        self.lap_length * self.lap_count as f64
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let mut local = s.rem_euclid(self.lap_length);
        // the end of every lap maps onto the last sample, not back to 0
        if local == 0.0 && s > 0.0 {
            local = self.lap_length;
        }
        let i = match self.s.partition_point(|&x| x <= local) {
            0 => 0,
            p => (p - 1).min(self.s.len() - 2),
        };
        let w = (local - self.s[i]) / (self.s[i + 1] - self.s[i]);
        (i, w)
    }

    fn interp(&self, col: &[f64], s: f64) -> f64 {
        let (i, w) = self.locate(s);
        col[i] + w * (col[i + 1] - col[i])
    }

    pub fn kappa_at(&self, s: f64) -> f64 {
        self.interp(&self.kappa, s)
    }

    /// `(n_right, n_left)` at arc length `s`.
    pub fn corridor_at(&self, s: f64) -> (f64, f64) {
        (self.interp(&self.n_right, s), self.interp(&self.n_left, s))
    }

    /// Samples where the piecewise-linear curvature changes slope.
    pub fn breakpoints(&self) -> Vec<f64> {
        let slope = |i: usize| (self.kappa[i + 1] - self.kappa[i]) / (self.s[i + 1] - self.s[i]);
        (1..self.s.len() - 1)
            .filter(|&i| (slope(i) - slope(i - 1)).abs() > 1e-9)
            .map(|i| self.s[i])
            .collect()
    }

    /// Reads a delimited track file with header
    /// `s_m,kappa_1pm,n_left_m,n_right_m`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidTrack(msg) => Error::parse(path, msg),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::InvalidTrack(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header != ["s_m", "kappa_1pm", "n_left_m", "n_right_m"] {
            return Err(Error::InvalidTrack(format!(
                "expected header `s_m,kappa_1pm,n_left_m,n_right_m`, found `{}`",
                header.join(",")
            )));
        }
        let mut cols: [Vec<f64>; 4] = Default::default();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidTrack(e.to_string()))?;
            if rec.len() != 4 {
                return Err(Error::InvalidTrack(format!("row {}: expected 4 fields", row + 1)));
            }
            for (c, field) in cols.iter_mut().zip(rec.iter()) {
                c.push(field.parse().map_err(|e| {
                    Error::InvalidTrack(format!("row {}: `{field}`: {e}", row + 1))
                })?);
            }
        }
        let [s, kappa, n_left, n_right] = cols;
        Self::new(s, kappa, n_left, n_right)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s_m,kappa_1pm,n_left_m,n_right_m\n");
        for i in 0..self.s.len() {
            out.push_str(&format!(
                "{},{:.12},{},{}\n",
                self.s[i], self.kappa[i], self.n_left[i], self.n_right[i]
            ));
        }
        out
    }
}

/// Read a track file (lap count 1; set the horizon with [`TrackData::with_laps`]).
pub fn load_track(path: impl AsRef<Path>) -> Result<TrackData> {
    TrackData::load(path)
}

/// The reference oval: two 200 m straights joined by two 180° turns of
/// 100 m each. Each turn ramps curvature linearly over its first and last
/// `ramp` metres and holds it constant in between. Start/finish sits in the
/// middle of a straight. Sampled every metre.
pub fn synthetic_oval(half_width: f64, ramp: f64) -> TrackData {
    let kc = std::f64::consts::PI / (100.0 - ramp);
    let turn = |x: f64| {
        if x < ramp {
            kc * x / ramp
        } else if x <= 100.0 - ramp {
            kc
        } else {
            kc * (100.0 - x) / ramp
        }
    };
    let curvature = |s: f64| match s {
        s if (100.0..=200.0).contains(&s) => turn(s - 100.0),
        s if (400.0..=500.0).contains(&s) => turn(s - 400.0),
        _ => 0.0,
    };
    let s: Vec<f64> = (0..=600).map(f64::from).collect();
    let kappa = s.iter().map(|&x| curvature(x)).collect();
    let n = s.len();
    TrackData::new(s, kappa, vec![half_width; n], vec![-half_width; n]).expect("valid oval")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oval_geometry() {
        let t = synthetic_oval(5.0, 12.0);
        assert_eq!(t.lap_length, 600.0);
        assert_eq!(t.clone().with_laps(2).total_length(), 1200.0);
        // heading closes: trapezoid is exact for piecewise-linear curvature
        let turn: f64 = t
            .s
            .windows(2)
            .zip(t.kappa.windows(2))
            .map(|(s, k)| 0.5 * (s[1] - s[0]) * (k[0] + k[1]))
            .sum();
        assert!((turn - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(
            t.breakpoints(),
            vec![100.0, 112.0, 188.0, 200.0, 400.0, 412.0, 488.0, 500.0]
        );
    }

    #[test]
    fn interpolation_wraps_laps() {
        let t = synthetic_oval(5.0, 12.0).with_laps(2);
        assert_eq!(t.kappa_at(150.0), t.kappa_at(750.0));
        assert!((t.kappa_at(106.0) - t.kappa_at(112.0) / 2.0).abs() < 1e-15);
        assert_eq!(t.kappa_at(600.0), t.kappa[600]);
        assert_eq!(t.corridor_at(333.3), (-5.0, 5.0));
    }

    #[test]
    fn rejects_bad_tracks() {
        let bad_s = TrackData::parse(
            "s_m,kappa_1pm,n_left_m,n_right_m\n0,0,5,-5\n10,0,5,-5\n5,0,5,-5\n",
        );
        assert!(matches!(bad_s, Err(Error::InvalidTrack(_))));
        let open = TrackData::parse("s_m,kappa_1pm,n_left_m,n_right_m\n0,0,5,-5\n10,0.01,5,-5\n");
        assert!(open.is_err());
        let header = TrackData::parse("s,k,l,r\n0,0,5,-5\n10,0,5,-5\n");
        assert!(header.is_err());
        let corridor = TrackData::parse("s_m,kappa_1pm,n_left_m,n_right_m\n0,0,5,-5\n10,0,-6,-5\n");
        assert!(corridor.is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = synthetic_oval(5.0, 12.0);
        let back = TrackData::parse(&t.to_csv()).unwrap();
        assert_eq!(back.s, t.s);
        for (a, b) in back.kappa.iter().zip(&t.kappa) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
