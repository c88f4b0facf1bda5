use super::track::TrackData;
use crate::error::{Error, Result};

/// Largest admissible ratio between neighbouring step sizes.
pub const MAX_STEP_RATIO: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshOptions {
    pub kappa_threshold: f64,
    pub ds_fine: f64,
    pub ds_coarse: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            kappa_threshold: 1e-3,
            ds_fine: 3.0,
            ds_coarse: 9.0,
        }
    }
}

/// Arc-length nodes over the whole multi-lap horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub s: Vec<f64>,
    pub lap_length: f64,
    pub laps: usize,
}

impl Mesh {
    pub fn nodes(&self) -> usize {
        self.s.len()
    }

    pub fn intervals(&self) -> usize {
        self.s.len() - 1
    }

    pub fn step(&self, k: usize) -> f64 {
        self.s[k + 1] - self.s[k]
    }

    pub fn horizon(&self) -> f64 {
        *self.s.last().expect("non-empty mesh")
    }

    /// Lap index (0-based) of interval `k`.
    pub fn lap_of_interval(&self, k: usize) -> usize {
        let mid = 0.5 * (self.s[k] + self.s[k + 1]);
        ((mid / self.lap_length) as usize).min(self.laps - 1)
    }

    /// `node,s_m,ds_m,kappa_1pm` table; `ds_m` is the step to the next node.
    pub fn to_csv(&self, track: &TrackData) -> String {
        let mut out = String::from("node,s_m,ds_m,kappa_1pm\n");
        for (i, &s) in self.s.iter().enumerate() {
            let ds = self.s.get(i + 1).map_or(0.0, |n| n - s);
            out.push_str(&format!("{i},{s:.9},{ds:.9},{:.12}\n", track.kappa_at(s)));
        }
        out
    }
}

/// Curvature-adaptive mesh.
///
/// Track intervals whose curvature magnitude reaches `kappa_threshold` get
/// `ds_fine`, everything else `ds_coarse`. Segment boundaries are the class
/// changes plus every curvature breakpoint, so nodes sit exactly where the
/// interpolated curvature has kinks. Each segment is divided uniformly into
/// the fewest steps not exceeding its target spacing; steps more than
/// [`MAX_STEP_RATIO`] times a neighbour are then halved until the grading is
/// monotone enough. Laps are concatenated.
pub fn generate_mesh(track: &TrackData, opts: &MeshOptions) -> Result<Mesh> {
    let MeshOptions {
        kappa_threshold,
        ds_fine,
        ds_coarse,
    } = *opts;
    if !(ds_fine > 0.0 && ds_fine < ds_coarse) || !ds_coarse.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "mesh steps must satisfy 0 < ds_fine < ds_coarse (got {ds_fine}, {ds_coarse})"
        )));
    }
    if !(kappa_threshold >= 0.0) {
        return Err(Error::InvalidParameter("kappa threshold must be >= 0".into()));
    }
    if track.s.len() < 2 || track.lap_length <= 0.0 {
        return Err(Error::InvalidTrack("empty track".into()));
    }

    let fine: Vec<bool> = (0..track.s.len() - 1)
        .map(|i| track.kappa[i].abs().max(track.kappa[i + 1].abs()) >= kappa_threshold)
        .collect();

    let mut cuts = vec![0.0];
    for i in 1..fine.len() {
        if fine[i] != fine[i - 1] {
            cuts.push(track.s[i]);
        }
    }
    cuts.extend(track.breakpoints());
    cuts.push(track.lap_length);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut lap = vec![0.0];
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let i = track.s.partition_point(|&x| x <= 0.5 * (a + b)) - 1;
        let target = if fine[i.min(fine.len() - 1)] {
            ds_fine
        } else {
            ds_coarse
        };
        let n = ((b - a) / target - 1e-9).ceil().max(1.0) as usize;
        lap.extend((1..=n).map(|j| if j == n { b } else { a + (b - a) * j as f64 / n as f64 }));
    }
    grade(&mut lap);

    let mut s = Vec::with_capacity((lap.len() - 1) * track.lap_count + 1);
    s.push(0.0);
    for l in 0..track.lap_count {
        let off = l as f64 * track.lap_length;
        s.extend(lap[1..].iter().map(|x| x + off));
    }
    Ok(Mesh {
        s,
        lap_length: track.lap_length,
        laps: track.lap_count,
    })
}

fn grade(nodes: &mut Vec<f64>) {
    loop {
        let h: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let split = (0..h.len()).find(|&i| {
            let too_big = |j: usize| h[i] > MAX_STEP_RATIO * h[j] * (1.0 + 1e-9);
            (i > 0 && too_big(i - 1)) || (i + 1 < h.len() && too_big(i + 1))
        });
        match split {
            Some(i) => nodes.insert(i + 1, 0.5 * (nodes[i] + nodes[i + 1])),
            None => return,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::track::synthetic_oval;
    use super::*;

    fn flat(len: f64, kappa: f64) -> TrackData {
        let s: Vec<f64> = (0..=len as usize).map(|x| x as f64).collect();
        let n = s.len();
        TrackData::new(s, vec![kappa; n], vec![5.0; n], vec![-5.0; n]).unwrap()
    }

    #[test]
    fn uniform_coarse_and_fine() {
        let m = generate_mesh(&flat(90.0, 0.0), &MeshOptions::default()).unwrap();
        assert_eq!(m.nodes(), 11);
        assert!(m.s.windows(2).all(|w| (w[1] - w[0] - 9.0).abs() < 1e-12));
        let m = generate_mesh(&flat(30.0, 0.02), &MeshOptions::default()).unwrap();
        assert_eq!(m.nodes(), 11);
    }

    #[test]
    fn oval_counts() {
        let oval = synthetic_oval(5.0, 12.0);
        let one = generate_mesh(&oval, &MeshOptions::default()).unwrap();
        assert_eq!(one.nodes(), 116);
        let two = generate_mesh(&oval.with_laps(2), &MeshOptions::default()).unwrap();
        assert_eq!(two.nodes(), 231);
        assert_eq!(two.horizon(), 1200.0);
        assert!(two.s.windows(2).all(|w| w[1] > w[0]));
        for bp in [100.0, 112.0, 188.0, 200.0, 700.0, 1100.0] {
            assert!(two.s.contains(&bp), "{bp} missing");
        }
        let again = generate_mesh(&synthetic_oval(5.0, 12.0).with_laps(2), &MeshOptions::default());
        assert_eq!(again.unwrap(), two);
    }

    #[test]
    fn grading_limits_jumps() {
        // a 2 m curved patch inside a long straight forces a 9 -> 3 -> 1 style transition
        let mut t = flat(200.0, 0.0);
        for i in 99..=101 {
            t.kappa[i] = 0.05;
        }
        let opts = MeshOptions {
            kappa_threshold: 1e-3,
            ds_fine: 0.5,
            ds_coarse: 20.0,
        };
        let m = generate_mesh(&t, &opts).unwrap();
        let h: Vec<f64> = m.s.windows(2).map(|w| w[1] - w[0]).collect();
        for w in h.windows(2) {
            let r = w[0].max(w[1]) / w[0].min(w[1]);
            assert!(r <= MAX_STEP_RATIO + 1e-9, "ratio {r}");
        }
    }

    #[test]
    fn rejects_bad_options() {
        let t = flat(90.0, 0.0);
        let bad = MeshOptions {
            ds_fine: 9.0,
            ds_coarse: 3.0,
            ..Default::default()
        };
        assert!(generate_mesh(&t, &bad).is_err());
    }
}
