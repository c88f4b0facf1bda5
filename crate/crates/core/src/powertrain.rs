//! Component loss meta-models.
//!
//! Machines and inverters are described by a quadratic input-power
//! characteristic `P_in = a·P_out² + b·P_out + c`, fitted by least squares to
//! measured `(P_out, P_in)` pairs. The battery uses an open-circuit voltage
//! source behind an internal resistance. All powers are in watts.

use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ad::Real;
use crate::error::{Error, Result};

/// Quadratic input-power model of a machine or inverter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossPolyFit {
    /// Quadratic coefficient (1/W).
    pub a: f64,
    /// Linear coefficient (-).
    pub b: f64,
    /// Constant offset (W).
    pub c: f64,
}

impl LossPolyFit {
    pub const LOSSLESS: LossPolyFit = LossPolyFit {
        a: 0.0,
        b: 1.0,
        c: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidParameter("loss fit coefficients must be finite".into()));
        }
        if a < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "quadratic loss coefficient must be non-negative, got {a}"
            )));
        }
        Ok(Self { a, b, c })
    }

    /// Input power required for output power `p_out`.
    pub fn input_power<T: Real>(&self, p_out: T) -> T {
        p_out * p_out * self.a + p_out * self.b + self.c
    }

    pub fn loss(&self, p_out: f64) -> f64 {
        component_loss(self.input_power(p_out), p_out)
    }
}

/// Input power of a fitted component (the quadratic characteristic).
pub fn eval_poly_input(fit: &LossPolyFit, p_out: f64) -> f64 {
    fit.input_power(p_out)
}

/// Power loss of a component, `P_in − P_out`.
pub fn component_loss(p_in: f64, p_out: f64) -> f64 {
    p_in - p_out
}

/// Paired output/input power measurements for one component.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    samples: Vec<(f64, f64)>,
}

impl MeasurementSet {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::DegenerateData(format!(
                "a quadratic fit needs at least 3 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples
            .iter()
            .position(|(o, p)| !o.is_finite() || !p.is_finite())
        {
            return Err(Error::DegenerateData(format!("sample {i} is not finite")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn output_range(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(o, _)| {
                (lo.min(o), hi.max(o))
            })
    }

    /// Reads a delimited file with header `p_out_w,p_in_w` (or
    /// `p_out_kw,p_in_kw`, converted to watts).
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text).map_err(|msg| Error::parse(path, msg))?
    }

    fn parse_csv(text: &str) -> std::result::Result<Result<Self>, String> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let scale = match cols.as_slice() {
            ["p_out_w", "p_in_w"] => 1.0,
            ["p_out_kw", "p_in_kw"] => 1e3,
            _ => {
                return Err(format!(
                    "expected header `p_out_w,p_in_w` or `p_out_kw,p_in_kw`, found `{}`",
                    cols.join(",")
                ))
            }
        };
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let num = |i: usize| -> std::result::Result<f64, String> {
                rec.get(i)
                    .ok_or_else(|| format!("row {}: missing column {}", line + 1, i + 1))?
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: {e}", line + 1))
            };
            samples.push((num(0)? * scale, num(1)? * scale));
        }
        Ok(Self::new(samples))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_out_w,p_in_w\n");
        for (o, i) in &self.samples {
            out.push_str(&format!("{o:.6},{i:.6}\n"));
        }
        out
    }
}

/// Least-squares fit together with its error figures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub component: String,
    pub samples: usize,
    pub a_fit: f64,
    pub b_fit: f64,
    pub c_fit: f64,
    /// Mean squared error of the fitted input power (W²).
    pub mse_w2: f64,
    /// Root of the MSE in percent of the mean absolute measured input power.
    pub nrmse_percent: f64,
    pub p_out_min_w: f64,
    pub p_out_max_w: f64,
}

impl FitReport {
    pub fn fit(&self) -> LossPolyFit {
        LossPolyFit {
            a: self.a_fit,
            b: self.b_fit,
            c: self.c_fit,
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "# loss-model fit report\n\
             # nrmse_percent = sqrt(mse_w2) / mean(|p_in_w|) * 100\n{}",
            toml::to_string(self).expect("report serialises")
        )
    }
}

impl fmt::Display for FitReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: a={:.6e} 1/W b={:.6} c={:.3} W  mse={:.4e} W^2  nrmse={:.3} %  (N={})",
            self.component,
            self.a_fit,
            self.b_fit,
            self.c_fit,
            self.mse_w2,
            self.nrmse_percent,
            self.samples
        )
    }
}

/// Fits the quadratic characteristic minimising the mean squared input-power
/// error. Normal equations on a rescaled abscissa are tried first; a
/// column-pivoted Householder QR takes over when they are ill-conditioned.
pub fn fit_parabola(data: &MeasurementSet) -> Result<(LossPolyFit, FitReport)> {
    fit_parabola_named(data, "component")
}

pub fn fit_parabola_named(
    data: &MeasurementSet,
    component: &str,
) -> Result<(LossPolyFit, FitReport)> {
    let mut distinct: Vec<f64> = data.samples.iter().map(|s| s.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateData(format!(
            "only {} distinct output powers; a quadratic is not determined",
            distinct.len()
        )));
    }

    let (lo, hi) = data.output_range();
    let scale = lo.abs().max(hi.abs());
    let rows: Vec<[f64; 3]> = data
        .samples
        .iter()
        .map(|&(o, _)| {
            let x = o / scale;
            [x * x, x, 1.0]
        })
        .collect();
    let rhs: Vec<f64> = data.samples.iter().map(|s| s.1).collect();

    let coef = normal_equations(&rows, &rhs).unwrap_or_else(|| householder_lstsq(&rows, &rhs));
    let fit = LossPolyFit {
        a: coef[0] / (scale * scale),
        b: coef[1] / scale,
        c: coef[2],
    };

    let n = data.len() as f64;
    let mse = data
        .samples
        .iter()
        .map(|&(o, i)| (fit.input_power(o) - i).powi(2))
        .sum::<f64>()
        / n;
    let mean_abs = data.samples.iter().map(|s| s.1.abs()).sum::<f64>() / n;
    let nrmse = if mean_abs > 0.0 {
        mse.sqrt() / mean_abs * 100.0
    } else {
        0.0
    };
    if fit.a < 0.0 {
        log::warn!("{component}: fitted quadratic coefficient is negative ({:e})", fit.a);
    }
    let report = FitReport {
        component: component.to_string(),
        samples: data.len(),
        a_fit: fit.a,
        b_fit: fit.b,
        c_fit: fit.c,
        mse_w2: mse,
        nrmse_percent: nrmse,
        p_out_min_w: lo,
        p_out_max_w: hi,
    };
    Ok((fit, report))
}

fn normal_equations(rows: &[[f64; 3]], rhs: &[f64]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for (r, &y) in rows.iter().zip(rhs) {
        for i in 0..3 {
            v[i] += r[i] * y;
            for j in 0..3 {
                m[i][j] += r[i] * r[j];
            }
        }
    }
    // Cholesky; bail out to QR if a pivot collapses.
    let trace = m[0][0] + m[1][1] + m[2][2];
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s = m[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if s <= 1e-10 * trace {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = (v[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (y[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

fn householder_lstsq(rows: &[[f64; 3]], rhs: &[f64]) -> [f64; 3] {
    let m = rows.len();
    let mut a: Vec<[f64; 3]> = rows.to_vec();
    let mut b = rhs.to_vec();
    let mut perm = [0usize, 1, 2];
    let mut rank = 3;
    let mut r0 = 0.0;
    for k in 0..3 {
        // pivot on the largest remaining column norm
        let norm = |c: usize, a: &Vec<[f64; 3]>| (k..m).map(|i| a[i][c].powi(2)).sum::<f64>();
        let best = (k..3)
            .max_by(|&p, &q| norm(p, &a).total_cmp(&norm(q, &a)))
            .unwrap();
        if best != k {
            perm.swap(k, best);
            for row in a.iter_mut() {
                row.swap(k, best);
            }
        }
        let alpha = norm(k, &a).sqrt();
        if k == 0 {
            r0 = alpha;
        }
        if alpha <= 1e-13 * r0 {
            rank = k;
            break;
        }
        let sign = if a[k][k] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (k..m).map(|i| a[i][k]).collect();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for c in k..3 {
            let dot: f64 = (k..m).map(|i| v[i - k] * a[i][c]).sum();
            for i in k..m {
                a[i][c] -= 2.0 * dot / vnorm2 * v[i - k];
            }
        }
        let dot: f64 = (k..m).map(|i| v[i - k] * b[i]).sum();
        for i in k..m {
            b[i] -= 2.0 * dot / vnorm2 * v[i - k];
        }
    }
    let mut z = [0.0; 3];
    for i in (0..rank).rev() {
        z[i] = (b[i] - (i + 1..rank).map(|k| a[i][k] * z[k]).sum::<f64>()) / a[i][i];
    }
    let mut x = [0.0; 3];
    for (k, &p) in perm.iter().enumerate() {
        x[p] = z[k];
    }
    x
}

/// Open-circuit battery model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryCircuit {
    /// Open-circuit voltage (V).
    pub u_ocv: f64,
    /// Internal resistance (Ω).
    pub r_i: f64,
}

impl BatteryCircuit {
    pub fn new(u_ocv: f64, r_i: f64) -> Result<Self> {
        if !(u_ocv > 0.0 && r_i > 0.0 && u_ocv.is_finite() && r_i.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "battery needs u_ocv > 0 and r_i > 0, got {u_ocv} V / {r_i} Ohm"
            )));
        }
        Ok(Self { u_ocv, r_i })
    }

    /// Largest terminal power the circuit can deliver, `U²/(4R)`.
    pub fn max_output_power(&self) -> f64 {
        self.u_ocv * self.u_ocv / (4.0 * self.r_i)
    }

    /// Discriminant of the power equation, normalised to 1 at zero output.
    pub fn headroom<T: Real>(&self, p_out: T) -> T {
        -(p_out * (4.0 * self.r_i / (self.u_ocv * self.u_ocv))) + 1.0
    }

    /// Internal power with the square root continued below the discriminant
    /// boundary by its second-order Taylor polynomial at a small positive
    /// headroom. The continuation is C² and lets line searches probe
    /// infeasible powers.
    pub fn input_power_smooth<T: Real>(&self, p_out: T) -> T {
        const KNEE: f64 = 1e-3;
        let u = self.u_ocv;
        let d = self.headroom(p_out);
        let root = if d.re() >= KNEE {
            d.sqrt()
        } else {
            let s0 = KNEE.sqrt();
            let e = d - KNEE;
            e * (0.5 / s0) - e * e * (1.0 / (8.0 * KNEE * s0)) + s0
        };
        (-root + 1.0) * (u * u / (2.0 * self.r_i))
    }
}

/// Internal battery power for terminal power `p_out_b` (negative while
/// charging).
pub fn battery_input_power(bat: &BatteryCircuit, p_out_b: f64) -> Result<f64> {
    let u = bat.u_ocv;
    let disc = u * u - 4.0 * p_out_b * bat.r_i;
    if disc < 0.0 {
        return Err(Error::InfeasiblePower {
            requested: p_out_b,
            max: bat.max_output_power(),
        });
    }
    Ok(u * u / (2.0 * bat.r_i) - u * disc.sqrt() / (2.0 * bat.r_i))
}

/// Synthetic measurement generator for demos and tests.
///
/// Output powers cluster near the rated limits, as on a race lap, with a
/// thinner spread in between. Input powers follow `truth` plus an
/// operating-point dependent deviation and Gaussian noise.
pub fn synthetic_measurements(
    truth: &LossPolyFit,
    p_rated: f64,
    n: usize,
    noise_w: f64,
    seed: u64,
) -> MeasurementSet {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_w).expect("finite noise level");
    let samples = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let frac = if u < 0.4 {
                rng.random_range(0.9..=1.0)
            } else if u < 0.7 {
                rng.random_range(0.0..0.08)
            } else {
                rng.random_range(0.0..1.0)
            };
            let p_out = frac * p_rated;
            // part-load efficiency dip the quadratic cannot follow exactly
            let bump = 0.001 * p_rated * (std::f64::consts::PI * frac).sin().powi(2);
            let p_in = truth.input_power(p_out) + bump + noise.sample(&mut rng);
            (p_out, p_in)
        })
        .collect();
    MeasurementSet::new(samples).expect("n >= 3 finite samples")
}
