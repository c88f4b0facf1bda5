//! The interior-point solver on a textbook problem, without any racecar.
//!
//! min  x0 x3 (x0 + x1 + x2) + x2
//! s.t. x0 x1 x2 x3 >= 25
//!      x0² + x1² + x2² + x3² = 40
//!      1 <= xi <= 5

use evrace::nlp::{solve, NlpProblem, SolverOptions};

struct Hs071;

impl NlpProblem for Hs071 {
    fn num_vars(&self) -> usize {
        4
    }
    fn num_constraints(&self) -> usize {
        2
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0; 4], vec![5.0; 4])
    }
    fn constraint_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![25.0, 40.0], vec![f64::INFINITY, 40.0])
    }
    fn objective(&self, x: &[f64]) -> f64 {
        x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g[0] = x[3] * (2.0 * x[0] + x[1] + x[2]);
        g[1] = x[0] * x[3];
        g[2] = x[0] * x[3] + 1.0;
        g[3] = x[0] * (x[0] + x[1] + x[2]);
    }
    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        c[0] = x.iter().product();
        c[1] = x.iter().map(|v| v * v).sum();
    }
    fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        (0..2).flat_map(|i| (0..4).map(move |j| (i, j))).collect()
    }
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        for j in 0..4 {
            vals[j] = (0..4).filter(|&k| k != j).map(|k| x[k]).product();
            vals[4 + j] = 2.0 * x[j];
        }
    }
    fn hessian_structure(&self) -> Vec<(usize, usize)> {
        (0..4).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
    }
    fn hessian_values(&self, x: &[f64], sigma: f64, lambda: &[f64], vals: &mut [f64]) {
        let mut q = 0;
        for i in 0..4 {
            for j in 0..=i {
                let mut h = 0.0;
                // objective
                h += sigma
                    * match (i, j) {
                        (0, 0) => 2.0 * x[3],
                        (3, 0) => 2.0 * x[0] + x[1] + x[2],
                        (3, 1) | (3, 2) => x[0],
                        (1, 0) | (2, 0) => x[3],
                        _ => 0.0,
                    };
                // product constraint
                if i != j {
                    h += lambda[0] * (0..4).filter(|&k| k != i && k != j).map(|k| x[k]).product::<f64>();
                } else {
                    h += lambda[1] * 2.0;
                }
                vals[q] = h;
                q += 1;
            }
        }
    }
}

fn main() -> evrace::Result<()> {
    let opts = SolverOptions { print_log: true, ..Default::default() };
    let result = solve(&Hs071, &[1.0, 5.0, 5.0, 1.0], &opts)?;
    println!("x* = {:?}", result.x.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>());
    println!("f* = {:.8} (known optimum 17.01401727)", result.report.objective);
    Ok(())
}
