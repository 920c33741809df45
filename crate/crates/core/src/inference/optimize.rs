//! Derivative-free minimisation (Nelder–Mead with dimension-adaptive
//! coefficients).

use crate::error::{LndmError, Result};

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadConfig {
    pub max_iterations: usize,
    /// Initial simplex edge along each axis.
    pub step: f64,
    /// Stop when the spread of function values falls below this.
    pub f_tol: f64,
    /// ... and every vertex is within this distance (sup norm) of the best.
    pub x_tol: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step: 0.5,
            f_tol: 1e-7,
            x_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Minimises `f` from `x0`. Non-finite values are treated as `+∞`.
pub fn nelder_mead<F>(f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let value = eval(x0);
        return Ok(Minimum {
            x: Vec::new(),
            value,
            iterations: 0,
            evaluations,
        });
    }
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += cfg.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    if values[0] == f64::INFINITY {
        return Err(LndmError::domain("objective is not finite at the starting point"));
    }

    let mut iterations = 0;
    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
        simplex = order.iter().map(|i| simplex[*i].clone()).collect();
        values = order.iter().map(|i| values[*i]).collect();

        let spread = values[n] - values[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= cfg.f_tol && size <= cfg.x_tol {
            return Ok(Minimum {
                x: simplex.swap_remove(0),
                value: values[0],
                iterations,
                evaluations,
            });
        }
        if iterations >= cfg.max_iterations {
            let trace = format!(
                "best {:.6} at {:?}, worst {:.6}, size {:.2e}",
                values[0], simplex[0], values[n], size
            );
            return Err(LndmError::Optimization { iterations, trace });
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(alpha * beta);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < values[n] {
            let xc = along(alpha * gamma);
            let fc = eval(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = along(-gamma);
            let fc = eval(&xc);
            (xc, fc, fc < values[n])
        };
        if accept {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let v: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + delta * (x - b))
                .collect();
            values[i] = eval(&v);
            simplex[i] = v;
        }
    }
}
