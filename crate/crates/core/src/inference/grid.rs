//! Hyperparameter mode search and integration grid.
//!
//! Around the mode θ* the Hessian `H` of `−log p̃(θ|y)` gives eigen-axes
//! `dir_j = V_j / √λ_j`. Each axis is walked outwards in both directions at
//! `θ* + √d · t · dir_j` for `t = ±δ, ±2δ, …, ±span` with `δ = span/extent`.
//! Along an axis the tempered log density `(log p̃ − log p̃*)/d` is a
//! standard normal in `t` when the posterior is Gaussian, so normalising its
//! node weights per axis and sharing the mass equally between axes
//! reproduces the first two moments of the posterior while keeping every
//! weight positive.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimize::{nelder_mead, NelderMeadConfig};
use super::{log_posterior, HyperModel};
use crate::error::{LndmError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Outermost node of each half-axis, in standard deviations of the
    /// tempered axis density.
    pub span: f64,
    /// Points per half-axis before pruning.
    pub extent: usize,
    /// Drop in tempered log density beyond which a half-axis stops.
    pub prune: f64,
    pub hessian_step: f64,
    pub max_iterations: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            span: 3.3,
            extent: 3,
            prune: 6.0,
            hessian_step: 1e-3,
            max_iterations: 500,
        }
    }
}

impl GridConfig {
    /// Same span with twice as many points per axis.
    pub fn doubled(&self) -> Self {
        Self {
            extent: self.extent * 2,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.span > 0.0) || self.extent == 0 || !(self.prune > 0.0) || !(self.hessian_step > 0.0) {
            return Err(LndmError::domain(
                "grid needs span > 0, extent ≥ 1, prune > 0 and hessian_step > 0",
            ));
        }
        Ok(())
    }
}

/// Scales of the split-normal approximation along one eigen-axis, in
/// standard-normal units of that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisScale {
    pub negative: f64,
    pub positive: f64,
}

#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub points: Vec<Vec<f64>>,
    /// Unnormalised `log p̃(θ_t | y)`.
    pub log_post: Vec<f64>,
    /// Node spacing `δ` of each point along its axis (the centre carries
    /// the total over axes divided by `d`).
    pub area: Vec<f64>,
    /// Normalised integration weights.
    pub weights: Vec<f64>,
    pub mode: Vec<f64>,
    pub mode_log_post: f64,
    /// Hessian of `−log p̃` at the mode (after any eigenvalue repair).
    pub mode_hessian: DMatrix<f64>,
    /// `dir_j` as columns.
    pub directions: DMatrix<f64>,
    pub axis_scales: Vec<AxisScale>,
    pub iterations: usize,
    pub evaluations: usize,
    pub hessian_repaired: bool,
}

impl HyperGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn objective<M: HyperModel>(model: &M, theta: &[f64]) -> f64 {
    match log_posterior(model, theta) {
        Ok((lp, _)) => -lp,
        Err(_) => f64::INFINITY,
    }
}

/// Locates the mode of `log p̃(θ|y)` with Nelder–Mead followed by one
/// restart from the best vertex, returning `(mode, value, iterations,
/// evaluations)`.
fn find_mode<M: HyperModel>(model: &M, cfg: &GridConfig) -> Result<(Vec<f64>, f64, usize, usize)> {
    let x0 = model.initial();
    let f = |t: &[f64]| objective(model, t);
    let nm = NelderMeadConfig {
        max_iterations: cfg.max_iterations,
        ..NelderMeadConfig::default()
    };
    let first = nelder_mead(f, &x0, &nm)?;
    let second = nelder_mead(
        f,
        &first.x,
        &NelderMeadConfig {
            step: 0.1,
            ..nm
        },
    )?;
    let (x, v) = if second.value <= first.value {
        (second.x, second.value)
    } else {
        (first.x, first.value)
    };
    Ok((
        x,
        -v,
        first.iterations + second.iterations,
        first.evaluations + second.evaluations,
    ))
}

/// Central-difference Hessian and gradient of `f` at `x`.
fn finite_differences<F>(f: F, x: &[f64], f0: f64, h: f64) -> (DMatrix<f64>, Vec<f64>)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = x.len();
    let mut offsets: Vec<Vec<(usize, f64)>> = Vec::new();
    for i in 0..d {
        offsets.push(vec![(i, h)]);
        offsets.push(vec![(i, -h)]);
    }
    for i in 0..d {
        for j in 0..i {
            for (si, sj) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
                offsets.push(vec![(i, si), (j, sj)]);
            }
        }
    }
    let values: Vec<f64> = offsets
        .par_iter()
        .map(|off| {
            let mut t = x.to_vec();
            for (i, s) in off {
                t[*i] += s;
            }
            f(&t)
        })
        .collect();
    let mut hess = DMatrix::zeros(d, d);
    let mut grad = vec![0.0; d];
    for i in 0..d {
        let (fp, fm) = (values[2 * i], values[2 * i + 1]);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h * h);
        grad[i] = (fp - fm) / (2.0 * h);
    }
    let mut k = 2 * d;
    for i in 0..d {
        for j in 0..i {
            let v = (values[k] - values[k + 1] - values[k + 2] + values[k + 3]) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
            k += 4;
        }
    }
    (hess, grad)
}

fn positive_definite(h: &DMatrix<f64>) -> bool {
    h.iter().all(|v| v.is_finite()) && h.clone().cholesky().is_some()
}

/// Mode, Hessian and integration grid of the hyperparameter posterior.
pub fn explore_hyperparameters<M: HyperModel>(model: &M, cfg: &GridConfig) -> Result<HyperGrid> {
    cfg.validate()?;
    let d = model.dim();
    let (mut mode, mut mode_lp, iterations, mut evaluations) = find_mode(model, cfg)?;
    if d == 0 {
        return Ok(HyperGrid {
            points: vec![mode.clone()],
            log_post: vec![mode_lp],
            area: vec![1.0],
            weights: vec![1.0],
            mode,
            mode_log_post: mode_lp,
            mode_hessian: DMatrix::zeros(0, 0),
            directions: DMatrix::zeros(0, 0),
            axis_scales: Vec::new(),
            iterations,
            evaluations,
            hessian_repaired: false,
        });
    }

    let f = |t: &[f64]| objective(model, t);
    let (mut hess, grad) = finite_differences(f, &mode, -mode_lp, cfg.hessian_step);
    evaluations += 2 * d * d;
    if positive_definite(&hess) {
        // one Newton step polishes the simplex optimum
        if let Some(step) = hess.clone().cholesky().map(|c| c.solve(&nalgebra::DVector::from_column_slice(&grad))) {
            let cand: Vec<f64> = mode.iter().zip(step.iter()).map(|(m, s)| m - s).collect();
            let v = f(&cand);
            evaluations += 1;
            if -v > mode_lp {
                mode = cand;
                mode_lp = -v;
                let (h2, _) = finite_differences(f, &mode, -mode_lp, cfg.hessian_step);
                evaluations += 2 * d * d;
                if positive_definite(&h2) {
                    hess = h2;
                }
            }
        }
    }
    let mut repaired = false;
    if !positive_definite(&hess) {
        let (h2, _) = finite_differences(f, &mode, -mode_lp, 10.0 * cfg.hessian_step);
        evaluations += 2 * d * d;
        hess = h2;
    }
    if !positive_definite(&hess) {
        log::warn!("hyperparameter Hessian is not positive definite at the mode; clamping eigenvalues");
        repaired = true;
        let h = hess.map(|v| if v.is_finite() { v } else { 0.0 });
        let eig = SymmetricEigen::new(h);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max).max(1.0);
        let floor = 1e-4 * top;
        let lam = eig.eigenvalues.map(|l| l.max(floor));
        hess = &eig.eigenvectors * DMatrix::from_diagonal(&lam) * eig.eigenvectors.transpose();
    }

    let eig = SymmetricEigen::new(hess.clone());
    // deterministic axis order and sign
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let mut directions = DMatrix::zeros(d, d);
    for (j, &k) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(k).clone_owned();
        let pivot = v.iter().enumerate().fold(0, |b, (i, x)| if x.abs() > v[b].abs() { i } else { b });
        if v[pivot] < 0.0 {
            v = -v;
        }
        directions.set_column(j, &(v / eig.eigenvalues[k].sqrt()));
    }

    let radius = (d as f64).sqrt();
    let step = cfg.span / cfg.extent as f64;
    let mut candidates: Vec<(usize, i64)> = Vec::new();
    for j in 0..d {
        for s in [1i64, -1] {
            for k in 1..=cfg.extent as i64 {
                candidates.push((j, s * k));
            }
        }
    }
    let at = |j: usize, k: i64| -> Vec<f64> {
        let t = k as f64 * step * radius;
        mode.iter()
            .enumerate()
            .map(|(i, m)| m + t * directions[(i, j)])
            .collect()
    };
    let lps: Vec<f64> = candidates
        .par_iter()
        .map(|(j, k)| -objective(model, &at(*j, *k)))
        .collect();
    evaluations += candidates.len();

    let tempered = |lp: f64| (lp - mode_lp) / d as f64;
    let mut points = vec![mode.clone()];
    let mut log_post = vec![mode_lp];
    let mut area = vec![0.0];
    let mut weights = vec![0.0];
    let mut axis_scales = Vec::with_capacity(d);
    for j in 0..d {
        // (k, tempered drop, lp) of kept nodes on each side
        let mut sides: [Vec<(i64, f64, f64)>; 2] = [Vec::new(), Vec::new()];
        for (side, s) in [1i64, -1].into_iter().enumerate() {
            // the walk continues past `extent` while the tail stays above
            // the pruning threshold
            for k in 1..=3 * cfg.extent as i64 {
                let lp = match candidates.iter().position(|c| *c == (j, s * k)) {
                    Some(idx) => lps[idx],
                    None => {
                        evaluations += 1;
                        -objective(model, &at(j, s * k))
                    }
                };
                let t = tempered(lp);
                if !t.is_finite() || -t > cfg.prune {
                    break;
                }
                sides[side].push((s * k, t, lp));
            }
        }
        let scale = |side: &Vec<(i64, f64, f64)>| -> f64 {
            let pick = side
                .iter()
                .filter(|(_, t, _)| *t < -1e-12)
                .min_by(|a, b| {
                    let da = (a.0.unsigned_abs() as f64 * step - 1.0).abs();
                    let db = (b.0.unsigned_abs() as f64 * step - 1.0).abs();
                    da.total_cmp(&db)
                });
            let t_scale = match pick {
                Some((k, t, _)) => k.unsigned_abs() as f64 * step / (2.0 * -t).sqrt(),
                None if side.is_empty() => step / (2.0 * cfg.prune).sqrt(),
                // flat along this direction within the explored span
                None => side.len() as f64 * step,
            };
            t_scale * radius
        };
        axis_scales.push(AxisScale {
            positive: scale(&sides[0]),
            negative: scale(&sides[1]),
        });

        let mut nodes: Vec<(usize, f64)> = vec![(0, 0.0)]; // (point index, tempered)
        for side in &sides {
            for (k, t, lp) in side {
                points.push(at(j, *k));
                log_post.push(*lp);
                area.push(step);
                weights.push(0.0);
                nodes.push((points.len() - 1, *t));
            }
        }
        let total: f64 = nodes.iter().map(|(_, t)| t.exp()).sum();
        for (idx, t) in &nodes {
            weights[*idx] += t.exp() / total / d as f64;
        }
        area[0] += step / d as f64;
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);

    Ok(HyperGrid {
        points,
        log_post,
        area,
        weights,
        mode,
        mode_log_post: mode_lp,
        mode_hessian: hess,
        directions,
        axis_scales,
        iterations,
        evaluations,
        hessian_repaired: repaired,
    })
}
