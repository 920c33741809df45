use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::gaussian::GaussianPosterior;
use super::grid::{explore_hyperparameters, GridConfig, HyperGrid};
use super::{log_posterior, HyperModel};
use crate::error::{LndmError, Result};
use crate::special::{ln_normal_pdf, normal_cdf};

/// Draws used for the hyperparameter marginal summaries.
const HYPER_DRAWS: usize = 20_000;
const HYPER_SEED: u64 = 0x5eed_1d3a;

/// Finite mixture of univariate Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(w, (mu, v))| w * (v + (mu - m).powi(2)))
            .sum()
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components()
            .map(|(w, m, v)| if v > 0.0 { w * ln_normal_pdf(x, m, v).exp() } else { 0.0 })
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components()
            .map(|(w, m, v)| {
                if v > 0.0 {
                    w * normal_cdf((x - m) / v.sqrt())
                } else if x >= m {
                    w
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let spread = self.variances.iter().copied().fold(0.0, f64::max).sqrt().max(1e-300);
        let mut lo = self.means.iter().copied().fold(f64::INFINITY, f64::min) - 12.0 * spread;
        let mut hi = self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 12.0 * spread;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((w, m), v)| (*w, *m, *v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// Value at the posterior mode of θ.
    pub mode: f64,
}

/// Conditional posterior at one grid point.
#[derive(Debug, Clone)]
pub struct GridPointFit {
    pub theta: Vec<f64>,
    pub log_post: f64,
    pub weight: f64,
    pub posterior: GaussianPosterior,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PosteriorSample {
    /// Grid point the hyperparameters were drawn from.
    pub point: usize,
    pub theta: Vec<f64>,
    pub latent: Vec<f64>,
}

/// A fitted model: integration grid plus the Gaussian conditional at every
/// grid point.
#[derive(Debug, Clone)]
pub struct Fit<M: HyperModel> {
    model: M,
    grid: HyperGrid,
    points: Vec<GridPointFit>,
    labels: Vec<String>,
}

impl<M: HyperModel> Fit<M> {
    pub fn new(model: M, cfg: &GridConfig) -> Result<Self> {
        let grid = explore_hyperparameters(&model, cfg)?;
        let points: Vec<GridPointFit> = grid
            .points
            .par_iter()
            .zip(grid.weights.par_iter())
            .map(|(theta, w)| {
                let (log_post, posterior) = log_posterior(&model, theta)?;
                let variances = posterior.marginal_variances();
                Ok(GridPointFit {
                    theta: theta.clone(),
                    log_post,
                    weight: *w,
                    posterior,
                    variances,
                })
            })
            .collect::<Result<_>>()?;
        let labels = model.system(&grid.mode)?.layout.labels;
        Ok(Self {
            model,
            grid,
            points,
            labels,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn grid(&self) -> &HyperGrid {
        &self.grid
    }

    pub fn points(&self) -> &[GridPointFit] {
        &self.points
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn latent_len(&self) -> usize {
        self.labels.len()
    }

    pub fn latent_marginal(&self, index: usize) -> Result<GaussianMixture> {
        if index >= self.latent_len() {
            return Err(LndmError::Index {
                index,
                len: self.latent_len(),
            });
        }
        Ok(GaussianMixture {
            weights: self.points.iter().map(|p| p.weight).collect(),
            means: self.points.iter().map(|p| p.posterior.mean()[index]).collect(),
            variances: self.points.iter().map(|p| p.variances[index]).collect(),
        })
    }

    /// `Σ_t w_t μ_t`
    pub fn latent_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.latent_len()];
        for p in &self.points {
            for (mi, v) in m.iter_mut().zip(p.posterior.mean()) {
                *mi += p.weight * v;
            }
        }
        m
    }

    pub fn latent_summary(&self, index: usize) -> Result<LatentSummary> {
        let mix = self.latent_marginal(index)?;
        Ok(LatentSummary {
            name: self.labels[index].clone(),
            mean: mix.mean(),
            sd: mix.sd(),
            q025: mix.quantile(0.025),
            q50: mix.quantile(0.5),
            q975: mix.quantile(0.975),
        })
    }

    /// Grid-weighted posterior mean of the natural-scale hyperparameters.
    pub fn hyper_natural_mean(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.model.natural(&self.grid.mode);
        out.iter_mut().for_each(|(_, v)| *v = 0.0);
        for p in &self.points {
            for (o, (_, v)) in out.iter_mut().zip(self.model.natural(&p.theta)) {
                o.1 += p.weight * v;
            }
        }
        out
    }

    /// Sorted draws of each natural-scale hyperparameter from a
    /// split-normal approximation along each grid axis, with its value at
    /// the mode.
    pub fn hyper_draws(&self) -> Vec<(String, f64, Vec<f64>)> {
        let d = self.model.dim();
        let at_mode = self.model.natural(&self.grid.mode);
        if d == 0 {
            return at_mode.into_iter().map(|(name, v)| (name, v, vec![v])).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(HYPER_SEED);
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(HYPER_DRAWS); at_mode.len()];
        for _ in 0..HYPER_DRAWS {
            let mut theta = self.grid.mode.clone();
            for (j, s) in self.grid.axis_scales.iter().enumerate() {
                let z: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                let neg = rng.gen::<f64>() < s.negative / (s.negative + s.positive);
                let z = if neg { -z * s.negative } else { z * s.positive };
                for (i, t) in theta.iter_mut().enumerate() {
                    *t += z * self.grid.directions[(i, j)];
                }
            }
            for (c, (_, v)) in columns.iter_mut().zip(self.model.natural(&theta)) {
                c.push(v);
            }
        }
        at_mode
            .into_iter()
            .zip(columns)
            .map(|((name, mode), mut c)| {
                c.sort_by(f64::total_cmp);
                (name, mode, c)
            })
            .collect()
    }

    /// Marginal summaries of the natural-scale hyperparameters.
    pub fn hyper_summaries(&self) -> Vec<HyperSummary> {
        self.hyper_draws()
            .into_iter()
            .map(|(name, mode, c)| {
                let n = c.len() as f64;
                let mean = c.iter().sum::<f64>() / n;
                let var = if c.len() > 1 {
                    c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                HyperSummary {
                    name,
                    mean,
                    sd: var.sqrt(),
                    q025: sorted_quantile(&c, 0.025),
                    q50: sorted_quantile(&c, 0.5),
                    q975: sorted_quantile(&c, 0.975),
                    mode,
                }
            })
            .collect()
    }

    /// Joint draws of (θ, x): a grid point by weight, then the latent field
    /// from its Gaussian conditional. Reproducible for a given seed whatever
    /// the thread count.
    pub fn posterior_samples(&self, n: usize, seed: u64) -> Result<Vec<PosteriorSample>> {
        if n == 0 {
            return Err(LndmError::InsufficientSamples {
                requested: 0,
                minimum: 1,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = WeightedIndex::new(self.points.iter().map(|p| p.weight))
            .map_err(|e| LndmError::domain(format!("grid weights: {e}")))?;
        let plan: Vec<(usize, u64)> = (0..n).map(|_| (pick.sample(&mut rng), rng.gen())).collect();
        Ok(plan
            .into_par_iter()
            .map(|(t, s)| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let p = &self.points[t];
                PosteriorSample {
                    point: t,
                    theta: p.theta.clone(),
                    latent: p.posterior.sample(&mut r),
                }
            })
            .collect())
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{LatentLayout, LatentPrior, StackedSystem};

    #[test]
    fn mixture_arithmetic() {
        let m = GaussianMixture {
            weights: vec![0.3, 0.7],
            means: vec![-1.0, 2.0],
            variances: vec![0.5, 1.5],
        };
        assert!((m.mean() - 1.1).abs() < 1e-15);
        let var = 0.3 * (0.5 + 2.1f64.powi(2)) + 0.7 * (1.5 + 0.9f64.powi(2));
        assert!((m.variance() - var).abs() < 1e-14);
        let q = m.quantile(0.3);
        assert!((m.cdf(q) - 0.3).abs() < 1e-10);
        let single = GaussianMixture {
            weights: vec![1.0],
            means: vec![0.0],
            variances: vec![1.0],
        };
        assert!((single.quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        let h = 1e-3;
        let total: f64 = (0..20_000).map(|i| m.pdf(-10.0 + (i as f64 + 0.5) * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-8);
    }

    struct Mean {
        y: Vec<f64>,
    }

    impl HyperModel for Mean {
        fn dim(&self) -> usize {
            1
        }
        fn names(&self) -> Vec<String> {
            vec!["log tau".into()]
        }
        fn initial(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn log_prior(&self, t: &[f64]) -> f64 {
            -t[0] * t[0] / 8.0
        }
        fn system(&self, t: &[f64]) -> Result<StackedSystem> {
            let n = self.y.len();
            StackedSystem::new(
                self.y.clone(),
                vec![t[0].exp(); n],
                (0..n).map(|_| vec![(0, 1.0)]).collect(),
                LatentLayout { fixed: 0..1, shared: 1..1, spatial: 1..1, labels: vec!["mu".into()] },
                LatentPrior { fixed_mean: vec![0.0], fixed_precision: vec![0.01], shared_precision: 1.0, spatial: None },
                false,
            )
        }
        fn natural(&self, t: &[f64]) -> Vec<(String, f64)> {
            vec![("tau".into(), t[0].exp())]
        }
    }

    #[test]
    fn samples_are_reproducible_and_consistent() {
        let fit = Fit::new(Mean { y: vec![0.5, 1.5, 1.0, 0.2, 1.9, 0.8] }, &GridConfig::default()).unwrap();
        let a = fit.posterior_samples(5000, 42).unwrap();
        let b = fit.posterior_samples(5000, 42).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.latent == y.latent && x.point == y.point));
        let mix = fit.latent_marginal(0).unwrap();
        let m: f64 = a.iter().map(|s| s.latent[0]).sum::<f64>() / 5000.0;
        assert!((m - mix.mean()).abs() < 3.0 * mix.sd() / 5000f64.sqrt());
        // grid-point frequencies match the weights
        for (t, p) in fit.points().iter().enumerate() {
            let f = a.iter().filter(|s| s.point == t).count() as f64 / 5000.0;
            let se = (p.weight * (1.0 - p.weight) / 5000.0).sqrt();
            assert!((f - p.weight).abs() <= 3.0 * se + 1e-12, "{t}: {f} vs {}", p.weight);
        }
        assert!(fit.latent_marginal(1).is_err());
        assert!(fit.posterior_samples(0, 1).is_err());
        let hs = fit.hyper_summaries();
        assert_eq!(hs[0].name, "tau");
        assert!(hs[0].q025 < hs[0].q50 && hs[0].q50 < hs[0].q975);
    }
}
