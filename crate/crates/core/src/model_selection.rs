//! DIC, WAIC and leave-one-composition-out CPO.
//!
//! The likelihood unit is one composition: all of its alr coordinates
//! jointly, with the per-unit shared effect integrated out so the common
//! covariance `γ` enters through `Σ = diag(σ²) + γ11ᵀ`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::DirichletCovariance;
use crate::error::{LndmError, Result};
use crate::inference::{log_posterior, Fit, GridConfig, GridPointFit, HyperModel};
use crate::model_spec::{HyperValues, LndmModel};
use crate::predict::point_predictive;
use crate::special::{ln_normal_pdf, log_sum_exp};

/// Fewest posterior draws accepted for DIC and WAIC.
pub const MIN_SAMPLES: usize = 100;

/// Per-unit log likelihoods for one posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitLogLik {
    /// `log p(y_n | x, θ)` for every unit.
    pub joint: Vec<f64>,
    /// `log p(y_nd | x, θ)` for every unit and coordinate.
    pub coordinate: Vec<Vec<f64>>,
}

/// Models whose likelihood factorises over observational units.
pub trait UnitLikelihood: HyperModel {
    fn n_units(&self) -> usize;
    fn unit_loglik(&self, theta: &[f64], latent: &[f64]) -> Result<UnitLogLik>;
    /// Internal θ from natural-scale values in the order of
    /// [`HyperModel::natural`].
    fn theta_from_natural(&self, values: &[f64]) -> Result<Vec<f64>>;
}

impl UnitLikelihood for LndmModel {
    fn n_units(&self) -> usize {
        LndmModel::n_units(self)
    }

    fn unit_loglik(&self, theta: &[f64], latent: &[f64]) -> Result<UnitLogLik> {
        let v = self.values(theta)?;
        collapsed_loglik(self, &v, latent)
    }

    fn theta_from_natural(&self, values: &[f64]) -> Result<Vec<f64>> {
        let layout = self.hyper_layout();
        if values.len() != layout.dim() {
            return Err(LndmError::Dimension {
                expected: layout.dim(),
                got: values.len(),
            });
        }
        let k = layout.coordinates;
        let spatial = match layout.spatial_sd() {
            Some(s) => Some(crate::spatial::SpatialHyper::new(values[s], values[s + 1])?),
            None => None,
        };
        let ps = layout.proportional_start();
        self.theta(&HyperValues {
            sigma2: values[..k].to_vec(),
            gamma: values[k],
            spatial,
            proportional: values[ps..ps + layout.proportional].to_vec(),
        })
    }
}

/// Per-composition log likelihood with the shared effect collapsed into
/// the Dirichlet covariance.
pub fn collapsed_loglik(model: &LndmModel, v: &HyperValues, latent: &[f64]) -> Result<UnitLogLik> {
    if latent.len() != model.latent_len() {
        return Err(LndmError::Dimension {
            expected: model.latent_len(),
            got: latent.len(),
        });
    }
    let n = model.n_units();
    let k = model.coordinates();
    let cov = DirichletCovariance::new(&v.sigma2, v.gamma)?;
    let eta = model.eta_without_shared(v, latent);
    let mut joint = Vec::with_capacity(n);
    let mut coordinate = Vec::with_capacity(n);
    for i in 0..n {
        let z = model.alr_row(i);
        let mean: Vec<f64> = (0..k).map(|d| eta[d * n + i]).collect();
        joint.push(cov.ln_pdf(&z, &mean));
        coordinate.push(
            (0..k)
                .map(|d| ln_normal_pdf(z[d], mean[d], v.sigma2[d] + v.gamma))
                .collect(),
        );
    }
    Ok(UnitLogLik { joint, coordinate })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criterion {
    pub value: f64,
    pub p_eff: f64,
}

/// Log likelihoods of every posterior draw (outer index: draw).
pub fn loglik_draws<M: UnitLikelihood>(fit: &Fit<M>, n: usize, seed: u64) -> Result<Vec<UnitLogLik>> {
    if n < MIN_SAMPLES {
        return Err(LndmError::InsufficientSamples {
            requested: n,
            minimum: MIN_SAMPLES,
        });
    }
    let draws = fit.posterior_samples(n, seed)?;
    draws
        .par_iter()
        .map(|s| fit.model().unit_loglik(&s.theta, &s.latent))
        .collect()
}

/// DIC with the plug-in at the posterior mean of the latent field and of
/// the natural-scale hyperparameters.
pub fn dic_from_draws<M: UnitLikelihood>(fit: &Fit<M>, draws: &[UnitLogLik]) -> Result<Criterion> {
    let s = draws.len() as f64;
    let mean_dev = draws
        .iter()
        .map(|d| -2.0 * d.joint.iter().sum::<f64>())
        .sum::<f64>()
        / s;
    let natural: Vec<f64> = fit.hyper_natural_mean().into_iter().map(|(_, v)| v).collect();
    let theta_bar = fit.model().theta_from_natural(&natural)?;
    let x_bar = fit.latent_mean();
    let plug = -2.0 * fit.model().unit_loglik(&theta_bar, &x_bar)?.joint.iter().sum::<f64>();
    Ok(Criterion {
        value: 2.0 * mean_dev - plug,
        p_eff: mean_dev - plug,
    })
}

pub fn waic_from_draws(draws: &[UnitLogLik]) -> Result<Criterion> {
    let s = draws.len();
    if s < 2 {
        return Err(LndmError::InsufficientSamples {
            requested: s,
            minimum: 2,
        });
    }
    let n = draws[0].joint.len();
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    for i in 0..n {
        let col: Vec<f64> = draws.iter().map(|d| d.joint[i]).collect();
        lppd += log_sum_exp(col.iter().copied()) - (s as f64).ln();
        let m = col.iter().sum::<f64>() / s as f64;
        p_waic += col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s as f64 - 1.0);
    }
    Ok(Criterion {
        value: -2.0 * (lppd - p_waic),
        p_eff: p_waic,
    })
}

pub fn dic<M: UnitLikelihood>(fit: &Fit<M>, n: usize, seed: u64) -> Result<Criterion> {
    dic_from_draws(fit, &loglik_draws(fit, n, seed)?)
}

pub fn waic<M: UnitLikelihood>(fit: &Fit<M>, n: usize, seed: u64) -> Result<Criterion> {
    waic_from_draws(&loglik_draws(fit, n, seed)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpoMode {
    /// One refit per left-out composition.
    Exact,
    /// Importance reweighting of draws from the full fit.
    Importance,
}

#[derive(Debug, Clone, Serialize)]
pub struct CpoResult {
    pub mode: CpoMode,
    /// `CPO_n^(d)`; `None` where the leave-one-out refit failed.
    pub cpo: Vec<Option<Vec<f64>>>,
    /// `−mean log CPO` over the available entries.
    pub lcpo: f64,
    pub failures: Vec<(usize, String)>,
    /// Units whose importance weights have a coefficient of variation
    /// above [`UNSTABLE_CV`].
    pub unstable: Vec<usize>,
}

pub const UNSTABLE_CV: f64 = 5.0;

fn lcpo(cpo: &[Option<Vec<f64>>]) -> f64 {
    let logs: Vec<f64> = cpo.iter().flatten().flatten().map(|c| c.ln()).collect();
    if logs.is_empty() {
        return f64::NAN;
    }
    -logs.iter().sum::<f64>() / logs.len() as f64
}

/// Grid weight with the predictive mean and variance of each coordinate.
pub type WeightedMoments = (f64, Vec<(f64, f64)>);

/// Univariate leave-one-out predictive moments `(mean, variance)` of every
/// alr coordinate of `row` of `full`, paired with the weight of each point
/// of a fit of `sub` that excludes the row.
pub fn loo_predictive_moments(
    sub: &LndmModel,
    points: &[GridPointFit],
    full: &LndmModel,
    row: usize,
) -> Result<Vec<WeightedMoments>> {
    let x: Vec<f64> = full.design().row(row).iter().copied().collect();
    let at = full.data().coords.as_ref().map(|c| c[row]);
    points
        .iter()
        .map(|pt| {
            let (m, c) = point_predictive(sub, pt, &x, at)?;
            Ok((pt.weight, (0..m.len()).map(|d| (m[d], c[(d, d)])).collect()))
        })
        .collect()
}

fn cpo_by_refit<F>(model: &LndmModel, refit: F) -> CpoResult
where
    F: Fn(&LndmModel) -> Result<Vec<GridPointFit>> + Sync,
{
    let n = model.n_units();
    let spec = model.resolved_spec();
    let results: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|row| {
            let sub = LndmModel::new(model.data().without(row)?, spec.clone())?;
            let points = refit(&sub)?;
            let moments = loo_predictive_moments(&sub, &points, model, row)?;
            let z = model.alr_row(row);
            Ok((0..z.len())
                .map(|d| {
                    moments
                        .iter()
                        .map(|(w, m)| w * ln_normal_pdf(z[d], m[d].0, m[d].1).exp())
                        .sum()
                })
                .collect())
        })
        .collect();
    let mut cpo = Vec::with_capacity(n);
    let mut failures = Vec::new();
    for (row, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => cpo.push(Some(c)),
            Err(e) => {
                log::warn!("leave-one-out refit without row {} failed: {e}", row + 1);
                failures.push((row, e.to_string()));
                cpo.push(None);
            }
        }
    }
    CpoResult {
        mode: CpoMode::Exact,
        lcpo: lcpo(&cpo),
        cpo,
        failures,
        unstable: Vec::new(),
    }
}

/// Exact leave-one-composition-out CPO: one refit per row on the other
/// `N − 1` compositions, evaluated under the univariate predictive of each
/// alr coordinate.
pub fn cpo_exact(model: &LndmModel, grid: &GridConfig) -> CpoResult {
    cpo_by_refit(model, |sub| Ok(Fit::new(sub.clone(), grid)?.points().to_vec()))
}

/// Exact CPO with the hyperparameters held at `theta` in every refit.
pub fn cpo_exact_at(model: &LndmModel, theta: &[f64]) -> CpoResult {
    cpo_by_refit(model, |sub| {
        let (log_post, posterior) = log_posterior(sub, theta)?;
        let variances = posterior.marginal_variances();
        Ok(vec![GridPointFit {
            theta: theta.to_vec(),
            log_post,
            weight: 1.0,
            posterior,
            variances,
        }])
    })
}

/// Importance-sampling CPO from draws of the full posterior:
/// `CPO_nd = Σ_s p(y_nd|·)/p(y_n|·) / Σ_s 1/p(y_n|·)`.
pub fn cpo_importance(draws: &[UnitLogLik]) -> Result<CpoResult> {
    if draws.is_empty() {
        return Err(LndmError::InsufficientSamples {
            requested: 0,
            minimum: 1,
        });
    }
    let n = draws[0].joint.len();
    let mut cpo = Vec::with_capacity(n);
    let mut unstable = Vec::new();
    for i in 0..n {
        let neg: Vec<f64> = draws.iter().map(|d| -d.joint[i]).collect();
        let den = log_sum_exp(neg.iter().copied());
        let k = draws[0].coordinate[i].len();
        cpo.push(Some(
            (0..k)
                .map(|dd| {
                    let num = log_sum_exp(draws.iter().map(|d| d.coordinate[i][dd] - d.joint[i]));
                    (num - den).exp()
                })
                .collect(),
        ));
        let max = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = neg.iter().map(|v| (v - max).exp()).collect();
        let m = w.iter().sum::<f64>() / w.len() as f64;
        let sd = (w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        if sd / m > UNSTABLE_CV {
            unstable.push(i);
        }
    }
    if !unstable.is_empty() {
        log::warn!("{} importance-sampled CPO values are unstable", unstable.len());
    }
    Ok(CpoResult {
        mode: CpoMode::Importance,
        lcpo: lcpo(&cpo),
        cpo,
        failures: Vec::new(),
        unstable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub dic: f64,
    pub p_eff_dic: f64,
    pub waic: f64,
    pub p_eff_waic: f64,
    pub cpo: CpoResult,
    pub lcpo: f64,
}

/// DIC and WAIC from one shared set of `samples` draws, plus CPO in the
/// requested mode.
pub fn metrics(fit: &Fit<LndmModel>, samples: usize, seed: u64, cpo_mode: CpoMode, grid: &GridConfig) -> Result<MetricsReport> {
    let draws = loglik_draws(fit, samples, seed)?;
    let d = dic_from_draws(fit, &draws)?;
    let w = waic_from_draws(&draws)?;
    let cpo = match cpo_mode {
        CpoMode::Exact => cpo_exact(fit.model(), grid),
        CpoMode::Importance => cpo_importance(&draws)?,
    };
    Ok(MetricsReport {
        dic: d.value,
        p_eff_dic: d.p_eff,
        waic: w.value,
        p_eff_waic: w.p_eff,
        lcpo: cpo.lcpo,
        cpo,
    })
}
