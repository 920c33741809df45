//! Report documents and CSV sidecars.

use std::path::Path;

use serde::Serialize;

use lndm::inference::{GaussianMixture, HyperSummary, LatentSummary};
use lndm::model_selection::{CpoMode, CpoResult, MetricsReport};
use lndm::predict::{FitResult, Prediction};

use crate::CliError;

/// The three model-comparison numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub dic: f64,
    pub waic: f64,
    pub lcpo: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricDetails {
    pub p_eff_dic: f64,
    pub p_eff_waic: f64,
    pub samples: usize,
    pub cpo_mode: CpoMode,
    /// One-based rows whose leave-one-out refit failed.
    pub cpo_failures: Vec<usize>,
    /// One-based rows with unstable importance weights.
    pub cpo_unstable: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridDiagnostics {
    pub points: usize,
    pub mode: Vec<(String, f64)>,
    pub mode_log_posterior: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub hessian_repaired: bool,
}

/// `exp(β)`: the factor applied to the ratio of a category to the
/// reference per unit change of a covariate.
#[derive(Debug, Clone, Serialize)]
pub struct RatioSummary {
    pub coordinate: String,
    pub covariate: String,
    pub mean: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub interpretation: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub structure: String,
    pub rows: usize,
    pub categories: Vec<String>,
    pub reference: String,
    pub coordinates: Vec<String>,
    pub covariates: Vec<String>,
    pub standardized: bool,
    pub seed: u64,
    pub fixed_effects: Vec<LatentSummary>,
    pub hyperparameters: Vec<HyperSummary>,
    pub ratios: Vec<RatioSummary>,
    pub grid: GridDiagnostics,
    pub metrics: Metrics,
    pub metric_details: MetricDetails,
}

pub fn metrics_of(m: &MetricsReport) -> Metrics {
    Metrics {
        dic: m.dic,
        waic: m.waic,
        lcpo: m.lcpo,
    }
}

fn details(m: &MetricsReport, samples: usize) -> MetricDetails {
    MetricDetails {
        p_eff_dic: m.p_eff_dic,
        p_eff_waic: m.p_eff_waic,
        samples,
        cpo_mode: m.cpo.mode,
        cpo_failures: m.cpo.failures.iter().map(|(r, _)| r + 1).collect(),
        cpo_unstable: m.cpo.unstable.iter().map(|r| r + 1).collect(),
    }
}

fn grid_diagnostics(fit: &FitResult) -> GridDiagnostics {
    use lndm::inference::HyperModel;
    let g = fit.grid();
    GridDiagnostics {
        points: g.points.len(),
        mode: fit.model().names().into_iter().zip(g.mode.iter().copied()).collect(),
        mode_log_posterior: g.mode_log_post,
        iterations: g.iterations,
        evaluations: g.evaluations,
        hessian_repaired: g.hessian_repaired,
    }
}

/// `(index, coordinate label, covariate)` of every slope in the latent
/// vector.
fn slopes(fit: &FitResult) -> Vec<(usize, String, String)> {
    let model = fit.model();
    let spec = model.spec();
    let shared = spec.structure.shares_fixed_effects();
    let mut out = Vec::new();
    for (d, coord) in model.coordinate_names().iter().enumerate() {
        if shared && d > 0 {
            break;
        }
        let label = if shared { "all".to_string() } else { coord.clone() };
        for (j, cov) in spec.covariates.iter().enumerate() {
            out.push((model.fixed_column(d, j + 1), label.clone(), cov.clone()));
        }
    }
    out
}

fn ratio(mix: &GaussianMixture, coordinate: String, covariate: String, standardized: bool) -> RatioSummary {
    let mean = mix
        .weights
        .iter()
        .zip(mix.means.iter().zip(&mix.variances))
        .map(|(w, (m, v))| w * (m + 0.5 * v).exp())
        .sum();
    let (q025, q50, q975) = (
        mix.quantile(0.025).exp(),
        mix.quantile(0.5).exp(),
        mix.quantile(0.975).exp(),
    );
    let unit = if standardized { "one-sd" } else { "one-unit" };
    let target = if coordinate == "all" {
        "every category relative to the reference".to_string()
    } else {
        format!("the ratio {coordinate}")
    };
    RatioSummary {
        interpretation: format!(
            "a {unit} increase in {covariate} multiplies {target} by {q50:.3} (95% interval {q025:.3} to {q975:.3})"
        ),
        coordinate,
        covariate,
        mean,
        q025,
        q50,
        q975,
    }
}

pub fn fit_report(fit: &FitResult, metrics: &MetricsReport, samples: usize, seed: u64) -> Result<FitReport, CliError> {
    let model = fit.model();
    let data = model.data();
    let fixed_effects = (0..model.fixed_len())
        .map(|i| fit.latent_summary(i))
        .collect::<lndm::Result<Vec<_>>>()?;
    let standardized = data.standardization.is_some();
    let ratios = slopes(fit)
        .into_iter()
        .map(|(i, coord, cov)| Ok(ratio(&fit.latent_marginal(i)?, coord, cov, standardized)))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(FitReport {
        structure: model.spec().structure.to_string(),
        rows: model.n_units(),
        categories: data.category_names.clone(),
        reference: data.category_names[model.spec().reference].clone(),
        coordinates: model.coordinate_names().to_vec(),
        covariates: model.spec().covariates.clone(),
        standardized,
        seed,
        fixed_effects,
        hyperparameters: fit.hyper_summaries(),
        ratios,
        grid: grid_diagnostics(fit),
        metrics: metrics_of(metrics),
        metric_details: details(metrics, samples),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::User(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::User(format!("cannot write '{}': {e}", path.display())))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Every latent marginal: `name,mean,sd,q025,q50,q975`.
pub fn write_latent_csv(path: &Path, fit: &FitResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["name", "mean", "sd", "q025", "q50", "q975"])?;
    for i in 0..fit.latent_len() {
        let s = fit.latent_summary(i)?;
        w.write_record([s.name, fmt(s.mean), fmt(s.sd), fmt(s.q025), fmt(s.q50), fmt(s.q975)])?;
    }
    w.flush()?;
    Ok(())
}

const DENSITY_POINTS: usize = 101;

/// Gaussian kernel density of sorted draws on an even grid between the
/// 0.1% and 99.9% quantiles.
fn kde(sorted: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    if sorted.len() < 2 {
        return Vec::new();
    }
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    let h = 0.9 * sd.min(iqr / 1.34).max(1e-12) * n.powf(-0.2);
    let (lo, hi) = (quantile(sorted, 0.001), quantile(sorted, 0.999));
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..DENSITY_POINTS)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (DENSITY_POINTS - 1) as f64;
            let dens = sorted.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm;
            (x, dens)
        })
        .collect()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Plot-ready marginal densities of the fixed effects and hyperparameters:
/// `parameter,x,density`.
pub fn write_density_csv(path: &Path, fit: &FitResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "x", "density"])?;
    for i in 0..fit.model().fixed_len() {
        let mix = fit.latent_marginal(i)?;
        let (lo, hi) = (mix.quantile(0.001), mix.quantile(0.999));
        let name = &fit.labels()[i];
        for k in 0..DENSITY_POINTS {
            let x = lo + (hi - lo) * k as f64 / (DENSITY_POINTS - 1) as f64;
            w.write_record([name.clone(), fmt(x), fmt(mix.pdf(x))])?;
        }
    }
    for (name, _, draws) in fit.hyper_draws() {
        for (x, d) in kde(&draws) {
            w.write_record([name.clone(), fmt(x), fmt(d)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `row,<coordinate>...` with one CPO per alr coordinate; empty cells for
/// failed refits.
pub fn write_cpo_csv(path: &Path, cpo: &CpoResult, coordinates: &[String]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["row".to_string()];
    header.extend(coordinates.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in cpo.cpo.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        match row {
            Some(c) => rec.extend(c.iter().map(|v| fmt(*v))),
            None => rec.extend(coordinates.iter().map(|_| String::new())),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_prediction_csv(path: &Path, p: &Prediction) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["row".to_string()];
    for stat in ["mean", "sd", "q025", "q975"] {
        header.extend(p.category_names.iter().map(|c| format!("{stat}_{c}")));
    }
    for stat in ["alr_mean", "alr_sd"] {
        header.extend(p.coordinate_names.iter().map(|c| format!("{stat}_{c}")));
    }
    w.write_record(&header)?;
    for (i, r) in p.rows.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        for block in [&r.simplex_mean, &r.simplex_sd, &r.simplex_q025, &r.simplex_q975, &r.alr_mean, &r.alr_sd] {
            rec.extend(block.iter().map(|v| fmt(*v)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kde_integrates_to_about_one() {
        let draws: Vec<f64> = (1..2000).map(|i| logit(i as f64 / 2000.0)).collect();
        let d = kde(&draws);
        let step = d[1].0 - d[0].0;
        let area: f64 = d.iter().map(|(_, y)| y * step).sum();
        assert!((area - 1.0).abs() < 0.02, "{area}");
    }

    // evenly spaced logistic quantiles: a smooth unimodal sample
    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn ratio_of_point_mass() {
        let mix = GaussianMixture {
            weights: vec![1.0],
            means: vec![0.5],
            variances: vec![1e-12],
        };
        let r = ratio(&mix, "a/c".into(), "x".into(), true);
        assert!((r.q50 - 0.5f64.exp()).abs() < 1e-5);
        assert!(r.interpretation.contains("one-sd increase in x multiplies the ratio a/c"));
    }
}
