//! Subcommand drivers. Each reads a [`Config`], writes its outputs into the
//! configured directory and returns a summary for the caller.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use lndm::data::Dataset;
use lndm::distributions::mvn_logpdf;
use lndm::inference::Fit;
use lndm::io::{read_dataset, read_new_rows, write_dataset};
use lndm::model_selection::{metrics, CpoMode, MetricsReport};
use lndm::model_spec::{HyperValues, LndmModel, ModelSpec, StructureType};
use lndm::predict::{predict, FitResult, MixturePredictive};
use lndm::sim::{simulate_lndm, NoisePath, SimulationSpec};
use lndm::spatial::SpatialHyper;

use crate::config::{Config, CpoChoice, ModelConfig, Noise};
use crate::report::{self, FitReport, Metrics};
use crate::CliError;

fn out_dir(cfg: &Config) -> Result<&Path, CliError> {
    let dir = cfg.output.dir.as_path();
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::User(format!("cannot create output directory '{}': {e}", dir.display())))?;
    Ok(dir)
}

pub fn load_data(cfg: &Config) -> Result<Dataset, CliError> {
    let d = cfg.data()?;
    read_dataset(&d.path, &d.schema()).map_err(|e| CliError::from(e).context("reading data"))
}

pub fn model_spec(data: &Dataset, m: &ModelConfig, structure: StructureType) -> Result<ModelSpec, CliError> {
    let reference = match &m.reference {
        Some(name) => data
            .category_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::User(format!("reference category '{name}' is not a data category")))?,
        None => data.parts() - 1,
    };
    Ok(ModelSpec {
        structure,
        covariates: m.covariates.clone().unwrap_or_else(|| data.covariate_names.clone()),
        reference,
        priors: m.priors.clone(),
        constrain_shared: m.constrain_shared,
    })
}

fn cpo_mode(cfg: &Config, rows: usize) -> CpoMode {
    match cfg.metrics.cpo {
        CpoChoice::Exact => CpoMode::Exact,
        CpoChoice::Importance => CpoMode::Importance,
        CpoChoice::Auto if rows <= cfg.metrics.exact_max_rows => CpoMode::Exact,
        CpoChoice::Auto => CpoMode::Importance,
    }
}

fn fit_with_metrics(cfg: &Config, model: LndmModel) -> Result<(FitResult, MetricsReport), CliError> {
    let what = format!("fitting structure {}", model.spec().structure);
    let rows = model.n_units();
    let fit = Fit::new(model, &cfg.grid).map_err(|e| CliError::from(e).context(&what))?;
    let m = metrics(&fit, cfg.metrics.samples, cfg.seed, cpo_mode(cfg, rows), &cfg.grid)
        .map_err(|e| CliError::from(e).context("computing metrics"))?;
    Ok((fit, m))
}

/// Fits the configured model; writes `report.json`, `latent.csv`,
/// `densities.csv` and `cpo.csv`.
pub fn run_fit(cfg: &Config) -> Result<FitReport, CliError> {
    let data = load_data(cfg)?;
    let spec = model_spec(&data, cfg.model()?, cfg.model()?.structure)?;
    let model = LndmModel::new(data, spec).map_err(|e| CliError::from(e).context("building model"))?;
    let (fit, m) = fit_with_metrics(cfg, model)?;
    let rep = report::fit_report(&fit, &m, cfg.metrics.samples, cfg.seed)?;
    let dir = out_dir(cfg)?;
    report::write_json(&dir.join("report.json"), &rep)?;
    report::write_latent_csv(&dir.join("latent.csv"), &fit)?;
    report::write_density_csv(&dir.join("densities.csv"), &fit)?;
    report::write_cpo_csv(&dir.join("cpo.csv"), &m.cpo, fit.model().coordinate_names())?;
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectRow {
    pub structure: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectTable {
    /// Successful fits, sorted by DIC.
    pub rows: Vec<SelectRow>,
    pub failures: Vec<(String, String)>,
}

/// Fits every listed structure; writes `select.json` and `select.csv`.
pub fn run_select(cfg: &Config) -> Result<SelectTable, CliError> {
    let structures = &cfg
        .select
        .as_ref()
        .ok_or_else(|| CliError::User("config has no [select] section".into()))?
        .structures;
    if structures.len() < 2 {
        return Err(CliError::User("select needs at least two structures".into()));
    }
    let data = load_data(cfg)?;
    let mcfg = cfg.model()?;
    let results: Vec<(StructureType, Result<Metrics, CliError>)> = structures
        .par_iter()
        .map(|s| {
            let r = model_spec(&data, mcfg, *s).and_then(|spec| {
                let model = LndmModel::new(data.clone(), spec)?;
                let (_, m) = fit_with_metrics(cfg, model)?;
                Ok(report::metrics_of(&m))
            });
            (*s, r)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (s, r) in results {
        match r {
            Ok(metrics) => rows.push(SelectRow {
                structure: s.to_string(),
                metrics,
            }),
            Err(e) => {
                log::warn!("structure {s} failed: {e}");
                failures.push((s.to_string(), e.to_string()));
            }
        }
    }
    rows.sort_by(|a, b| a.metrics.dic.total_cmp(&b.metrics.dic));
    let table = SelectTable { rows, failures };
    let dir = out_dir(cfg)?;
    report::write_json(&dir.join("select.json"), &table)?;
    let mut w = csv::Writer::from_path(dir.join("select.csv"))?;
    w.write_record(["structure", "dic", "waic", "lcpo"])?;
    for r in &table.rows {
        w.write_record([
            r.structure.clone(),
            r.metrics.dic.to_string(),
            r.metrics.waic.to_string(),
            r.metrics.lcpo.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(table)
}

/// Fits the model and predicts the rows of `[predict].path`; writes
/// `predictions.csv`.
pub fn run_predict(cfg: &Config) -> Result<PathBuf, CliError> {
    let pcfg = cfg
        .predict
        .as_ref()
        .ok_or_else(|| CliError::User("config has no [predict] section".into()))?;
    let data = load_data(cfg)?;
    let spec = model_spec(&data, cfg.model()?, cfg.model()?.structure)?;
    let coords = cfg.data()?.coords.clone();
    let new = read_new_rows(&pcfg.path, &spec.covariates, coords.as_ref().filter(|_| spec.structure.spatial().is_some()))
        .map_err(|e| CliError::from(e).context("reading prediction rows"))?;
    let model = LndmModel::new(data, spec)?;
    let fit = Fit::new(model, &cfg.grid)?;
    let p = predict(&fit, &new, pcfg.draws, cfg.seed)?;
    let path = out_dir(cfg)?.join("predictions.csv");
    report::write_prediction_csv(&path, &p)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_rows: usize,
    /// Mean joint log predictive density of the held-out alr vectors.
    pub mean_log_predictive: f64,
    pub alr_rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub structure: String,
    pub folds: Vec<FoldResult>,
    pub mean_log_predictive: f64,
    pub alr_rmse: f64,
}

/// K-fold cross-validation of the configured model; writes `cv.json` and
/// a per-row `cv.csv`.
pub fn run_cv(cfg: &Config) -> Result<CvReport, CliError> {
    let k = cfg.cv.as_ref().map(|c| c.folds).unwrap_or(5);
    let data = load_data(cfg)?;
    let n = data.len();
    if k < 2 || k > n {
        return Err(CliError::User(format!("cannot split {n} rows into {k} folds")));
    }
    let spec = model_spec(&data, cfg.model()?, cfg.model()?.structure)?;
    let full = LndmModel::new(data, spec)?;
    let spec = full.resolved_spec();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut fold_of = vec![0; n];
    for (pos, row) in order.iter().enumerate() {
        fold_of[*row] = pos % k;
    }
    // (row, fold, log predictive, squared alr error)
    let per_row: Vec<Vec<(usize, f64, f64)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|r| fold_of[*r] != f).collect();
            let sub = LndmModel::new(full.data().subset(&train)?, spec.clone())?;
            let fit = Fit::new(sub, &cfg.grid)?;
            (0..n)
                .filter(|r| fold_of[*r] == f)
                .map(|r| {
                    let x: Vec<f64> = full.design().row(r).iter().copied().collect();
                    let at = full.data().coords.as_ref().map(|c| c[r]);
                    let mix = MixturePredictive::new(&fit, &x, at)?;
                    let z = full.alr_row(r);
                    let logs = mix
                        .components
                        .iter()
                        .zip(&mix.weights)
                        .map(|((m, c), w)| Ok(w.ln() + mvn_logpdf(&z, m.as_slice(), c)?))
                        .collect::<lndm::Result<Vec<f64>>>()?;
                    let lpd = lndm::special::log_sum_exp(logs);
                    let mean = mix.mean();
                    let se: f64 = z.iter().zip(mean.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    Ok((r, lpd, se))
                })
                .collect::<lndm::Result<Vec<_>>>()
        })
        .collect::<lndm::Result<_>>()?;
    let coords = full.coordinates() as f64;
    let folds: Vec<FoldResult> = per_row
        .iter()
        .enumerate()
        .map(|(f, rows)| FoldResult {
            fold: f + 1,
            test_rows: rows.len(),
            mean_log_predictive: rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64,
            alr_rmse: (rows.iter().map(|r| r.2).sum::<f64>() / (rows.len() as f64 * coords)).sqrt(),
        })
        .collect();
    let all: Vec<&(usize, f64, f64)> = per_row.iter().flatten().collect();
    let rep = CvReport {
        structure: full.spec().structure.to_string(),
        mean_log_predictive: all.iter().map(|r| r.1).sum::<f64>() / n as f64,
        alr_rmse: (all.iter().map(|r| r.2).sum::<f64>() / (n as f64 * coords)).sqrt(),
        folds,
    };
    let dir = out_dir(cfg)?;
    report::write_json(&dir.join("cv.json"), &rep)?;
    let mut sorted = all.clone();
    sorted.sort_by_key(|r| r.0);
    let mut w = csv::Writer::from_path(dir.join("cv.csv"))?;
    w.write_record(["row", "fold", "log_predictive", "squared_alr_error"])?;
    for (r, lpd, se) in sorted {
        w.write_record([(r + 1).to_string(), (fold_of[*r] + 1).to_string(), lpd.to_string(), se.to_string()])?;
    }
    w.flush()?;
    Ok(rep)
}

/// Simulates a dataset; writes it (with its `alr_*` columns) to
/// `[simulate].file` in the output directory.
pub fn run_simulate(cfg: &Config) -> Result<PathBuf, CliError> {
    let s = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::User("config has no [simulate] section".into()))?;
    let reference = match s.reference {
        Some(0) => return Err(CliError::User("simulate.reference is one-based".into())),
        Some(r) => r - 1,
        None => s.parts.saturating_sub(1),
    };
    let spatial = match (s.sigma_omega, s.phi) {
        (Some(sd), Some(phi)) => Some(SpatialHyper::new(sd, phi)?),
        (None, None) => None,
        _ => return Err(CliError::User("simulate needs both sigma_omega and phi, or neither".into())),
    };
    let spec = SimulationSpec {
        structure: s.structure,
        parts: s.parts,
        reference,
        beta: s.beta.clone(),
        hyper: HyperValues {
            sigma2: s.sigma2.clone(),
            gamma: s.gamma,
            spatial,
            proportional: s.proportional.clone(),
        },
        n: s.n,
        coords: None,
        noise: match s.noise {
            Noise::Direct => NoisePath::Direct,
            Noise::Augmented => NoisePath::Augmented,
        },
    };
    let sim = simulate_lndm(&spec, cfg.seed)?;
    let names: Vec<String> = (0..s.parts)
        .filter(|j| *j != reference)
        .map(|j| format!("c{}_c{}", j + 1, reference + 1))
        .collect();
    let path = out_dir(cfg)?.join(&s.file);
    write_dataset(&path, &sim.dataset, Some((&names, &sim.alr)))?;
    Ok(path)
}
