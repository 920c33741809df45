//! Posterior predictive distributions for new compositions.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::coda::alr_inv_values;
use crate::error::{LndmError, Result};
use crate::inference::{Fit, GridPointFit};
use crate::model_spec::LndmModel;
use crate::spatial::{matern_cross_cov, MaternField, SpatialSharing};

pub type FitResult = Fit<LndmModel>;

/// Gaussian predictive of the alr vector of one new unit at one grid
/// point: the fixed effects, kriged spatial effect, shared effect and noise.
pub fn point_predictive(
    model: &LndmModel,
    point: &GridPointFit,
    design_row: &[f64],
    at: Option<[f64; 2]>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let k = model.coordinates();
    let p = model.n_fixed_per_coordinate();
    if design_row.len() != p {
        return Err(LndmError::Dimension {
            expected: p,
            got: design_row.len(),
        });
    }
    let v = model.values(&point.theta)?;
    let sharing = model.spec().structure.spatial();
    let krig = match (sharing, v.spatial) {
        (Some(_), Some(h)) => {
            let at = at.ok_or_else(|| LndmError::Data("spatial prediction needs coordinates".into()))?;
            let coords = model.data().coords.as_ref().expect("spatial model has coordinates");
            let field = MaternField::new(coords, &h)?;
            let c = matern_cross_cov(coords, &[at], &h);
            let w = field.cholesky().solve(&c);
            let var = (h.sigma_omega * h.sigma_omega - c.dot(&w)).max(0.0);
            Some((w, var))
        }
        _ => None,
    };
    let coef = |d: usize| match sharing {
        Some(SpatialSharing::Proportional) => v.proportional_coef(d),
        _ => 1.0,
    };
    let gs: Vec<Vec<(usize, f64)>> = (0..k)
        .map(|d| {
            let mut g: Vec<(usize, f64)> = (0..p).map(|j| (model.fixed_column(d, j), design_row[j])).collect();
            if let Some((w, _)) = &krig {
                let c = coef(d);
                for (i, wi) in w.iter().enumerate() {
                    g.push((model.spatial_column(d, i).expect("spatial column"), c * wi));
                }
            }
            g
        })
        .collect();
    let mean = DVector::from_iterator(k, gs.iter().map(|g| point.posterior.mean_dot(g)));
    let mut cov = point.posterior.covariance_of(&gs);
    for d in 0..k {
        for e in 0..k {
            cov[(d, e)] += v.gamma;
            if let Some((_, var)) = &krig {
                let same_block = sharing != Some(SpatialSharing::Replicated) || d == e;
                if same_block {
                    cov[(d, e)] += coef(d) * coef(e) * var;
                }
            }
        }
        cov[(d, d)] += v.sigma2[d];
    }
    Ok((mean, cov))
}

/// Grid-weighted Gaussian mixture predictive for one new unit.
#[derive(Debug, Clone)]
pub struct MixturePredictive {
    pub weights: Vec<f64>,
    pub components: Vec<(DVector<f64>, DMatrix<f64>)>,
}

impl MixturePredictive {
    pub fn new(fit: &FitResult, design_row: &[f64], at: Option<[f64; 2]>) -> Result<Self> {
        let components = fit
            .points()
            .iter()
            .map(|pt| point_predictive(fit.model(), pt, design_row, at))
            .collect::<Result<_>>()?;
        Ok(Self {
            weights: fit.points().iter().map(|p| p.weight).collect(),
            components,
        })
    }

    pub fn mean(&self) -> DVector<f64> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, (m, _))| m * *w)
            .fold(DVector::zeros(self.components[0].0.len()), |a, b| a + b)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let k = m.len();
        let mut second = DMatrix::zeros(k, k);
        for (w, (mu, c)) in self.weights.iter().zip(&self.components) {
            second += (c + mu * mu.transpose()) * *w;
        }
        second - &m * m.transpose()
    }

    /// Draws of the alr vector.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let pick = WeightedIndex::new(&self.weights).map_err(|e| LndmError::domain(format!("grid weights: {e}")))?;
        let factors: Vec<DMatrix<f64>> = self
            .components
            .iter()
            .map(|(_, c)| {
                c.clone()
                    .cholesky()
                    .map(|ch| ch.l())
                    .ok_or_else(|| LndmError::Conditioning("predictive covariance is not positive definite".into()))
            })
            .collect::<Result<_>>()?;
        Ok((0..n)
            .map(|_| {
                let t = pick.sample(rng);
                let k = self.components[t].0.len();
                let e = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
                (&self.components[t].0 + &factors[t] * e).as_slice().to_vec()
            })
            .collect())
    }
}

/// New rows to predict: covariates on their raw scale, named, and optional
/// locations.
#[derive(Debug, Clone)]
pub struct NewData {
    pub covariate_names: Vec<String>,
    pub covariates: DMatrix<f64>,
    pub coords: Option<Vec<[f64; 2]>>,
}

impl NewData {
    pub fn len(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RowPrediction {
    pub alr_mean: Vec<f64>,
    pub alr_sd: Vec<f64>,
    pub simplex_mean: Vec<f64>,
    pub simplex_sd: Vec<f64>,
    pub simplex_q025: Vec<f64>,
    pub simplex_q975: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub coordinate_names: Vec<String>,
    pub category_names: Vec<String>,
    pub rows: Vec<RowPrediction>,
}

/// Design rows for `new`, standardised like the training covariates.
pub fn new_design(model: &LndmModel, new: &NewData) -> Result<DMatrix<f64>> {
    let data = model.data();
    let spec = model.spec();
    let mut design = DMatrix::from_element(new.len(), spec.covariates.len() + 1, 1.0);
    for (j, name) in spec.covariates.iter().enumerate() {
        let src = new
            .covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LndmError::Data(format!("new data lacks covariate '{name}'")))?;
        let stats = match &data.standardization {
            Some(s) => Some(s[data.covariate_index(name)?]),
            None => None,
        };
        for i in 0..new.len() {
            let raw = new.covariates[(i, src)];
            if !raw.is_finite() {
                return Err(LndmError::Data(format!("non-finite value of '{name}' in row {}", i + 1)));
            }
            design[(i, j + 1)] = match stats {
                Some(s) => (raw - s.mean) / s.sd,
                None => raw,
            };
        }
    }
    Ok(design)
}

/// Predictive summaries on the alr and simplex scales. Simplex summaries
/// come from `draws` samples of the predictive per row.
pub fn predict(fit: &FitResult, new: &NewData, draws: usize, seed: u64) -> Result<Prediction> {
    if draws < 2 {
        return Err(LndmError::InsufficientSamples {
            requested: draws,
            minimum: 2,
        });
    }
    let model = fit.model();
    if model.spec().structure.spatial().is_some() {
        match &new.coords {
            Some(c) if c.len() == new.len() => {}
            Some(c) => {
                return Err(LndmError::Dimension {
                    expected: new.len(),
                    got: c.len(),
                })
            }
            None => return Err(LndmError::Data("spatial prediction needs coordinates".into())),
        }
    }
    let design = new_design(model, new)?;
    let reference = model.spec().reference;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..new.len()).map(|_| rng.gen()).collect();
    let rows = (0..new.len())
        .into_par_iter()
        .map(|i| {
            let x: Vec<f64> = design.row(i).iter().copied().collect();
            let at = new.coords.as_ref().map(|c| c[i]);
            let mix = MixturePredictive::new(fit, &x, at)?;
            let mean = mix.mean();
            let cov = mix.covariance();
            let mut r = ChaCha8Rng::seed_from_u64(seeds[i]);
            let z = mix.sample(draws, &mut r)?;
            let simplex: Vec<Vec<f64>> = z.iter().map(|z| alr_inv_values(z, reference)).collect();
            let parts = model.data().parts();
            let mut s_mean = vec![0.0; parts];
            for s in &simplex {
                s_mean.iter_mut().zip(s).for_each(|(a, b)| *a += b);
            }
            s_mean.iter_mut().for_each(|a| *a /= draws as f64);
            let mut s_sd = vec![0.0; parts];
            let mut lo = Vec::with_capacity(parts);
            let mut hi = Vec::with_capacity(parts);
            for j in 0..parts {
                let mut col: Vec<f64> = simplex.iter().map(|s| s[j]).collect();
                s_sd[j] = (col.iter().map(|v| (v - s_mean[j]).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
                col.sort_by(f64::total_cmp);
                lo.push(crate::inference::sorted_quantile(&col, 0.025));
                hi.push(crate::inference::sorted_quantile(&col, 0.975));
            }
            Ok(RowPrediction {
                alr_mean: mean.as_slice().to_vec(),
                alr_sd: cov.diagonal().iter().map(|v| v.sqrt()).collect(),
                simplex_mean: s_mean,
                simplex_sd: s_sd,
                simplex_q025: lo,
                simplex_q975: hi,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Prediction {
        coordinate_names: model.coordinate_names().to_vec(),
        category_names: model.data().category_names.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::GridConfig;
    use crate::model_spec::{HyperValues, ModelSpec, StructureType};
    use crate::sim::{simulate_lndm, NoisePath, SimulationSpec};
    use crate::spatial::SpatialHyper;

    fn fitted(structure: StructureType, n: usize) -> FitResult {
        let sim = simulate_lndm(
            &SimulationSpec {
                structure,
                parts: 3,
                reference: 2,
                beta: vec![vec![-1.0, 1.0], vec![-1.0, 2.0]],
                hyper: HyperValues {
                    sigma2: vec![0.5, 0.4],
                    gamma: 0.1,
                    spatial: Some(SpatialHyper::new(0.7, 0.3).unwrap()),
                    proportional: vec![],
                },
                n,
                coords: None,
                noise: NoisePath::Direct,
            },
            5,
        )
        .unwrap();
        let model = LndmModel::new(sim.dataset, ModelSpec::new(structure, vec!["x1".into()], 2)).unwrap();
        Fit::new(model, &GridConfig::default()).unwrap()
    }

    #[test]
    fn simplex_means_sum_to_one() {
        let fit = fitted(StructureType::II, 60);
        let new = NewData {
            covariate_names: vec!["x1".into()],
            covariates: DMatrix::from_column_slice(3, 1, &[-0.4, 0.0, 0.4]),
            coords: None,
        };
        let p = predict(&fit, &new, 400, 9).unwrap();
        assert_eq!(p.rows.len(), 3);
        for r in &p.rows {
            assert!((r.simplex_mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..3 {
                assert!(r.simplex_q025[j] <= r.simplex_mean[j] && r.simplex_mean[j] <= r.simplex_q975[j]);
            }
        }
        // the second alr coordinate has the steeper slope
        assert!(p.rows[2].alr_mean[1] - p.rows[0].alr_mean[1] > p.rows[2].alr_mean[0] - p.rows[0].alr_mean[0]);
        let again = predict(&fit, &new, 400, 9).unwrap();
        assert_eq!(p.rows[1].simplex_mean, again.rows[1].simplex_mean);
    }

    #[test]
    fn mixture_moments_match_draws() {
        let fit = fitted(StructureType::II, 40);
        let mix = MixturePredictive::new(&fit, &[1.0, 0.2], None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = mix.sample(20000, &mut rng).unwrap();
        let m = mix.mean();
        let c = mix.covariance();
        for d in 0..2 {
            let avg = z.iter().map(|v| v[d]).sum::<f64>() / z.len() as f64;
            assert!((avg - m[d]).abs() < 4.0 * (c[(d, d)] / z.len() as f64).sqrt());
        }
        assert!(c[(0, 1)] > 0.0);
    }

    #[test]
    fn spatial_prediction_needs_coordinates() {
        let fit = fitted(StructureType::IV, 30);
        let new = NewData {
            covariate_names: vec!["x1".into()],
            covariates: DMatrix::from_element(1, 1, 0.0),
            coords: None,
        };
        assert!(predict(&fit, &new, 10, 1).is_err());
        let new = NewData { coords: Some(vec![[0.5, 0.5]]), ..new };
        let p = predict(&fit, &new, 10, 1).unwrap();
        assert_eq!(p.rows[0].alr_mean.len(), 2);
    }

    #[test]
    fn kriging_at_a_training_site_reproduces_its_field() {
        let fit = fitted(StructureType::IV, 30);
        let model = fit.model();
        let site = model.data().coords.as_ref().unwrap()[4];
        let pt = &fit.points()[0];
        let x = [1.0, model.design()[(4, 1)]];
        let (m, _) = point_predictive(model, pt, &x, Some(site)).unwrap();
        let mu = pt.posterior.mean();
        let expected = mu[model.fixed_column(0, 0)] + mu[model.fixed_column(0, 1)] * x[1] + mu[model.spatial_column(0, 4).unwrap()];
        assert!((m[0] - expected).abs() < 1e-6);
    }
}
