//! Synthetic data from the logistic-normal Dirichlet model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coda::{alr_inv_values, Composition};
use crate::data::Dataset;
use crate::distributions::dirichlet_covariance;
use crate::error::{LndmError, Result};
use crate::model_spec::{HyperValues, StructureType};
use crate::spatial::{MaternField, SpatialSharing};

/// How the Dirichlet-covariance noise is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoisePath {
    /// Correlated draws through the Cholesky factor of `Σ`.
    #[default]
    Direct,
    /// Independent noise plus a per-unit shared effect `u_n ~ N(0, γ)`.
    Augmented,
}

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub structure: StructureType,
    /// Number of categories `D`.
    pub parts: usize,
    /// Zero-based reference category.
    pub reference: usize,
    /// Fixed effects `[intercept, slopes…]`: one vector for structures that
    /// share them, otherwise one per alr coordinate.
    pub beta: Vec<Vec<f64>>,
    pub hyper: HyperValues,
    pub n: usize,
    /// Locations; drawn uniformly on the unit square when absent.
    pub coords: Option<Vec<[f64; 2]>>,
    pub noise: NoisePath,
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: Dataset,
    /// Simulated alr responses, one vector per row.
    pub alr: Vec<Vec<f64>>,
    /// Spatial field per block (empty without one).
    pub spatial: Vec<Vec<f64>>,
}

/// Covariates `x1..xM ~ U(−0.5, 0.5)`; categories are named `c1..cD`.
pub fn simulate_lndm(spec: &SimulationSpec, seed: u64) -> Result<SimulatedData> {
    let d = spec.parts;
    if d < 2 {
        return Err(LndmError::Dimension { expected: 2, got: d });
    }
    if spec.reference >= d {
        return Err(LndmError::Index {
            index: spec.reference,
            len: d,
        });
    }
    let k = d - 1;
    let n = spec.n;
    if n == 0 {
        return Err(LndmError::InsufficientData("cannot simulate zero rows".into()));
    }
    let beta: Vec<Vec<f64>> = match spec.beta.len() {
        1 => vec![spec.beta[0].clone(); k],
        m if m == k => {
            if spec.structure.shares_fixed_effects() && spec.beta.windows(2).any(|w| w[0] != w[1]) {
                return Err(LndmError::domain(format!(
                    "structure {} shares fixed effects but per-coordinate values differ",
                    spec.structure
                )));
            }
            spec.beta.clone()
        }
        m => return Err(LndmError::Dimension { expected: k, got: m }),
    };
    let p = beta[0].len();
    if p == 0 || beta.iter().any(|b| b.len() != p) {
        return Err(LndmError::domain("every fixed-effect vector needs an intercept and equal length"));
    }
    let h = &spec.hyper;
    if h.sigma2.len() != k {
        return Err(LndmError::Dimension {
            expected: k,
            got: h.sigma2.len(),
        });
    }
    let sigma = dirichlet_covariance(&h.sigma2, h.gamma)?;
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| LndmError::domain("Dirichlet covariance is not positive definite"))?;

    let chol_l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p - 1, |_, _| rng.gen::<f64>() - 0.5);
    let sharing = spec.structure.spatial();
    let coords = match (&spec.coords, sharing) {
        (Some(c), _) => {
            if c.len() != n {
                return Err(LndmError::Dimension {
                    expected: n,
                    got: c.len(),
                });
            }
            Some(c.clone())
        }
        (None, Some(_)) => Some((0..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]).collect()),
        (None, None) => None,
    };

    let mut spatial: Vec<Vec<f64>> = Vec::new();
    if let Some(s) = sharing {
        let sh = h
            .spatial
            .ok_or_else(|| LndmError::domain("spatial hyperparameters missing"))?;
        let field = MaternField::new(coords.as_ref().expect("set above"), &sh)?;
        let blocks = if s == SpatialSharing::Replicated { k } else { 1 };
        let l = field.cholesky().l();
        for _ in 0..blocks {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            spatial.push((&l * z).as_slice().to_vec());
        }
        if s == SpatialSharing::Proportional && h.proportional.len() + 1 != k {
            return Err(LndmError::Dimension {
                expected: k - 1,
                got: h.proportional.len(),
            });
        }
    }

    let mut alr = Vec::with_capacity(n);
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let mut z: Vec<f64> = (0..k)
            .map(|dd| {
                let b = &beta[dd];
                b[0] + (1..p).map(|j| b[j] * x[(i, j - 1)]).sum::<f64>()
            })
            .collect();
        match sharing {
            Some(SpatialSharing::Shared) => z.iter_mut().for_each(|v| *v += spatial[0][i]),
            Some(SpatialSharing::Proportional) => {
                for (dd, v) in z.iter_mut().enumerate() {
                    *v += h.proportional_coef(dd) * spatial[0][i];
                }
            }
            Some(SpatialSharing::Replicated) => {
                for (dd, v) in z.iter_mut().enumerate() {
                    *v += spatial[dd][i];
                }
            }
            None => {}
        }
        match spec.noise {
            NoisePath::Direct => {
                let e = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
                let e = &chol_l * e;
                z.iter_mut().zip(e.iter()).for_each(|(v, e)| *v += e);
            }
            NoisePath::Augmented => {
                let u = h.gamma.sqrt() * rng.sample::<f64, _>(StandardNormal);
                for (dd, v) in z.iter_mut().enumerate() {
                    *v += u + h.sigma2[dd].sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        comps.push(Composition::new(alr_inv_values(&z, spec.reference)).map_err(|_| {
            LndmError::domain(format!("simulated row {i} underflows the simplex; reduce the scale"))
        })?);
        alr.push(z);
    }
    let dataset = Dataset::new(
        (1..=d).map(|j| format!("c{j}")).collect(),
        comps,
        (1..p).map(|j| format!("x{j}")).collect(),
        x,
        coords,
    )?;
    Ok(SimulatedData {
        dataset,
        alr,
        spatial,
    })
}
