//! Dirichlet and logistic-normal densities, and the Kullback–Leibler bridge
//! that maps a Dirichlet onto the logistic-normal with "Dirichlet
//! covariance": diagonal `σ_d² + γ`, off-diagonal `γ`.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

use crate::coda::{alr_inv_values, AlrCoords, Composition};
use crate::error::{LndmError, Result};
use crate::special::{digamma, ln_gamma, trigamma};

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
    alpha0: f64,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(LndmError::Dimension {
                expected: 2,
                got: alpha.len(),
            });
        }
        if alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(LndmError::domain("Dirichlet shapes must be positive"));
        }
        let alpha0 = alpha.iter().sum();
        Ok(Self { alpha, alpha0 })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Sum of the shapes, read as a precision.
    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    fn ln_beta(&self) -> f64 {
        self.alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>() - ln_gamma(self.alpha0)
    }
}

pub fn dirichlet_logpdf(y: &Composition, p: &DirichletParams) -> Result<f64> {
    if y.parts() != p.alpha.len() {
        return Err(LndmError::Dimension {
            expected: p.alpha.len(),
            got: y.parts(),
        });
    }
    let kernel: f64 = y
        .values()
        .iter()
        .zip(&p.alpha)
        .map(|(y, a)| (a - 1.0) * y.ln())
        .sum();
    Ok(kernel - p.ln_beta())
}

#[derive(Debug, Clone)]
pub struct DirichletMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn dirichlet_moments(p: &DirichletParams) -> DirichletMoments {
    let a0 = p.alpha0;
    let denom = a0 * a0 * (a0 + 1.0);
    let d = p.alpha.len();
    let covariance = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            p.alpha[i] * (a0 - p.alpha[i]) / denom
        } else {
            -p.alpha[i] * p.alpha[j] / denom
        }
    });
    DirichletMoments {
        mean: p.alpha.iter().map(|a| a / a0).collect(),
        variance: covariance.diagonal().iter().copied().collect(),
        covariance,
    }
}

/// Logistic-normal parameters with Dirichlet covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LndParams {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub gamma: f64,
}

impl LndParams {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>, gamma: f64) -> Result<Self> {
        if mu.len() != sigma2.len() {
            return Err(LndmError::Dimension {
                expected: mu.len(),
                got: sigma2.len(),
            });
        }
        DirichletCovariance::new(&sigma2, gamma)?;
        Ok(Self { mu, sigma2, gamma })
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        dirichlet_covariance_matrix(&self.sigma2, self.gamma)
    }
}

/// Closed forms for `Σ = diag(σ²) + γ 11ᵀ` via Sherman–Morrison: log
/// determinant and quadratic forms in `O(D)`.
#[derive(Debug, Clone)]
pub struct DirichletCovariance {
    inv_sigma2: Vec<f64>,
    gamma: f64,
    /// 1 + γ Σ 1/σ_d²
    denom: f64,
    log_det: f64,
}

impl DirichletCovariance {
    pub fn new(sigma2: &[f64], gamma: f64) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(LndmError::Dimension {
                expected: 1,
                got: 0,
            });
        }
        if sigma2.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(LndmError::domain("σ² entries must be positive"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(LndmError::domain(format!(
                "common covariance γ must be non-negative, got {gamma}"
            )));
        }
        let inv_sigma2: Vec<f64> = sigma2.iter().map(|s| 1.0 / s).collect();
        let denom = 1.0 + gamma * inv_sigma2.iter().sum::<f64>();
        let log_det = sigma2.iter().map(|s| s.ln()).sum::<f64>() + denom.ln();
        Ok(Self {
            inv_sigma2,
            gamma,
            denom,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        self.inv_sigma2.len()
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// rᵀ Σ⁻¹ r
    pub fn quad(&self, r: &[f64]) -> f64 {
        let mut diag = 0.0;
        let mut cross = 0.0;
        for (ri, w) in r.iter().zip(&self.inv_sigma2) {
            diag += ri * ri * w;
            cross += ri * w;
        }
        diag - self.gamma * cross * cross / self.denom
    }

    /// log N(x; mean, Σ)
    pub fn ln_pdf(&self, x: &[f64], mean: &[f64]) -> f64 {
        let r: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
        -0.5 * (self.dim() as f64 * (2.0 * PI).ln() + self.log_det + self.quad(&r))
    }
}

/// Σ with diagonal `σ_d² + γ` and off-diagonal `γ`.
pub fn dirichlet_covariance(sigma2: &[f64], gamma: f64) -> Result<DMatrix<f64>> {
    DirichletCovariance::new(sigma2, gamma)?;
    Ok(dirichlet_covariance_matrix(sigma2, gamma))
}

fn dirichlet_covariance_matrix(sigma2: &[f64], gamma: f64) -> DMatrix<f64> {
    let k = sigma2.len();
    DMatrix::from_fn(k, k, |i, j| if i == j { sigma2[i] + gamma } else { gamma })
}

/// The logistic-normal closest in KL divergence to a Dirichlet, with the
/// last category as reference: `μ_d = ψ(α_d) − ψ(α_D)`, `σ_d² = ψ'(α_d)`,
/// `γ = ψ'(α_D)`.
pub fn match_ln_to_dirichlet(p: &DirichletParams) -> LndParams {
    let (last, rest) = p.alpha.split_last().expect("at least two shapes");
    let psi_ref = digamma(*last);
    LndParams {
        mu: rest.iter().map(|a| digamma(*a) - psi_ref).collect(),
        sigma2: rest.iter().map(|a| trigamma(*a)).collect(),
        gamma: trigamma(*last),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Density of the log-ratio coordinates on R^(D-1).
    Alr,
    /// Density of the composition itself; includes the alr Jacobian
    /// `−Σ_d log y_d` so it integrates to one over the simplex.
    Simplex,
}

pub fn lnd_logpdf(z: &AlrCoords, p: &LndParams, scale: Scale) -> Result<f64> {
    if z.values().len() != p.mu.len() {
        return Err(LndmError::Dimension {
            expected: p.mu.len(),
            got: z.values().len(),
        });
    }
    let cov = DirichletCovariance::new(&p.sigma2, p.gamma)?;
    let alr_density = cov.ln_pdf(z.values(), &p.mu);
    Ok(match scale {
        Scale::Alr => alr_density,
        Scale::Simplex => {
            let y = alr_inv_values(z.values(), z.reference());
            alr_density - y.iter().map(|v| v.ln()).sum::<f64>()
        }
    })
}

/// General multivariate normal log density through a Cholesky factor.
pub fn mvn_logpdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    let k = x.len();
    if mean.len() != k || cov.nrows() != k || cov.ncols() != k {
        return Err(LndmError::Dimension {
            expected: k,
            got: mean.len(),
        });
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| LndmError::Conditioning("covariance is not positive definite".into()))?;
    let r = DVector::from_iterator(k, x.iter().zip(mean).map(|(a, b)| a - b));
    let w = chol.l().solve_lower_triangular(&r).expect("non-singular factor");
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (k as f64 * (2.0 * PI).ln() + log_det + w.norm_squared()))
}
