//! Matérn (ν = 1) spatial random effects on a dense covariance.
//!
//! The covariance is `C(r) = σ_ω² (κr) K₁(κr)` with `κ = c/φ`, where `c`
//! solves `c K₁(c) = 0.1`: the correlation at distance `φ` is exactly 0.1.

use nalgebra::{Cholesky, DMatrix, Dyn};
use std::sync::OnceLock;

use crate::error::{LndmError, Result};
use crate::special::bessel_k1;

/// Smoothness of the field. Not estimated.
pub const MATERN_NU: f64 = 1.0;

/// Correlation at distance φ.
pub const RANGE_CORRELATION: f64 = 0.1;

/// `c` with `c K₁(c) = 0.1`; `κ = c / φ`.
pub fn range_factor() -> f64 {
    static FACTOR: OnceLock<f64> = OnceLock::new();
    *FACTOR.get_or_init(|| {
        // x K1(x) decreases monotonically from 1 at 0
        let (mut lo, mut hi) = (1.0_f64, 10.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * bessel_k1(mid) > RANGE_CORRELATION {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialHyper {
    pub sigma_omega: f64,
    pub phi: f64,
}

impl SpatialHyper {
    pub fn new(sigma_omega: f64, phi: f64) -> Result<Self> {
        if !(sigma_omega > 0.0 && sigma_omega.is_finite()) {
            return Err(LndmError::domain(format!(
                "spatial standard deviation must be positive, got {sigma_omega}"
            )));
        }
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(LndmError::domain(format!(
                "spatial range must be positive, got {phi}"
            )));
        }
        Ok(Self { sigma_omega, phi })
    }

    pub fn kappa(&self) -> f64 {
        range_factor() / self.phi
    }

    /// Correlation at distance `r`.
    pub fn correlation(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 1.0;
        }
        let x = self.kappa() * r;
        if x > 700.0 {
            0.0
        } else {
            x * bessel_k1(x)
        }
    }
}

/// How the spatial field enters the `D - 1` linear predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialSharing {
    /// One field, coefficient 1 in every coordinate.
    Shared,
    /// One field, coefficient `α^(d)` in coordinate d, with `α^(1) = 1`.
    Proportional,
    /// One independent field per coordinate with common hyperparameters.
    Replicated,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Moves exactly coincident points apart by multiples of 1e-8 in x so the
/// covariance stays non-singular. Returns the number of points moved.
pub fn jitter_duplicates(coords: &mut [[f64; 2]]) -> usize {
    let mut moved = 0;
    for i in 1..coords.len() {
        let mut bump = 0;
        while coords[..i].iter().any(|c| *c == coords[i]) {
            bump += 1;
            coords[i][0] += 1e-8 * bump as f64;
        }
        if bump > 0 {
            moved += 1;
        }
    }
    if moved > 0 {
        log::warn!("{moved} duplicated spatial locations jittered by 1e-8");
    }
    moved
}

pub fn matern_cov(coords: &[[f64; 2]], h: &SpatialHyper) -> DMatrix<f64> {
    let mut pts = coords.to_vec();
    jitter_duplicates(&mut pts);
    let n = pts.len();
    let var = h.sigma_omega * h.sigma_omega;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = var;
        for j in 0..i {
            let v = var * h.correlation(distance(pts[i], pts[j]));
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Covariance between field values at `a` (rows) and `b` (columns).
pub fn matern_cross_cov(a: &[[f64; 2]], b: &[[f64; 2]], h: &SpatialHyper) -> DMatrix<f64> {
    let var = h.sigma_omega * h.sigma_omega;
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        var * h.correlation(distance(a[i], b[j]))
    })
}

/// Prior of one Matérn block: its factorised covariance and dense precision.
#[derive(Debug, Clone)]
pub struct MaternField {
    chol: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    log_det_cov: f64,
}

impl MaternField {
    /// Factorises the covariance, adding `1e-8 σ_ω²` to the diagonal once
    /// if the plain factorisation fails.
    pub fn new(coords: &[[f64; 2]], h: &SpatialHyper) -> Result<Self> {
        let cov = matern_cov(coords, h);
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let jitter = 1e-8 * h.sigma_omega * h.sigma_omega;
                let n = cov.nrows();
                (cov + DMatrix::identity(n, n) * jitter)
                    .cholesky()
                    .ok_or_else(|| {
                        LndmError::Conditioning(format!(
                            "Matérn covariance not positive definite (σ_ω = {}, φ = {})",
                            h.sigma_omega, h.phi
                        ))
                    })?
            }
        };
        let log_det_cov = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let precision = chol.inverse();
        Ok(Self {
            chol,
            precision,
            log_det_cov,
        })
    }

    pub fn len(&self) -> usize {
        self.precision.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_det_cov(&self) -> f64 {
        self.log_det_cov
    }

    /// ωᵀ C⁻¹ ω
    pub fn quad(&self, omega: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(omega);
        let w = self
            .chol
            .l()
            .solve_lower_triangular(&v)
            .expect("non-singular factor");
        w.norm_squared()
    }

    /// Gaussian log density of one block.
    pub fn ln_density(&self, omega: &[f64]) -> f64 {
        -0.5 * (self.len() as f64 * (2.0 * std::f64::consts::PI).ln()
            + self.log_det_cov
            + self.quad(omega))
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }
}

/// Prior precision of the spatial part of the latent field: one Matérn
/// precision repeated over `blocks` independent blocks.
#[derive(Debug, Clone)]
pub struct SpatialPrior {
    pub sharing: SpatialSharing,
    pub field: MaternField,
    pub blocks: usize,
}

impl SpatialPrior {
    /// Latent length taken by the spatial blocks.
    pub fn latent_len(&self) -> usize {
        self.blocks * self.field.len()
    }

    /// Dense block-diagonal precision over all spatial blocks.
    pub fn block_precision(&self) -> DMatrix<f64> {
        let n = self.field.len();
        let mut q = DMatrix::zeros(n * self.blocks, n * self.blocks);
        for b in 0..self.blocks {
            q.view_mut((b * n, b * n), (n, n))
                .copy_from(self.field.precision());
        }
        q
    }

    /// Sum of independent block log densities.
    pub fn ln_density(&self, omega: &[f64]) -> f64 {
        omega
            .chunks(self.field.len())
            .map(|blk| self.field.ln_density(blk))
            .sum()
    }
}

/// Builds the spatial prior for `coordinates` parts (`D - 1`) under the
/// given sharing pattern.
pub fn spatial_prior_precision(
    sharing: SpatialSharing,
    coordinates: usize,
    coords: &[[f64; 2]],
    h: &SpatialHyper,
) -> Result<SpatialPrior> {
    let field = MaternField::new(coords, h)?;
    let blocks = match sharing {
        SpatialSharing::Shared | SpatialSharing::Proportional => 1,
        SpatialSharing::Replicated => coordinates,
    };
    Ok(SpatialPrior {
        sharing,
        field,
        blocks,
    })
}

/// Log density of the PC prior on the range,
/// `λ φ⁻² exp(−λ/φ)` with `λ = −φ₀ ln α₀` so that `P(φ < φ₀) = α₀`.
pub fn pc_range_logprior(phi: f64, phi0: f64, alpha0: f64) -> Result<f64> {
    if !(phi > 0.0) || !(phi0 > 0.0) || !(alpha0 > 0.0 && alpha0 < 1.0) {
        return Err(LndmError::domain(format!(
            "PC range prior needs φ > 0, φ₀ > 0, 0 < α₀ < 1 (got {phi}, {phi0}, {alpha0})"
        )));
    }
    let lambda = -phi0 * alpha0.ln();
    Ok(lambda.ln() - 2.0 * phi.ln() - lambda / phi)
}
