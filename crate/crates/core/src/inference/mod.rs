//! Exact Gaussian-conditional inference with grid integration over the
//! hyperparameters.

mod fit;
mod gaussian;
mod grid;
mod optimize;

pub(crate) use fit::sorted_quantile;
pub use fit::{Fit, GaussianMixture, GridPointFit, HyperSummary, LatentSummary, PosteriorSample};
pub use gaussian::{conditional_posterior, GaussianPosterior};
pub use grid::{explore_hyperparameters, AxisScale, GridConfig, HyperGrid};
pub use optimize::{nelder_mead, Minimum, NelderMeadConfig};

use crate::error::Result;
use crate::system::StackedSystem;

/// A latent Gaussian model indexed by an unconstrained hyperparameter
/// vector θ.
pub trait HyperModel: Sync {
    fn dim(&self) -> usize;
    fn names(&self) -> Vec<String>;
    /// Starting point of the mode search.
    fn initial(&self) -> Vec<f64>;
    /// Log prior density of θ on the internal scale.
    fn log_prior(&self, theta: &[f64]) -> f64;
    fn system(&self, theta: &[f64]) -> Result<StackedSystem>;
    /// Named hyperparameters on their natural (constrained) scale.
    fn natural(&self, theta: &[f64]) -> Vec<(String, f64)>;
}

/// Unnormalised `log p(θ | y)` together with the conditional at θ.
pub fn log_posterior<M: HyperModel + ?Sized>(
    model: &M,
    theta: &[f64],
) -> Result<(f64, GaussianPosterior)> {
    let sys = model.system(theta)?;
    let post = conditional_posterior(&sys)?;
    Ok((post.log_evidence() + model.log_prior(theta), post))
}

/// Freezes the hyperparameters of `inner` at `theta`, leaving a model with
/// no free hyperparameters.
pub struct Fixed<'a, M: HyperModel> {
    pub inner: &'a M,
    pub theta: Vec<f64>,
}

impl<M: HyperModel> HyperModel for Fixed<'_, M> {
    fn dim(&self) -> usize {
        0
    }
    fn names(&self) -> Vec<String> {
        Vec::new()
    }
    fn initial(&self) -> Vec<f64> {
        Vec::new()
    }
    fn log_prior(&self, _theta: &[f64]) -> f64 {
        0.0
    }
    fn system(&self, _theta: &[f64]) -> Result<StackedSystem> {
        self.inner.system(&self.theta)
    }
    fn natural(&self, _theta: &[f64]) -> Vec<(String, f64)> {
        self.inner.natural(&self.theta)
    }
}
