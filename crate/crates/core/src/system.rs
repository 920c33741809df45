//! The Gaussian linear model the inference engine works on:
//! `y = A x + ε`, `ε ~ N(0, R)` with diagonal `R`, and a block-structured
//! Gaussian prior on the latent vector `x`.
//!
//! The latent vector is laid out as `[fixed | shared | spatial]`. The
//! shared block carries a diagonal prior precision and each observation row
//! touches at most one of its entries, which lets the engine eliminate it
//! in closed form.

use std::ops::Range;

use crate::error::{LndmError, Result};
use crate::spatial::SpatialPrior;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentLayout {
    pub fixed: Range<usize>,
    pub shared: Range<usize>,
    pub spatial: Range<usize>,
    pub labels: Vec<String>,
}

impl LatentLayout {
    pub fn len(&self) -> usize {
        self.spatial.end.max(self.shared.end).max(self.fixed.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone)]
pub struct LatentPrior {
    pub fixed_mean: Vec<f64>,
    pub fixed_precision: Vec<f64>,
    /// `1/γ`; unused when the shared block is empty.
    pub shared_precision: f64,
    pub spatial: Option<SpatialPrior>,
}

#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub y: Vec<f64>,
    /// Diagonal of `R⁻¹`.
    pub noise_precision: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    pub layout: LatentLayout,
    pub prior: LatentPrior,
    /// Condition the shared block on summing to zero.
    pub constrain_shared: bool,
}

impl StackedSystem {
    /// `rows[i]` lists the non-zero `(column, coefficient)` pairs of row i
    /// of the link matrix.
    pub fn new(
        y: Vec<f64>,
        noise_precision: Vec<f64>,
        rows: Vec<Vec<(usize, f64)>>,
        layout: LatentLayout,
        prior: LatentPrior,
        constrain_shared: bool,
    ) -> Result<Self> {
        let n = y.len();
        if noise_precision.len() != n || rows.len() != n {
            return Err(LndmError::Dimension {
                expected: n,
                got: rows.len().min(noise_precision.len()),
            });
        }
        if noise_precision.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(LndmError::domain("noise precisions must be positive"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LndmError::domain("responses must be finite"));
        }
        let k = layout.len();
        if layout.fixed.start != 0
            || layout.shared.start != layout.fixed.end
            || layout.spatial.start != layout.shared.end
        {
            return Err(LndmError::domain(
                "latent blocks must be contiguous in the order fixed, shared, spatial",
            ));
        }
        if layout.labels.len() != k {
            return Err(LndmError::Dimension {
                expected: k,
                got: layout.labels.len(),
            });
        }
        let nf = layout.fixed.len();
        if prior.fixed_mean.len() != nf || prior.fixed_precision.len() != nf {
            return Err(LndmError::Dimension {
                expected: nf,
                got: prior.fixed_precision.len(),
            });
        }
        if prior.fixed_precision.iter().any(|p| !(*p > 0.0)) {
            return Err(LndmError::domain("fixed-effect prior precisions must be positive"));
        }
        if !layout.shared.is_empty() && !(prior.shared_precision > 0.0 && prior.shared_precision.is_finite()) {
            return Err(LndmError::domain("shared-effect precision must be positive"));
        }
        let spatial_len = prior.spatial.as_ref().map_or(0, |s| s.latent_len());
        if spatial_len != layout.spatial.len() {
            return Err(LndmError::Dimension {
                expected: layout.spatial.len(),
                got: spatial_len,
            });
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, row) in rows.into_iter().enumerate() {
            let mut shared_hits = 0;
            for (c, v) in row {
                if c >= k {
                    return Err(LndmError::Index { index: c, len: k });
                }
                if layout.shared.contains(&c) {
                    shared_hits += 1;
                }
                cols.push(c);
                vals.push(v);
            }
            if shared_hits > 1 {
                return Err(LndmError::Identifiability(format!(
                    "row {i} touches {shared_hits} shared-effect entries; at most one is supported"
                )));
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            y,
            noise_precision,
            row_ptr,
            cols,
            vals,
            layout,
            prior,
            constrain_shared,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn latent_len(&self) -> usize {
        self.layout.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    /// `A x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_obs())
            .map(|i| self.row(i).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `A x` with the shared-effect columns left out.
    pub fn apply_excluding_shared(&self, x: &[f64]) -> Vec<f64> {
        let shared = &self.layout.shared;
        (0..self.n_obs())
            .map(|i| {
                self.row(i)
                    .filter(|(c, _)| !shared.contains(c))
                    .map(|(c, v)| v * x[c])
                    .sum()
            })
            .collect()
    }

    /// Dense link matrix; for tests and small oracles.
    pub fn dense_link(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n_obs(), self.latent_len());
        for i in 0..self.n_obs() {
            for (c, v) in self.row(i) {
                a[(i, c)] += v;
            }
        }
        a
    }

    /// Dense prior precision `B`; for tests and small oracles.
    pub fn dense_prior_precision(&self) -> nalgebra::DMatrix<f64> {
        let k = self.latent_len();
        let mut b = nalgebra::DMatrix::zeros(k, k);
        for (j, p) in self.layout.fixed.clone().zip(&self.prior.fixed_precision) {
            b[(j, j)] = *p;
        }
        for j in self.layout.shared.clone() {
            b[(j, j)] = self.prior.shared_precision;
        }
        if let Some(sp) = &self.prior.spatial {
            let s = self.layout.spatial.start;
            let m = sp.latent_len();
            b.view_mut((s, s), (m, m)).copy_from(&sp.block_precision());
        }
        b
    }

    /// Prior mean of the full latent vector.
    pub fn prior_mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.latent_len()];
        for (j, v) in self.layout.fixed.clone().zip(&self.prior.fixed_mean) {
            m[j] = *v;
        }
        m
    }
}
