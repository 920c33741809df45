use nalgebra::DMatrix;

use crate::coda::Composition;
use crate::error::{LndmError, Result};

/// Mean and standard deviation used to standardise one covariate column.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

/// Compositions with covariates and optional planar coordinates, one row
/// per observational unit.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub category_names: Vec<String>,
    pub compositions: Vec<Composition>,
    pub covariate_names: Vec<String>,
    /// N × M, already standardised when `standardization` is set.
    pub covariates: DMatrix<f64>,
    pub standardization: Option<Vec<Standardization>>,
    pub coords: Option<Vec<[f64; 2]>>,
}

impl Dataset {
    pub fn new(
        category_names: Vec<String>,
        compositions: Vec<Composition>,
        covariate_names: Vec<String>,
        covariates: DMatrix<f64>,
        coords: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let n = compositions.len();
        if n == 0 {
            return Err(LndmError::InsufficientData("dataset has no rows".into()));
        }
        let parts = category_names.len();
        if let Some(c) = compositions.iter().find(|c| c.parts() != parts) {
            return Err(LndmError::Dimension {
                expected: parts,
                got: c.parts(),
            });
        }
        if covariates.nrows() != n || covariates.ncols() != covariate_names.len() {
            return Err(LndmError::Data(format!(
                "covariate matrix is {}x{}, expected {}x{}",
                covariates.nrows(),
                covariates.ncols(),
                n,
                covariate_names.len()
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(LndmError::Data("covariates must be finite".into()));
        }
        if let Some(xy) = &coords {
            if xy.len() != n {
                return Err(LndmError::Dimension {
                    expected: n,
                    got: xy.len(),
                });
            }
            if xy.iter().flatten().any(|v| !v.is_finite()) {
                return Err(LndmError::Data("coordinates must be finite".into()));
            }
        }
        Ok(Self {
            category_names,
            compositions,
            covariate_names,
            covariates,
            standardization: None,
            coords,
        })
    }

    pub fn len(&self) -> usize {
        self.compositions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compositions.is_empty()
    }

    pub fn parts(&self) -> usize {
        self.category_names.len()
    }

    /// Centres and scales every covariate column in place, keeping the
    /// statistics for later use on new rows.
    pub fn standardize(&mut self) -> Result<()> {
        if self.standardization.is_some() {
            return Ok(());
        }
        let n = self.len() as f64;
        let mut stats = Vec::with_capacity(self.covariates.ncols());
        for (j, name) in self.covariate_names.iter().enumerate() {
            let mut col = self.covariates.column_mut(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = var.sqrt();
            if !(sd > 1e-12 * mean.abs().max(1.0)) {
                return Err(LndmError::Data(format!("zero variance covariate '{name}'")));
            }
            col.apply(|v| *v = (*v - mean) / sd);
            stats.push(Standardization { mean, sd });
        }
        self.standardization = Some(stats);
        Ok(())
    }

    /// Applies the training standardisation (if any) to raw covariate rows
    /// given in the dataset's column order.
    pub fn prepare_new_covariates(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.ncols() != self.covariate_names.len() {
            return Err(LndmError::Dimension {
                expected: self.covariate_names.len(),
                got: raw.ncols(),
            });
        }
        let mut out = raw.clone();
        if let Some(stats) = &self.standardization {
            for (j, s) in stats.iter().enumerate() {
                out.column_mut(j).apply(|v| *v = (*v - s.mean) / s.sd);
            }
        }
        Ok(out)
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LndmError::Data(format!("unknown covariate '{name}'")))
    }

    /// Rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| **r >= self.len()) {
            return Err(LndmError::Index {
                index: *bad,
                len: self.len(),
            });
        }
        let covariates = DMatrix::from_fn(rows.len(), self.covariates.ncols(), |i, j| {
            self.covariates[(rows[i], j)]
        });
        Ok(Self {
            category_names: self.category_names.clone(),
            compositions: rows.iter().map(|r| self.compositions[*r].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
            covariates,
            standardization: self.standardization.clone(),
            coords: self
                .coords
                .as_ref()
                .map(|xy| rows.iter().map(|r| xy[*r]).collect()),
        })
    }

    /// All rows except `row`.
    pub fn without(&self, row: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|r| *r != row).collect();
        self.subset(&keep)
    }

    /// Length of the diagonal of the coordinate bounding box.
    pub fn bbox_diagonal(&self) -> Option<f64> {
        let xy = self.coords.as_ref()?;
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in xy {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some(((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt())
    }
}
