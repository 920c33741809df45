//! Model declaration for the logistic-normal Dirichlet model and assembly
//! of its stacked Gaussian system.
//!
//! The Dirichlet covariance `Σ = diag(σ²) + γ11ᵀ` of each composition's
//! alr vector is realised with a per-unit shared effect `u_n ~ N(0, γ)`
//! that enters every alr coordinate of unit `n` with coefficient one, on
//! top of independent coordinate noise `N(0, σ_d²)`.
//!
//! Rows of the stacked system are coordinate-major: row `d·N + n` holds
//! alr coordinate `d` of unit `n`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::coda::{alr, Composition};
use crate::data::Dataset;
use crate::error::{LndmError, Result};
use crate::inference::HyperModel;
use crate::spatial::{pc_range_logprior, spatial_prior_precision, SpatialHyper, SpatialSharing};
use crate::system::{LatentLayout, LatentPrior, StackedSystem};

/// Fixed-effect sharing × spatial-effect combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StructureType {
    I,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
}

impl StructureType {
    pub const ALL: [StructureType; 8] = [
        StructureType::I,
        StructureType::II,
        StructureType::III,
        StructureType::IV,
        StructureType::V,
        StructureType::VI,
        StructureType::VII,
        StructureType::VIII,
    ];

    /// Odd types use one set of fixed effects for every alr coordinate.
    pub fn shares_fixed_effects(self) -> bool {
        matches!(
            self,
            StructureType::I | StructureType::III | StructureType::V | StructureType::VII
        )
    }

    pub fn spatial(self) -> Option<SpatialSharing> {
        match self {
            StructureType::I | StructureType::II => None,
            StructureType::III | StructureType::IV => Some(SpatialSharing::Shared),
            StructureType::V | StructureType::VI => Some(SpatialSharing::Proportional),
            StructureType::VII | StructureType::VIII => Some(SpatialSharing::Replicated),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StructureType::I => "I",
            StructureType::II => "II",
            StructureType::III => "III",
            StructureType::IV => "IV",
            StructureType::V => "V",
            StructureType::VI => "VI",
            StructureType::VII => "VII",
            StructureType::VIII => "VIII",
        }
    }
}

impl fmt::Display for StructureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StructureType {
    type Err = LndmError;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("TYPE").map(str::trim).unwrap_or(&t);
        StructureType::ALL
            .into_iter()
            .find(|st| st.as_str() == t)
            .ok_or_else(|| LndmError::Data(format!("unknown structure type '{s}'")))
    }
}

impl TryFrom<String> for StructureType {
    type Error = LndmError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StructureType> for String {
    fn from(s: StructureType) -> String {
        s.as_str().to_string()
    }
}

/// Penalised-complexity prior on a standard deviation: `P(σ > u) = alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcPrior {
    pub u: f64,
    pub alpha: f64,
}

impl Default for PcPrior {
    fn default() -> Self {
        Self { u: 1.0, alpha: 0.01 }
    }
}

/// PC prior on the spatial range: `P(φ < phi0) = alpha0`. `phi0` defaults
/// to 10% of the coordinate bounding-box diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangePrior {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi0: Option<f64>,
    pub alpha0: f64,
}

impl Default for RangePrior {
    fn default() -> Self {
        Self {
            phi0: None,
            alpha0: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub beta_mean: f64,
    pub beta_variance: f64,
    /// Prior on each `σ_d`.
    pub sigma: PcPrior,
    /// Prior on `√γ`.
    pub gamma: PcPrior,
    /// Prior on `σ_ω`.
    pub spatial_sd: PcPrior,
    pub range: RangePrior,
    pub proportional_mean: f64,
    pub proportional_variance: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            beta_mean: 0.0,
            beta_variance: 1000.0,
            sigma: PcPrior::default(),
            gamma: PcPrior::default(),
            spatial_sd: PcPrior::default(),
            range: RangePrior::default(),
            proportional_mean: 1.0,
            proportional_variance: 10.0,
        }
    }
}

impl PriorSpec {
    fn validate(&self) -> Result<()> {
        let pcs = [("sigma", self.sigma), ("gamma", self.gamma), ("spatial_sd", self.spatial_sd)];
        for (name, pc) in pcs {
            if !(pc.u > 0.0) || !(pc.alpha > 0.0 && pc.alpha < 1.0) {
                return Err(LndmError::domain(format!(
                    "PC prior '{name}' needs u > 0 and 0 < alpha < 1"
                )));
            }
        }
        if !(self.beta_variance > 0.0) || !(self.proportional_variance > 0.0) {
            return Err(LndmError::domain("prior variances must be positive"));
        }
        if !(self.range.alpha0 > 0.0 && self.range.alpha0 < 1.0) {
            return Err(LndmError::domain("range prior alpha0 must lie in (0, 1)"));
        }
        if let Some(p) = self.range.phi0 {
            if !(p > 0.0) {
                return Err(LndmError::domain("range prior phi0 must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub structure: StructureType,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Zero-based reference category.
    pub reference: usize,
    #[serde(default)]
    pub priors: PriorSpec,
    /// Condition the shared effect on summing to zero.
    #[serde(default)]
    pub constrain_shared: bool,
}

impl ModelSpec {
    pub fn new(structure: StructureType, covariates: Vec<String>, reference: usize) -> Self {
        Self {
            structure,
            covariates,
            reference,
            priors: PriorSpec::default(),
            constrain_shared: false,
        }
    }
}

/// Log density of the PC prior for a standard deviation, an exponential
/// with rate `λ = −ln(alpha)/u`.
pub fn pc_prec_logprior(sigma: f64, u: f64, alpha: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(LndmError::domain(format!(
            "PC prior needs a positive standard deviation, got {sigma}"
        )));
    }
    if !(u > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(LndmError::domain("PC prior needs u > 0 and 0 < alpha < 1"));
    }
    let lambda = -alpha.ln() / u;
    Ok(lambda.ln() - lambda * sigma)
}

/// Hyperparameters on their natural scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperValues {
    pub sigma2: Vec<f64>,
    pub gamma: f64,
    pub spatial: Option<SpatialHyper>,
    /// `α^(2), …, α^(D−1)`; `α^(1) = 1` is implied.
    pub proportional: Vec<f64>,
}

impl HyperValues {
    /// Scaling of the spatial field in alr coordinate `d` (zero-based).
    pub fn proportional_coef(&self, d: usize) -> f64 {
        if d == 0 {
            1.0
        } else {
            self.proportional.get(d - 1).copied().unwrap_or(1.0)
        }
    }
}

/// Positions of each hyperparameter in the internal vector θ.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperLayout {
    pub coordinates: usize,
    pub spatial: bool,
    pub proportional: usize,
}

impl HyperLayout {
    pub fn dim(&self) -> usize {
        self.coordinates + 1 + if self.spatial { 2 } else { 0 } + self.proportional
    }

    pub fn gamma(&self) -> usize {
        self.coordinates
    }

    pub fn spatial_sd(&self) -> Option<usize> {
        self.spatial.then_some(self.coordinates + 1)
    }

    pub fn range(&self) -> Option<usize> {
        self.spatial.then_some(self.coordinates + 2)
    }

    pub fn proportional_start(&self) -> usize {
        self.coordinates + 1 + if self.spatial { 2 } else { 0 }
    }
}

/// Stacks alr coordinates coordinate-major: entry `d·N + n` is coordinate
/// `d` of row `n`.
pub fn stack_response(rows: &[Composition], reference: usize) -> Result<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let k = rows[0].parts() - 1;
    let mut out = vec![0.0; n * k];
    for (i, c) in rows.iter().enumerate() {
        if c.parts() != k + 1 {
            return Err(LndmError::Dimension {
                expected: k + 1,
                got: c.parts(),
            });
        }
        let z = alr(c, reference)?;
        for (d, v) in z.values().iter().enumerate() {
            out[d * n + i] = *v;
        }
    }
    Ok(out)
}

/// Inverse of [`stack_response`] on the alr scale: one vector per row.
pub fn unstack_response(stacked: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || !stacked.len().is_multiple_of(n) {
        return Err(LndmError::Dimension {
            expected: n,
            got: stacked.len(),
        });
    }
    let k = stacked.len() / n;
    Ok((0..n)
        .map(|i| (0..k).map(|d| stacked[d * n + i]).collect())
        .collect())
}

/// A dataset bound to a model specification: everything needed to build
/// the stacked system at any hyperparameter value.
#[derive(Debug, Clone)]
pub struct LndmModel {
    data: Dataset,
    spec: ModelSpec,
    design: DMatrix<f64>,
    response: Vec<f64>,
    coordinate_names: Vec<String>,
    hyper: HyperLayout,
    phi0: Option<f64>,
}

impl LndmModel {
    pub fn new(data: Dataset, spec: ModelSpec) -> Result<Self> {
        spec.priors.validate()?;
        let parts = data.parts();
        if parts < 2 {
            return Err(LndmError::Dimension {
                expected: 2,
                got: parts,
            });
        }
        if spec.reference >= parts {
            return Err(LndmError::Index {
                index: spec.reference,
                len: parts,
            });
        }
        let cov_idx: Vec<usize> = spec
            .covariates
            .iter()
            .map(|c| data.covariate_index(c))
            .collect::<Result<_>>()?;
        let sharing = spec.structure.spatial();
        if sharing.is_some() && data.coords.is_none() {
            return Err(LndmError::Data(format!(
                "structure {} needs spatial coordinates",
                spec.structure
            )));
        }
        let n = data.len();
        let p = cov_idx.len() + 1;
        let design = DMatrix::from_fn(n, p, |i, j| {
            if j == 0 {
                1.0
            } else {
                data.covariates[(i, cov_idx[j - 1])]
            }
        });
        check_full_rank(&design, &spec.covariates)?;
        let response = stack_response(&data.compositions, spec.reference)?;
        let ref_name = &data.category_names[spec.reference];
        let coordinate_names = data
            .category_names
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != spec.reference)
            .map(|(_, c)| format!("{c}/{ref_name}"))
            .collect();
        let coordinates = parts - 1;
        let hyper = HyperLayout {
            coordinates,
            spatial: sharing.is_some(),
            proportional: if sharing == Some(SpatialSharing::Proportional) {
                coordinates.saturating_sub(1)
            } else {
                0
            },
        };
        let phi0 = match sharing {
            Some(_) => Some(match spec.priors.range.phi0 {
                Some(p) => p,
                None => {
                    let diag = data.bbox_diagonal().unwrap_or(0.0);
                    if !(diag > 0.0) {
                        return Err(LndmError::Data(
                            "spatial coordinates span no area; set the range prior explicitly".into(),
                        ));
                    }
                    0.1 * diag
                }
            }),
            None => None,
        };
        Ok(Self {
            data,
            spec,
            design,
            response,
            coordinate_names,
            hyper,
            phi0,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Spec with the range-prior scale filled in; refits on subsets of the
    /// data reuse it so every fit sees the same prior.
    pub fn resolved_spec(&self) -> ModelSpec {
        let mut s = self.spec.clone();
        if self.phi0.is_some() {
            s.priors.range.phi0 = self.phi0;
        }
        s
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// Stacked alr response.
    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn n_units(&self) -> usize {
        self.data.len()
    }

    /// Number of alr coordinates, `D − 1`.
    pub fn coordinates(&self) -> usize {
        self.hyper.coordinates
    }

    pub fn coordinate_names(&self) -> &[String] {
        &self.coordinate_names
    }

    pub fn hyper_layout(&self) -> &HyperLayout {
        &self.hyper
    }

    /// Fixed-effect coefficients per linear predictor: `M + 1`.
    pub fn n_fixed_per_coordinate(&self) -> usize {
        self.design.ncols()
    }

    /// Observed alr vector of one row.
    pub fn alr_row(&self, n: usize) -> Vec<f64> {
        let units = self.n_units();
        (0..self.coordinates())
            .map(|d| self.response[d * units + n])
            .collect()
    }

    pub fn fixed_len(&self) -> usize {
        let p = self.n_fixed_per_coordinate();
        if self.spec.structure.shares_fixed_effects() {
            p
        } else {
            p * self.coordinates()
        }
    }

    /// Column of fixed-effect coefficient `j` in alr coordinate `d`.
    pub fn fixed_column(&self, d: usize, j: usize) -> usize {
        if self.spec.structure.shares_fixed_effects() {
            j
        } else {
            d * self.n_fixed_per_coordinate() + j
        }
    }

    fn spatial_blocks(&self) -> usize {
        match self.spec.structure.spatial() {
            None => 0,
            Some(SpatialSharing::Replicated) => self.coordinates(),
            Some(_) => 1,
        }
    }

    /// Column of the spatial effect for unit `n` in alr coordinate `d`.
    pub fn spatial_column(&self, d: usize, n: usize) -> Option<usize> {
        let start = self.fixed_len() + self.n_units();
        match self.spec.structure.spatial()? {
            SpatialSharing::Replicated => Some(start + d * self.n_units() + n),
            _ => Some(start + n),
        }
    }

    pub fn latent_len(&self) -> usize {
        self.fixed_len() + (1 + self.spatial_blocks()) * self.n_units()
    }

    pub fn layout(&self) -> LatentLayout {
        let n = self.n_units();
        let nf = self.fixed_len();
        let ns = self.spatial_blocks() * n;
        let mut labels = Vec::with_capacity(nf + n + ns);
        let names: Vec<String> = std::iter::once("intercept".to_string())
            .chain(self.spec.covariates.iter().cloned())
            .collect();
        if self.spec.structure.shares_fixed_effects() {
            labels.extend(names.iter().map(|c| format!("beta[{c}]")));
        } else {
            for coord in &self.coordinate_names {
                labels.extend(names.iter().map(|c| format!("beta[{c}|{coord}]")));
            }
        }
        labels.extend((0..n).map(|i| format!("u[{}]", i + 1)));
        match self.spec.structure.spatial() {
            Some(SpatialSharing::Replicated) => {
                for coord in &self.coordinate_names {
                    labels.extend((0..n).map(|i| format!("omega[{coord}][{}]", i + 1)));
                }
            }
            Some(_) => labels.extend((0..n).map(|i| format!("omega[{}]", i + 1))),
            None => {}
        }
        LatentLayout {
            fixed: 0..nf,
            shared: nf..nf + n,
            spatial: nf + n..nf + n + ns,
            labels,
        }
    }

    /// Internal vector θ → natural-scale hyperparameters. θ holds log
    /// precisions for σ_d², γ and σ_ω², the log range and the raw
    /// proportionality coefficients.
    pub fn values(&self, theta: &[f64]) -> Result<HyperValues> {
        let h = &self.hyper;
        if theta.len() != h.dim() {
            return Err(LndmError::Dimension {
                expected: h.dim(),
                got: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(LndmError::domain("hyperparameter vector must be finite"));
        }
        let spatial = match (h.spatial_sd(), h.range()) {
            (Some(s), Some(r)) => Some(SpatialHyper::new((-0.5 * theta[s]).exp(), theta[r].exp())?),
            _ => None,
        };
        let ps = h.proportional_start();
        Ok(HyperValues {
            sigma2: theta[..h.coordinates].iter().map(|t| (-t).exp()).collect(),
            gamma: (-theta[h.gamma()]).exp(),
            spatial,
            proportional: theta[ps..ps + h.proportional].to_vec(),
        })
    }

    /// Natural-scale hyperparameters → internal θ.
    pub fn theta(&self, v: &HyperValues) -> Result<Vec<f64>> {
        let h = &self.hyper;
        if v.sigma2.len() != h.coordinates || v.proportional.len() != h.proportional {
            return Err(LndmError::Dimension {
                expected: h.coordinates,
                got: v.sigma2.len(),
            });
        }
        if v.sigma2.iter().any(|s| !(*s > 0.0)) || !(v.gamma > 0.0) {
            return Err(LndmError::domain("variances must be positive"));
        }
        let mut t: Vec<f64> = v.sigma2.iter().map(|s| -s.ln()).collect();
        t.push(-v.gamma.ln());
        if h.spatial {
            let s = v
                .spatial
                .ok_or_else(|| LndmError::domain("spatial hyperparameters missing"))?;
            t.push(-2.0 * s.sigma_omega.ln());
            t.push(s.phi.ln());
        }
        t.extend_from_slice(&v.proportional);
        Ok(t)
    }

    pub fn build_system(&self, v: &HyperValues) -> Result<StackedSystem> {
        let n = self.n_units();
        let k = self.coordinates();
        let p = self.n_fixed_per_coordinate();
        if v.sigma2.len() != k {
            return Err(LndmError::Dimension {
                expected: k,
                got: v.sigma2.len(),
            });
        }
        if !(v.gamma > 0.0) {
            return Err(LndmError::domain("γ must be positive to build the shared effect"));
        }
        let layout = self.layout();
        let sharing = self.spec.structure.spatial();
        let spatial = match sharing {
            Some(s) => {
                let h = v
                    .spatial
                    .ok_or_else(|| LndmError::domain("spatial hyperparameters missing"))?;
                let coords = self.data.coords.as_ref().expect("checked at construction");
                Some(spatial_prior_precision(s, k, coords, &h)?)
            }
            None => None,
        };
        let mut rows = Vec::with_capacity(n * k);
        let mut noise = Vec::with_capacity(n * k);
        for d in 0..k {
            let coef = if sharing == Some(SpatialSharing::Proportional) {
                v.proportional_coef(d)
            } else {
                1.0
            };
            for i in 0..n {
                let mut row = Vec::with_capacity(p + 2);
                for j in 0..p {
                    row.push((self.fixed_column(d, j), self.design[(i, j)]));
                }
                row.push((layout.shared.start + i, 1.0));
                if let Some(c) = self.spatial_column(d, i) {
                    row.push((c, coef));
                }
                rows.push(row);
                noise.push(1.0 / v.sigma2[d]);
            }
        }
        let nf = layout.fixed.len();
        let prior = LatentPrior {
            fixed_mean: vec![self.spec.priors.beta_mean; nf],
            fixed_precision: vec![1.0 / self.spec.priors.beta_variance; nf],
            shared_precision: 1.0 / v.gamma,
            spatial,
        };
        StackedSystem::new(
            self.response.clone(),
            noise,
            rows,
            layout,
            prior,
            self.spec.constrain_shared,
        )
    }

    /// Stacked linear predictor for a latent vector, leaving out the shared
    /// effect: `X β^(d) + α^(d) ω^(d)`.
    pub fn eta_without_shared(&self, v: &HyperValues, x: &[f64]) -> Vec<f64> {
        let n = self.n_units();
        let k = self.coordinates();
        let p = self.n_fixed_per_coordinate();
        let proportional = self.spec.structure.spatial() == Some(SpatialSharing::Proportional);
        let mut eta = vec![0.0; n * k];
        for d in 0..k {
            let coef = if proportional { v.proportional_coef(d) } else { 1.0 };
            for i in 0..n {
                let mut e = 0.0;
                for j in 0..p {
                    e += self.design[(i, j)] * x[self.fixed_column(d, j)];
                }
                if let Some(c) = self.spatial_column(d, i) {
                    e += coef * x[c];
                }
                eta[d * n + i] = e;
            }
        }
        eta
    }

    /// Moment-based starting point: per-coordinate least squares residual
    /// covariance split into `σ_d²` and `γ`, with part of the variance given
    /// to the spatial field when there is one.
    pub fn initial_values(&self) -> HyperValues {
        let n = self.n_units();
        let k = self.coordinates();
        let x = &self.design;
        let xtx = x.tr_mul(x);
        let chol = xtx.cholesky();
        let mut resid = DMatrix::zeros(n, k);
        for d in 0..k {
            let z = nalgebra::DVector::from_column_slice(&self.response[d * n..(d + 1) * n]);
            let fitted = match &chol {
                Some(c) => x * c.solve(&x.tr_mul(&z)),
                None => nalgebra::DVector::from_element(n, z.mean()),
            };
            resid.set_column(d, &(z - fitted));
        }
        let dof = (n as f64 - x.ncols() as f64).max(1.0);
        let s = resid.tr_mul(&resid) / dof;
        let mean_diag = (0..k).map(|d| s[(d, d)]).sum::<f64>() / k as f64;
        let mean_diag = if mean_diag > 1e-8 { mean_diag } else { 1.0 };
        let min_diag = (0..k).map(|d| s[(d, d)]).fold(f64::INFINITY, f64::min).max(1e-8);
        let gamma = if k > 1 {
            let mut off = 0.0;
            for a in 0..k {
                for b in 0..a {
                    off += s[(a, b)];
                }
            }
            (off / (k * (k - 1) / 2) as f64).clamp(0.05 * mean_diag, 0.9 * min_diag.max(0.06 * mean_diag))
        } else {
            0.2 * mean_diag
        };
        let mut sigma2: Vec<f64> = (0..k)
            .map(|d| (s[(d, d)] - gamma).max(0.05 * s[(d, d)]).max(1e-6))
            .collect();
        let spatial = if self.hyper.spatial {
            let sd2 = 0.3 * sigma2.iter().sum::<f64>() / k as f64;
            sigma2.iter_mut().for_each(|v| *v *= 0.7);
            let diag = self.data.bbox_diagonal().unwrap_or(1.0).max(1e-6);
            Some(SpatialHyper {
                sigma_omega: sd2.sqrt(),
                phi: 0.25 * diag,
            })
        } else {
            None
        };
        HyperValues {
            sigma2,
            gamma,
            spatial,
            proportional: vec![1.0; self.hyper.proportional],
        }
    }

    /// Log prior density of θ on the internal scale (Jacobians included).
    pub fn log_prior(&self, theta: &[f64]) -> f64 {
        let h = &self.hyper;
        let pr = &self.spec.priors;
        // θ = log(1/s²) for a standard deviation s with a PC prior
        let log_sd_prior = |t: f64, pc: &PcPrior| {
            let sd = (-0.5 * t).exp();
            let lambda = -pc.alpha.ln() / pc.u;
            lambda.ln() - lambda * sd + (0.5 * sd).ln()
        };
        let mut lp = 0.0;
        for t in &theta[..h.coordinates] {
            lp += log_sd_prior(*t, &pr.sigma);
        }
        lp += log_sd_prior(theta[h.gamma()], &pr.gamma);
        if let (Some(s), Some(r)) = (h.spatial_sd(), h.range()) {
            lp += log_sd_prior(theta[s], &pr.spatial_sd);
            let phi = theta[r].exp();
            let phi0 = self.phi0.expect("resolved for spatial models");
            lp += pc_range_logprior(phi, phi0, pr.range.alpha0).unwrap_or(f64::NEG_INFINITY) + theta[r];
        }
        let ps = h.proportional_start();
        for a in &theta[ps..ps + h.proportional] {
            let v = pr.proportional_variance;
            lp += -0.5 * (2.0 * std::f64::consts::PI * v).ln()
                - (a - pr.proportional_mean).powi(2) / (2.0 * v);
        }
        lp
    }
}

impl HyperModel for LndmModel {
    fn dim(&self) -> usize {
        self.hyper.dim()
    }

    fn names(&self) -> Vec<String> {
        let h = &self.hyper;
        let mut names: Vec<String> = self
            .coordinate_names
            .iter()
            .map(|c| format!("log precision sigma2[{c}]"))
            .collect();
        names.push("log precision gamma".into());
        if h.spatial {
            names.push("log precision sigma_omega".into());
            names.push("log range phi".into());
        }
        names.extend(self.coordinate_names.iter().skip(1).take(h.proportional).map(|c| format!("alpha[{c}]")));
        names
    }

    fn initial(&self) -> Vec<f64> {
        self.theta(&self.initial_values())
            .expect("initial values are valid by construction")
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        LndmModel::log_prior(self, theta)
    }

    fn system(&self, theta: &[f64]) -> Result<StackedSystem> {
        self.build_system(&self.values(theta)?)
    }

    fn natural(&self, theta: &[f64]) -> Vec<(String, f64)> {
        let v = match self.values(theta) {
            Ok(v) => v,
            Err(_) => return Vec::new(),
        };
        let mut out: Vec<(String, f64)> = self
            .coordinate_names
            .iter()
            .zip(&v.sigma2)
            .map(|(c, s)| (format!("sigma2[{c}]"), *s))
            .collect();
        out.push(("gamma".into(), v.gamma));
        if let Some(s) = v.spatial {
            out.push(("sigma_omega".into(), s.sigma_omega));
            out.push(("phi".into(), s.phi));
        }
        for (c, a) in self.coordinate_names.iter().skip(1).zip(&v.proportional) {
            out.push((format!("alpha[{c}]"), *a));
        }
        out
    }
}

/// Convenience wrapper: bind `data` to `spec` and assemble the system at
/// `values`.
pub fn build_system(data: &Dataset, spec: &ModelSpec, values: &HyperValues) -> Result<StackedSystem> {
    LndmModel::new(data.clone(), spec.clone())?.build_system(values)
}

fn check_full_rank(design: &DMatrix<f64>, covariates: &[String]) -> Result<()> {
    let n = design.nrows();
    let p = design.ncols();
    if n < p {
        return Err(LndmError::Identifiability(format!(
            "fixed effects: {p} coefficients per coordinate but only {n} rows"
        )));
    }
    let sv = design.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let weak: Vec<usize> = sv
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= 1e-10 * max)
        .map(|(i, _)| i)
        .collect();
    if !weak.is_empty() {
        let names: Vec<&str> = std::iter::once("intercept")
            .chain(covariates.iter().map(String::as_str))
            .collect();
        return Err(LndmError::Identifiability(format!(
            "fixed-effect design over [{}] is rank deficient ({} of {} directions degenerate)",
            names.join(", "),
            weak.len(),
            p
        )));
    }
    Ok(())
}
