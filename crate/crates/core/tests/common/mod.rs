//! Dense reference computations shared by the integration tests. They work
//! from the raw dataset with explicit matrices and the full Dirichlet
//! covariance per composition, without the shared-effect augmentation.

#![allow(dead_code)]

use lndm::coda::alr;
use lndm::data::Dataset;
use lndm::model_spec::StructureType;
use nalgebra::{DMatrix, DVector};

/// A non-spatial model written out densely: `z_n ~ N(G_n b, Σ)` with
/// `b ~ N(0, v I)`.
pub struct DenseModel {
    /// Per row: alr vector and its `K × q` design block.
    pub rows: Vec<(DVector<f64>, DMatrix<f64>)>,
    pub sigma: DMatrix<f64>,
    pub prior_var: f64,
}

pub fn sigma_matrix(sigma2: &[f64], gamma: f64) -> DMatrix<f64> {
    let k = sigma2.len();
    DMatrix::from_fn(k, k, |i, j| gamma + if i == j { sigma2[i] } else { 0.0 })
}

/// Design block of one row: the covariate vector `[1, x…]` placed once
/// (shared effects) or once per coordinate.
pub fn design_block(x: &[f64], k: usize, structure: StructureType) -> DMatrix<f64> {
    let p = x.len();
    if structure.shares_fixed_effects() {
        DMatrix::from_fn(k, p, |_, j| x[j])
    } else {
        DMatrix::from_fn(k, k * p, |d, c| if c / p == d { x[c % p] } else { 0.0 })
    }
}

impl DenseModel {
    pub fn new(
        data: &Dataset,
        covariates: &[String],
        reference: usize,
        structure: StructureType,
        sigma2: &[f64],
        gamma: f64,
        prior_var: f64,
    ) -> Self {
        let k = data.parts() - 1;
        let cols: Vec<usize> = covariates
            .iter()
            .map(|c| data.covariate_names.iter().position(|n| n == c).unwrap())
            .collect();
        let rows = (0..data.len())
            .map(|i| {
                let z = alr(&data.compositions[i], reference).unwrap();
                let mut x = vec![1.0];
                x.extend(cols.iter().map(|c| data.covariates[(i, *c)]));
                (DVector::from_column_slice(z.values()), design_block(&x, k, structure))
            })
            .collect();
        Self {
            rows,
            sigma: sigma_matrix(sigma2, gamma),
            prior_var,
        }
    }

    fn q(&self) -> usize {
        self.rows[0].1.ncols()
    }

    /// Posterior mean and covariance of the fixed effects using all rows
    /// except `skip`.
    pub fn posterior(&self, skip: Option<usize>) -> (DVector<f64>, DMatrix<f64>) {
        let q = self.q();
        let si = self.sigma.clone().try_inverse().unwrap();
        let mut prec = DMatrix::<f64>::identity(q, q) / self.prior_var;
        let mut b = DVector::<f64>::zeros(q);
        for (i, (z, g)) in self.rows.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            prec += g.transpose() * &si * g;
            b += g.transpose() * &si * z;
        }
        let cov = prec.try_inverse().unwrap();
        (&cov * b, cov)
    }

    /// Predictive mean and covariance of a new alr vector with design `g`.
    pub fn predictive(&self, g: &DMatrix<f64>, skip: Option<usize>) -> (DVector<f64>, DMatrix<f64>) {
        let (m, c) = self.posterior(skip);
        (g * &m, g * c * g.transpose() + &self.sigma)
    }

    /// `log p(z_1..z_N)` with the fixed effects integrated out.
    pub fn log_evidence(&self) -> f64 {
        let k = self.sigma.nrows();
        let n = self.rows.len();
        let q = self.q();
        let mut g = DMatrix::<f64>::zeros(n * k, q);
        let mut z = DVector::<f64>::zeros(n * k);
        let mut cov = DMatrix::<f64>::zeros(n * k, n * k);
        for (i, (zi, gi)) in self.rows.iter().enumerate() {
            g.view_mut((i * k, 0), (k, q)).copy_from(gi);
            z.rows_mut(i * k, k).copy_from(zi);
            cov.view_mut((i * k, i * k), (k, k)).copy_from(&self.sigma);
        }
        cov += &g * g.transpose() * self.prior_var;
        gaussian_logpdf(&z, &cov)
    }

    /// Leave-one-out univariate predictive density of each coordinate of
    /// row `i`.
    pub fn loo_densities(&self, i: usize) -> Vec<f64> {
        let (z, g) = &self.rows[i];
        let (m, c) = self.predictive(g, Some(i));
        (0..z.len())
            .map(|d| {
                let v = c[(d, d)];
                (-(z[d] - m[d]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
            })
            .collect()
    }
}

/// Zero-mean multivariate normal log density via an LU determinant.
pub fn gaussian_logpdf(x: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let lu = cov.clone().lu();
    let det = lu.determinant();
    let sol = lu.solve(x).unwrap();
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + det.ln() + x.dot(&sol))
}

type Q = num_rational::BigRational;

fn q(x: f64) -> Q {
    Q::from_float(x).unwrap()
}

fn q_inverse(mut a: Vec<Vec<Q>>) -> Vec<Vec<Q>> {
    use num_traits::{One, Zero};
    let n = a.len();
    let mut inv: Vec<Vec<Q>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { Q::one() } else { Q::zero() }).collect())
        .collect();
    for col in 0..n {
        let p = (col..n).find(|&r| !a[r][col].is_zero()).unwrap();
        a.swap(col, p);
        inv.swap(col, p);
        let piv = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &piv;
            inv[col][j] = &inv[col][j] / &piv;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let (x, y) = (&a[col][j] * &f, &inv[col][j] * &f);
                    a[r][j] -= x;
                    inv[r][j] -= y;
                }
            }
        }
    }
    inv
}

fn q_mul(a: &[Vec<Q>], b: &[Vec<Q>]) -> Vec<Vec<Q>> {
    use num_traits::Zero;
    (0..a.len())
        .map(|i| {
            (0..b[0].len())
                .map(|j| (0..b.len()).fold(Q::zero(), |s, k| s + &a[i][k] * &b[k][j]))
                .collect()
        })
        .collect()
}

fn q_t(a: &[Vec<Q>]) -> Vec<Vec<Q>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j].clone()).collect()).collect()
}

fn q_mat(m: &DMatrix<f64>) -> Vec<Vec<Q>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| q(m[(i, j)])).collect()).collect()
}

impl DenseModel {
    /// Leave-one-out predictive mean and variance of each coordinate of row
    /// `i`, in exact rational arithmetic from the f64 inputs. Stays accurate
    /// when `Σ` is close to singular.
    pub fn exact_loo_moments(&self, i: usize) -> Vec<(f64, f64)> {
        use num_traits::{ToPrimitive, Zero};
        let qn = self.q();
        let si = q_inverse(q_mat(&self.sigma));
        let mut prec: Vec<Vec<Q>> = (0..qn)
            .map(|r| (0..qn).map(|c| if r == c { q(self.prior_var).recip() } else { Q::zero() }).collect())
            .collect();
        let mut b: Vec<Vec<Q>> = vec![vec![Q::zero()]; qn];
        for (n, (z, g)) in self.rows.iter().enumerate() {
            if n == i {
                continue;
            }
            let gt_si = q_mul(&q_t(&q_mat(g)), &si);
            let zq: Vec<Vec<Q>> = z.iter().map(|v| vec![q(*v)]).collect();
            let a = q_mul(&gt_si, &q_mat(g));
            let c = q_mul(&gt_si, &zq);
            for r in 0..qn {
                for s in 0..qn {
                    prec[r][s] += &a[r][s];
                }
                b[r][0] += &c[r][0];
            }
        }
        let cov = q_inverse(prec);
        let g = q_mat(&self.rows[i].1);
        let mean = q_mul(&g, &q_mul(&cov, &b));
        let var = q_mul(&q_mul(&g, &cov), &q_t(&g));
        let sigma = q_mat(&self.sigma);
        (0..g.len())
            .map(|d| {
                let v = &var[d][d] + &sigma[d][d];
                (mean[d][0].to_f64().unwrap(), v.to_f64().unwrap())
            })
            .collect()
    }
}
