//! Points on the simplex and the additive log-ratio (alr) transform.
//!
//! Category indices are zero-based throughout the library. The reference
//! category of an alr transform is stored alongside the coordinates so a
//! back-transform never needs to be told which slot to reinsert.

use crate::error::{LndmError, Result};

/// Absolute tolerance on the unit-sum constraint.
pub const SUM_TOLERANCE: f64 = 1e-10;

/// A vector of `D >= 2` strictly positive proportions summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition {
    values: Vec<f64>,
}

impl Composition {
    /// Validates an already-closed vector.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(LndmError::Dimension {
                expected: 2,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(LndmError::domain(format!(
                "composition entries must lie in (0, 1), found {v}"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(LndmError::domain(format!(
                "composition sums to {sum}, not 1"
            )));
        }
        Ok(Self { values })
    }

    /// Used by `alr_inv`, where an extreme coordinate can round an entry to
    /// exactly 1 (or a tiny entry to 0) in double precision.
    fn from_softmax(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE);
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn parts(&self) -> usize {
        self.values.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

/// The `D - 1` log-ratio coordinates of a composition with respect to a
/// reference category.
#[derive(Debug, Clone, PartialEq)]
pub struct AlrCoords {
    values: Vec<f64>,
    reference: usize,
}

impl AlrCoords {
    /// `reference` is the zero-based slot of the reference category in the
    /// `values.len() + 1` part composition.
    pub fn new(values: Vec<f64>, reference: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(LndmError::Dimension {
                expected: 1,
                got: 0,
            });
        }
        if reference > values.len() {
            return Err(LndmError::Index {
                index: reference,
                len: values.len() + 1,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LndmError::domain("alr coordinates must be finite"));
        }
        Ok(Self { values, reference })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Number of parts of the underlying composition.
    pub fn parts(&self) -> usize {
        self.values.len() + 1
    }
}

/// Rescales positive magnitudes so they sum to one.
pub fn closure(v: &[f64]) -> Result<Composition> {
    if v.len() < 2 {
        return Err(LndmError::Dimension {
            expected: 2,
            got: v.len(),
        });
    }
    if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(LndmError::domain(format!(
            "closure needs finite positive entries, found {x}"
        )));
    }
    let total: f64 = v.iter().sum();
    let values: Vec<f64> = v.iter().map(|x| x / total).collect();
    // a single part holding almost all the mass can round to exactly 1.0
    if values.iter().any(|x| *x >= 1.0) {
        return Err(LndmError::domain(
            "composition is numerically degenerate: one part carries all mass",
        ));
    }
    Ok(Composition { values })
}

/// Multiplicative zero replacement: adds `eps` to every part and re-closes.
/// Returns the closed composition and whether any zero was present.
pub fn replace_zeros(v: &[f64], eps: f64) -> Result<(Composition, bool)> {
    if v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
        return Err(LndmError::domain(
            "zero replacement needs finite non-negative entries",
        ));
    }
    let had_zero = v.contains(&0.0);
    if !had_zero {
        return Ok((closure(v)?, false));
    }
    let shifted: Vec<f64> = v.iter().map(|x| x + eps).collect();
    Ok((closure(&shifted)?, true))
}

pub fn alr(c: &Composition, reference: usize) -> Result<AlrCoords> {
    let d = c.parts();
    if reference >= d {
        return Err(LndmError::Index {
            index: reference,
            len: d,
        });
    }
    let log_ref = c.values[reference].ln();
    let values = c
        .values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != reference)
        .map(|(_, y)| y.ln() - log_ref)
        .collect();
    Ok(AlrCoords { values, reference })
}

/// Inverse alr: a softmax over `(z, 0)` with the zero placed in the
/// reference slot. The largest exponent is subtracted first so large
/// coordinates do not overflow.
pub fn alr_inv(z: &AlrCoords) -> Composition {
    Composition::from_softmax(alr_inv_values(&z.values, z.reference))
}

/// Slice-level inverse alr used on hot paths (sampling, prediction).
pub fn alr_inv_values(z: &[f64], reference: usize) -> Vec<f64> {
    let shift = z.iter().copied().fold(0.0_f64, f64::max);
    let mut out = Vec::with_capacity(z.len() + 1);
    let mut it = z.iter();
    for j in 0..=z.len() {
        if j == reference {
            out.push((-shift).exp());
        } else {
            out.push((it.next().copied().unwrap_or(0.0) - shift).exp());
        }
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Picks the category whose log has the smallest sample variance across
/// rows; ties go to the lowest index.
pub fn suggest_reference(rows: &[Composition]) -> Result<usize> {
    if rows.len() < 2 {
        return Err(LndmError::InsufficientData(format!(
            "reference selection needs at least 2 compositions, got {}",
            rows.len()
        )));
    }
    let d = rows[0].parts();
    if let Some(bad) = rows.iter().find(|r| r.parts() != d) {
        return Err(LndmError::Dimension {
            expected: d,
            got: bad.parts(),
        });
    }
    let n = rows.len() as f64;
    let mut best = (0, f64::INFINITY);
    for j in 0..d {
        let logs: Vec<f64> = rows.iter().map(|r| r.values[j].ln()).collect();
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var < best.1 {
            best = (j, var);
        }
    }
    Ok(best.0)
}
