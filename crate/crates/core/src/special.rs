//! Special functions: digamma, trigamma and the modified Bessel function
//! of the second kind of order one.

use std::f64::consts::{LN_2, PI};

pub use statrs::function::gamma::ln_gamma;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments below this are shifted upwards by recurrence before the
/// asymptotic series is applied.
const ASYMPTOTIC_FROM: f64 = 10.0;

/// ψ(x) for x > 0. Returns NaN outside the domain.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // -sum B_2k / (2k x^2k), k = 1..7
    let series = r
        * (1.0 / 12.0
            - r * (1.0 / 120.0
                - r * (1.0 / 252.0
                    - r * (1.0 / 240.0
                        - r * (1.0 / 132.0 - r * (691.0 / 32760.0 - r / 12.0))))));
    acc + x.ln() - 0.5 / x - series
}

/// ψ'(x) for x > 0. Returns NaN outside the domain.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < ASYMPTOTIC_FROM {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / (x * x);
    // sum B_2k / x^(2k+1), k = 1..7
    let series = r
        * (1.0 / 6.0
            - r * (1.0 / 30.0
                - r * (1.0 / 42.0
                    - r * (1.0 / 30.0
                        - r * (5.0 / 66.0 - r * (691.0 / 2730.0 - r * 7.0 / 6.0))))));
    acc + 1.0 / x + 0.5 * r + series / x
}

/// Modified Bessel function K₁(x) for x > 0.
///
/// Small arguments use the ascending series; larger ones the integral
/// `K₁(x) = ∫₀^∞ exp(-x cosh t) cosh t dt` by the trapezoid rule, which
/// converges geometrically for this integrand.
pub fn bessel_k1(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    if x <= 2.0 {
        bessel_k1_series(x)
    } else {
        (-x).exp() * bessel_k1_scaled_integral(x)
    }
}

fn bessel_k1_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0; // q^k / (k! (k+1)!)
    let mut harmonic = 0.0; // H_k
    let mut i1_sum = 0.0;
    let mut psi_sum = 0.0;
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            term *= q / (kf * (kf + 1.0));
            harmonic += 1.0 / kf;
        }
        // psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
        let psi_pair = 2.0 * harmonic + 1.0 / (kf + 1.0) - 2.0 * EULER_GAMMA;
        i1_sum += term;
        psi_sum += psi_pair * term;
        if term < 1e-18 * i1_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + ((x).ln() - LN_2) * i1 - 0.25 * x * psi_sum
}

/// e^x K₁(x) by trapezoid quadrature, for x >= 2.
fn bessel_k1_scaled_integral(x: f64) -> f64 {
    const STEP: f64 = 0.2;
    let mut sum = 0.5;
    let mut t = STEP;
    loop {
        let c = t.cosh();
        let f = (-x * (c - 1.0)).exp() * c;
        sum += f;
        if f < 1e-18 * sum {
            break;
        }
        t += STEP;
    }
    sum * STEP
}

/// Standard normal log density.
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + r * r / var)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// log(sum(exp(v))) without overflow.
pub fn log_sum_exp(v: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.into_iter().collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
