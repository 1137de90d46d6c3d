//! Descriptive statistics pooling a similarity distribution into a fixed-size
//! feature block: min, max, mean, population std, skewness, kurtosis.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Degenerate-spread threshold: below this the distribution is treated as
/// constant and skewness/kurtosis are defined as 0.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescStats<F> {
    pub min: F,
    pub max: F,
    pub mean: F,
    pub std: F,
    pub skewness: F,
    pub kurtosis: F,
}

impl<F: Real> DescStats<F> {
    pub fn as_array(&self) -> [F; 6] {
        [self.min, self.max, self.mean, self.std, self.skewness, self.kurtosis]
    }
}

/// Pool a non-empty distribution into its six descriptive statistics.
///
/// Moments are population moments: `σ = sqrt(mean((ρ-μ)²))`,
/// `γ₁ = mean(((ρ-μ)/σ)³)`, `γ₂ = mean(((ρ-μ)/σ)⁴)`.
pub fn describe<F: Real>(values: &[F]) -> Result<DescStats<F>> {
    if values.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let n = F::c(values.len() as f64);
    let mut min = values[0];
    let mut max = values[0];
    let mut sum = F::zero();
    for &v in values {
        if v < min {
            min = v;
        }
        if v > max {
            max = v;
        }
        sum += v;
    }
    let mean = sum / n;

    let mut m2 = F::zero();
    for &v in values {
        let d = v - mean;
        m2 += d * d;
    }
    m2 = m2 / n;
    let std = m2.sqrt();

    let (skewness, kurtosis) = if std < F::c(SIGMA_FLOOR) {
        (F::zero(), F::zero())
    } else {
        let mut z3 = F::zero();
        let mut z4 = F::zero();
        for &v in values {
            let z = (v - mean) / std;
            let z2 = z * z;
            z3 += z2 * z;
            z4 += z2 * z2;
        }
        (z3 / n, z4 / n)
    };

    Ok(DescStats { min, max, mean, std, skewness, kurtosis })
}

/// Gradient of `describe` w.r.t. its input values.
///
/// `upstream` holds d(loss)/d(stat) in `as_array` order. Min/max route to the
/// first attaining index; below the sigma floor the std/skew/kurt paths carry
/// no gradient (the stats are held constant there).
pub fn describe_backward<F: Real>(values: &[F], upstream: &[F; 6]) -> Vec<F> {
    let n_usize = values.len();
    assert!(n_usize > 0, "describe_backward on empty distribution");
    let n = F::c(n_usize as f64);
    let stats = describe(values).expect("non-empty");
    let mut grad = vec![F::zero(); n_usize];

    let argmin = values
        .iter()
        .enumerate()
        .find(|(_, &v)| v == stats.min)
        .map(|(i, _)| i)
        .unwrap_or(0);
    let argmax = values
        .iter()
        .enumerate()
        .find(|(_, &v)| v == stats.max)
        .map(|(i, _)| i)
        .unwrap_or(0);
    grad[argmin] += upstream[0];
    grad[argmax] += upstream[1];

    let inv_n = F::one() / n;
    for g in grad.iter_mut() {
        *g += upstream[2] * inv_n;
    }

    if stats.std >= F::c(SIGMA_FLOOR) {
        let three = F::c(3.0);
        let four = F::c(4.0);
        let inv_ns = F::one() / (n * stats.std);
        for (g, &v) in grad.iter_mut().zip(values) {
            let z = (v - stats.mean) / stats.std;
            // dσ/dρⱼ = (ρⱼ-μ)/(nσ)
            *g += upstream[3] * z * inv_n;
            // dγ₁/dρⱼ = 3/(nσ) (zⱼ² - 1 - zⱼγ₁)
            *g += upstream[4] * three * inv_ns * (z * z - F::one() - z * stats.skewness);
            // dγ₂/dρⱼ = 4/(nσ) (zⱼ³ - γ₁ - zⱼγ₂)
            *g += upstream[5] * four * inv_ns * (z * z * z - stats.skewness - z * stats.kurtosis);
        }
    }
    grad
}
