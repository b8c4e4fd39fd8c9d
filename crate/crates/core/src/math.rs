//! Float helpers that work without `std`.

pub(crate) use libm::{ceil, erfc, exp, fabs as abs, lgamma, log as ln, sqrt};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal CDF.
pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal density.
#[cfg(test)]
pub(crate) fn norm_pdf(x: f64) -> f64 {
    exp(-0.5 * x * x - 0.5 * LN_2PI)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
