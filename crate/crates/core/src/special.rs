//! Normal-distribution helpers built on the error function.

use libm::erfc;
use std::f64::consts::{PI, SQRT_2};

/// Normal density `N(x, sigma)`; a zero width is rejected by callers.
#[inline]
pub fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-(x * x) / (2.0 * sigma * sigma)).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `Phi(b) - Phi(a)` for the standard normal, accurate in both tails.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * (erfc(-a / SQRT_2) + erfc(b / SQRT_2))
    }
}

/// Natural log of `2 cosh(x)` without overflow.
#[inline]
pub fn ln_2cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// `sech^2(x)` without overflow.
#[inline]
pub fn sech2(x: f64) -> f64 {
    let a = x.abs();
    let e = (-2.0 * a).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// `log(sum(exp(xs)))`, ignoring `-inf` entries.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mass_matches_cdf_difference_in_bulk() {
        let m = normal_mass(-0.3, 1.2);
        assert!((m - (normal_cdf(1.2) - normal_cdf(-0.3))).abs() < 1e-15);
    }

    #[test]
    fn mass_keeps_relative_accuracy_in_tails() {
        // Phi(-9) - Phi(-10), 30-digit reference.
        let m = normal_mass(-10.0, -9.0);
        let reference = 1.128_512_207_423_599e-19;
        assert!((m / reference - 1.0).abs() < 1e-10, "{m}");
        assert!((normal_mass(9.0, 10.0) / reference - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sech2_and_ln2cosh_large_arguments() {
        assert_eq!(sech2(1000.0), 0.0);
        assert!((ln_2cosh(1000.0) - 1000.0).abs() < 1e-12);
        assert!((ln_2cosh(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((sech2(0.3) - 1.0 / 0.3f64.cosh().powi(2)).abs() < 1e-15);
    }
}
