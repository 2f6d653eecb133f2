//! The overlap functions `f(E, E'; Omega)` between measurement windows.

use crate::bath::{complement_levels, BathSpec};
use crate::error::Result;
use crate::kernel::{KernelKind, MeasurementKernel};
use crate::special::{normal_mass, normal_pdf};

/// `sum_nbar W(E | x + Omega/2) W(E' | x - Omega/2)` over complement energies `x`.
pub(crate) fn exact_sum(
    levels: &[f64],
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    omega: f64,
) -> f64 {
    let h = 0.5 * omega;
    match kernel.kind {
        KernelKind::Indicator => {
            let m = (e / kernel.delta_e).round() as i64;
            let mp = (e_prime / kernel.delta_e).round() as i64;
            levels
                .iter()
                .filter(|&&x| kernel.bin_index(x + h) == m && kernel.bin_index(x - h) == mp)
                .count() as f64
        }
        KernelKind::Gaussian => levels
            .iter()
            .map(|&x| kernel.weight(e, x + h) * kernel.weight(e_prime, x - h))
            .sum(),
    }
}

/// `sum_nbar W(E | x - Omega/2) W(E' | x - Omega/2)`, the `gamma_2` overlap.
pub(crate) fn exact_sum_g2(
    levels: &[f64],
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    omega: f64,
) -> f64 {
    let h = 0.5 * omega;
    levels
        .iter()
        .map(|&x| kernel.weight(e, x - h) * kernel.weight(e_prime, x - h))
        .sum()
}

/// Exact `f(E, E'; +-Omega_r)` by summing over the other `N - 1` spins.
pub fn f_exact(
    bath: &BathSpec,
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    r: usize,
    positive: bool,
) -> Result<f64> {
    let levels = complement_levels(bath, r)?;
    let w = if positive {
        bath.zeeman[r]
    } else {
        -bath.zeeman[r]
    };
    Ok(exact_sum(&levels, kernel, e, e_prime, w))
}

/// Exact overlap with spin `r` flipping at a prescribed frequency `omega`
/// instead of its own splitting.
pub fn f_exact_at(
    bath: &BathSpec,
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    r: usize,
    omega: f64,
) -> Result<f64> {
    let levels = complement_levels(bath, r)?;
    Ok(exact_sum(&levels, kernel, e, e_prime, omega))
}

/// `R = f_exact / f_approx` at frequency `omega`, with the exact count
/// averaged over which spin is removed.
pub fn overlap_ratio(
    bath: &BathSpec,
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    omega: f64,
) -> Result<f64> {
    let approx = f_approx(bath, kernel, e, e_prime, omega);
    if !(approx > 0.0) {
        return Err(crate::error::Error::InvalidParameter(format!(
            "f_approx vanishes at E = {e}, E' = {e_prime}, omega = {omega}"
        )));
    }
    let mut exact = 0.0;
    for r in 0..bath.n_spins {
        exact += f_exact_at(bath, kernel, e, e_prime, r, omega)?;
    }
    Ok(exact / bath.n_spins as f64 / approx)
}

/// [`f_exact`] divided by `2^N`.
pub fn f_exact_fraction(
    bath: &BathSpec,
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    r: usize,
    positive: bool,
) -> Result<f64> {
    Ok(f_exact(bath, kernel, e, e_prime, r, positive)? / 2f64.powi(bath.n_spins as i32))
}

/// `int de (g(e)/2) W(E | e + Omega/2) W(E' | e - Omega/2) / 2^N`.
///
/// Indicator: the two windows for `e` are `a +- dE/2` and `b +- dE/2` with
/// `a = E - Omega/2`, `b = E' + Omega/2`; the result is half the normal mass
/// of their overlap, exactly zero once `|E - E' - Omega| >= dE`.
pub fn f_approx_fraction(
    sigma: f64,
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    omega: f64,
) -> f64 {
    let a = e - 0.5 * omega;
    let b = e_prime + 0.5 * omega;
    pair_overlap(sigma, kernel, a, b)
}

/// `int de (g(e)/2) W(E | e - Omega/2) W(E' | e - Omega/2) / 2^N`.
pub fn g2_approx_fraction(
    sigma: f64,
    kernel: &MeasurementKernel,
    e: f64,
    e_prime: f64,
    omega: f64,
) -> f64 {
    let h = 0.5 * omega;
    match kernel.kind {
        KernelKind::Indicator => {
            if kernel.bin_index(e) != kernel.bin_index(e_prime) {
                return 0.0;
            }
            pair_overlap(sigma, kernel, e + h, e + h)
        }
        KernelKind::Gaussian => pair_overlap(sigma, kernel, e + h, e_prime + h),
    }
}

/// Half the Gaussian-DOS mass of `e` compatible with two windows centred on `a` and `b`.
fn pair_overlap(sigma: f64, kernel: &MeasurementKernel, a: f64, b: f64) -> f64 {
    let d = kernel.delta_e;
    match kernel.kind {
        KernelKind::Indicator => {
            let lo = (a - 0.5 * d).max(b - 0.5 * d);
            let hi = (a + 0.5 * d).min(b + 0.5 * d);
            if hi > lo {
                0.5 * normal_mass(lo / sigma, hi / sigma)
            } else {
                0.0
            }
        }
        KernelKind::Gaussian => {
            // N(e-a, d) N(e-b, d) = N(a-b, sqrt2 d) N(e-(a+b)/2, d/sqrt2)
            let s2 = std::f64::consts::SQRT_2;
            0.5 * normal_pdf(a - b, s2 * d)
                * normal_pdf(0.5 * (a + b), (sigma * sigma + 0.5 * d * d).sqrt())
        }
    }
}

/// [`f_approx_fraction`] scaled by `2^N`; infinite beyond ~1023 spins.
pub fn f_approx(bath: &BathSpec, kernel: &MeasurementKernel, e: f64, e_prime: f64, omega: f64) -> f64 {
    f_approx_fraction(bath.sigma_n(), kernel, e, e_prime, omega) * bath.dos().total_states()
}
