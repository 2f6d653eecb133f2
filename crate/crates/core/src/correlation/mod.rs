//! Bath correlation structure for the spin bath coupled through `B = sum_r c_r sigma^x_r`.
//!
//! Two evaluation modes are provided. The continuum mode combines the
//! Gaussian density of states with the smooth spectral density `J(Omega)`.
//! The oracle mode sums over the actual spins and their exactly enumerated
//! complements, broadening each `delta(omega - Omega_r)` to one indicator bin.

mod overlap;
mod table;

pub use overlap::{
    f_approx, f_approx_fraction, f_exact, f_exact_at, f_exact_fraction, g2_approx_fraction,
    overlap_ratio,
};
pub use table::RateTable;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::bath::{complement_levels, BathSpec, GridCanonical, Volumes, ZeemanDistribution};
use crate::error::{Error, Result};
use crate::kernel::{EnergyGrid, MeasurementKernel};
use crate::special::normal_pdf;

/// `J(Omega) = 2 pi lambda^2 c0^2 N p_Z(|Omega|)` and its discrete counterpart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub lambda: f64,
    pub c0: f64,
    pub n_spins: usize,
    pub zeeman_dist: ZeemanDistribution,
    /// `(Omega_r, c_r)` of the realized bath.
    pub modes: Vec<(f64, f64)>,
}

impl SpectralDensity {
    pub fn new(bath: &BathSpec, lambda: f64, c0: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite() && c0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "invalid coupling lambda = {lambda}, c0 = {c0}"
            )));
        }
        Ok(Self {
            lambda,
            c0,
            n_spins: bath.n_spins,
            zeeman_dist: bath.zeeman_dist,
            modes: bath
                .zeeman
                .iter()
                .copied()
                .zip(bath.couplings.iter().copied())
                .collect(),
        })
    }

    /// Continuum `J(Omega)`, even in `Omega`.
    ///
    /// `p_Z` is used without renormalizing for the truncation at zero, which
    /// is bounded by one percent at construction of the bath.
    pub fn continuum(&self, omega: f64) -> f64 {
        let d = &self.zeeman_dist;
        2.0 * PI
            * self.lambda
            * self.lambda
            * self.c0
            * self.c0
            * self.n_spins as f64
            * normal_pdf(omega.abs() - d.mean, d.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    Continuum,
    Oracle,
}

/// Evaluates `gamma_1`, `gamma_2`, `kappa` and correlation functions.
#[derive(Debug, Clone)]
pub struct RateEngine {
    mode: RateMode,
    kernel: MeasurementKernel,
    volumes: Volumes,
    spectral: SpectralDensity,
    /// Per spin, energies of all other spins (oracle mode only).
    complements: Vec<Vec<f64>>,
}

impl RateEngine {
    /// Gaussian density of states with the continuum spectral density.
    pub fn continuum(
        bath: &BathSpec,
        kernel: MeasurementKernel,
        spectral: SpectralDensity,
    ) -> Result<Self> {
        if !(spectral.zeeman_dist.std > 0.0) {
            return Err(Error::InvalidParameter(
                "continuum spectral density needs a Zeeman distribution of nonzero width".into(),
            ));
        }
        Ok(Self {
            mode: RateMode::Continuum,
            kernel,
            volumes: Volumes::gaussian(bath, kernel),
            spectral,
            complements: Vec::new(),
        })
    }

    /// Exact enumeration; limited to small baths.
    pub fn oracle(
        bath: &BathSpec,
        kernel: MeasurementKernel,
        spectral: SpectralDensity,
    ) -> Result<Self> {
        let complements = (0..bath.n_spins)
            .map(|r| complement_levels(bath, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mode: RateMode::Oracle,
            kernel,
            volumes: Volumes::exact(bath, kernel)?,
            spectral,
            complements,
        })
    }

    pub fn new(
        mode: RateMode,
        bath: &BathSpec,
        kernel: MeasurementKernel,
        spectral: SpectralDensity,
    ) -> Result<Self> {
        match mode {
            RateMode::Continuum => Self::continuum(bath, kernel, spectral),
            RateMode::Oracle => Self::oracle(bath, kernel, spectral),
        }
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn kernel(&self) -> MeasurementKernel {
        self.kernel
    }

    pub fn volumes(&self) -> &Volumes {
        &self.volumes
    }

    pub fn spectral(&self) -> &SpectralDensity {
        &self.spectral
    }

    fn level_count(&self) -> f64 {
        2f64.powi(self.complements.len() as i32)
    }

    /// `1/dE` on `[-dE/2, dE/2)`: a Dirac delta smeared over one bin.
    fn boxcar(&self, x: f64) -> f64 {
        let d = self.kernel.delta_e;
        if x >= -0.5 * d && x < 0.5 * d {
            1.0 / d
        } else {
            0.0
        }
    }

    fn check_volume(&self, e: f64) -> Result<f64> {
        let v = self.volumes.fraction(e);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::ExcludedBin { energy: e })
        }
    }

    /// Oracle sum `2 pi lambda^2 sum_r c_r^2 [box(w - W_r) h(r, +) + box(w + W_r) h(r, -)]`.
    fn oracle_sum(&self, omega: f64, h: impl Fn(&[f64], f64) -> f64) -> f64 {
        let lam2 = self.spectral.lambda * self.spectral.lambda;
        let n = self.level_count();
        let mut total = 0.0;
        for (r, &(w, c)) in self.spectral.modes.iter().enumerate() {
            let up = self.boxcar(omega - w);
            let down = self.boxcar(omega + w);
            if up == 0.0 && down == 0.0 {
                continue;
            }
            let levels = &self.complements[r];
            let mut s = 0.0;
            if up > 0.0 {
                s += up * h(levels, w);
            }
            if down > 0.0 {
                s += down * h(levels, -w);
            }
            total += c * c * s;
        }
        2.0 * PI * lam2 * total / n
    }

    /// `gamma_1(E, E'; omega)`: rate of `E' -> E` while the system emits `omega` into the bath.
    pub fn gamma1(&self, e: f64, e_prime: f64, omega: f64) -> Result<f64> {
        let v = self.check_volume(e_prime)?;
        let k = &self.kernel;
        Ok(match self.mode {
            RateMode::Continuum => {
                let f = f_approx_fraction(self.volumes.dos.sigma_n, k, e, e_prime, omega);
                if f == 0.0 {
                    0.0
                } else {
                    self.spectral.continuum(omega) * f / v
                }
            }
            RateMode::Oracle => {
                self.oracle_sum(omega, |levels, w| {
                    overlap::exact_sum(levels, k, e, e_prime, w)
                }) / v
            }
        })
    }

    /// `gamma_2(E, E'; omega)` from its overlap definition.
    pub fn gamma2(&self, e: f64, e_prime: f64, omega: f64) -> Result<f64> {
        let v = self.check_volume(e_prime)?;
        let k = &self.kernel;
        Ok(match self.mode {
            RateMode::Continuum => {
                let g = g2_approx_fraction(self.volumes.dos.sigma_n, k, e, e_prime, omega);
                if g == 0.0 {
                    0.0
                } else {
                    self.spectral.continuum(omega) * g / v
                }
            }
            RateMode::Oracle => {
                self.oracle_sum(omega, |levels, w| {
                    overlap::exact_sum_g2(levels, k, e, e_prime, w)
                }) / v
            }
        })
    }

    /// Outputs `E'` (with quadrature weights) that `gamma_1(E', E; omega)` can reach.
    fn reachable_outputs(&self, e: f64, omega: f64) -> Vec<(f64, f64)> {
        let d = self.kernel.delta_e;
        self.kernel
            .output_quadrature(e + omega - 2.0 * d, e + omega + 2.0 * d)
    }

    /// `kappa(E; omega) = sum_E' gamma_1(E', E; omega)`, summed over every
    /// reachable output including those beyond any truncated grid.
    pub fn kappa(&self, e: f64, omega: f64) -> Result<f64> {
        self.check_volume(e)?;
        let mut total = 0.0;
        for (ep, w) in self.reachable_outputs(e, omega) {
            total += w * self.gamma1(ep, e, omega)?;
        }
        Ok(total)
    }

    /// `sum_E p(E) kappa(E; omega)` over a normalized distribution on `grid`.
    pub fn kappa_p_averaged(
        &self,
        grid: &EnergyGrid,
        p: &[f64],
        omega: f64,
    ) -> Result<f64> {
        if p.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "distribution has {} entries for a grid of {}",
                p.len(),
                grid.len()
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0) {
            return Err(Error::NotNormalized { total });
        }
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if pi > 0.0 {
                acc += pi * self.kappa(grid.energy(i), omega)?;
            }
        }
        Ok(acc)
    }

    /// Thermal average `<kappa(E; omega)>_beta` with grid weights `V(E) e^{-beta E}`.
    pub fn kappa_beta(&self, canonical: &GridCanonical, beta: f64, omega: f64) -> Result<f64> {
        let grid = canonical.grid();
        self.kappa_p_averaged(&grid, &canonical.probabilities(beta), omega)
    }

    /// Relative violation of `kappa(E; -w) = e^{-beta(E) w} kappa(E; w)`.
    pub fn kms_residual(&self, e: f64, omega: f64) -> Result<f64> {
        let forward = self.kappa(e, omega)?;
        if !(forward > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kappa({e}; {omega}) vanishes"
            )));
        }
        let expected = (-self.volumes.beta(e)? * omega).exp();
        Ok((self.kappa(e, -omega)? / forward - expected).abs() / expected)
    }

    /// Bath correlation `<P(E) B(tau) B>_{E'}` as a sum of oscillating terms.
    pub fn correlation(&self, e: f64, e_prime: f64) -> Result<CorrelationFunction> {
        let v = self.check_volume(e_prime)?;
        let sigma = self.volumes.dos.sigma_n;
        let k = &self.kernel;
        let n = self.level_count();
        let mut terms = Vec::with_capacity(2 * self.spectral.modes.len());
        for (r, &(w, c)) in self.spectral.modes.iter().enumerate() {
            for signed in [w, -w] {
                let f = match self.mode {
                    RateMode::Continuum => f_approx_fraction(sigma, k, e, e_prime, signed),
                    RateMode::Oracle => {
                        overlap::exact_sum(&self.complements[r], k, e, e_prime, signed) / n
                    }
                };
                if f != 0.0 {
                    terms.push((signed, c * c * f / v));
                }
            }
        }
        Ok(CorrelationFunction { terms })
    }
}

/// `C(tau) = sum_j a_j e^{-i Omega_j tau}` with `Omega_j` of either sign.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFunction {
    pub terms: Vec<(f64, f64)>,
}

impl CorrelationFunction {
    pub fn value(&self, tau: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|&(w, a)| Complex64::from_polar(a, -w * tau))
            .sum()
    }

    pub fn sample(&self, taus: &[f64]) -> Vec<Complex64> {
        taus.iter().map(|&t| self.value(t)).collect()
    }
}

/// `lambda^2 int_{-T}^{T} dtau e^{i omega tau} C(tau)` by the trapezoid rule
/// on equally spaced samples.
pub fn numerical_rate(lambda: f64, taus: &[f64], samples: &[Complex64], omega: f64) -> f64 {
    let n = taus.len();
    if n < 2 {
        return 0.0;
    }
    let h = taus[1] - taus[0];
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, (&t, &c)) in taus.iter().zip(samples).enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
        acc += w * Complex64::from_polar(1.0, omega * t) * c;
    }
    lambda * lambda * acc.re
}

/// `n` equally spaced times covering `[-t_max, t_max]`.
pub fn symmetric_times(t_max: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -t_max + 2.0 * t_max * i as f64 / (n - 1) as f64)
        .collect()
}

/// Exact two-level populations of one bath spin versus the canonical prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedState {
    /// `V(E | n_r) / V(E)` for `n_r = -1, +1`.
    pub exact: [f64; 2],
    /// `e^{-beta(E) E_{n_r}} / Z_r(beta(E))`.
    pub canonical: [f64; 2],
    pub beta: f64,
}

/// Conditional volumes `V(E | n_r) = sum_nbar W(E | E_nbar + n_r Omega_r / 2)`.
pub fn reduced_microcanonical_state(
    bath: &BathSpec,
    kernel: &MeasurementKernel,
    r: usize,
    e: f64,
) -> Result<ReducedState> {
    let levels = complement_levels(bath, r)?;
    let half = 0.5 * bath.zeeman[r];
    let cond = |shift: f64| -> f64 { levels.iter().map(|&x| kernel.weight(e, x + shift)).sum() };
    let (down, up) = (cond(-half), cond(half));
    let total = down + up;
    if !(total > 0.0) {
        return Err(Error::UndefinedEntropy { energy: e });
    }
    let beta = Volumes::gaussian(bath, *kernel).beta(e)?;
    let (wd, wu) = ((beta * half).exp(), (-beta * half).exp());
    Ok(ReducedState {
        exact: [down / total, up / total],
        canonical: [wd / (wd + wu), wu / (wd + wu)],
        beta,
    })
}

/// Continuum mode only: `kappa(E; w) = J(w) V(E + w/2) / (2 V(E))`.
pub fn kappa_closed_form(engine: &RateEngine, e: f64, omega: f64) -> Option<f64> {
    if engine.mode != RateMode::Continuum {
        return None;
    }
    let v = &engine.volumes;
    Some(engine.spectral.continuum(omega) * v.fraction(e + 0.5 * omega) / (2.0 * v.fraction(e)))
}

#[cfg(test)]
mod tests;
