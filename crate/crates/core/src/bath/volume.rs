use std::sync::Arc;

use super::{enumerate_spectrum, BathSpec};
use crate::error::{Error, Result};
use crate::kernel::{EnergyGrid, KernelKind, MeasurementKernel};
use crate::special::{normal_mass, normal_pdf};

/// Grid half-width in units of `sigma_N`.
pub const GRID_SIGMAS: f64 = 8.0;

/// Gaussian density of states `g(e) = 2^N N(e, sigma_N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosModel {
    pub sigma_n: f64,
    pub log_total_states: f64,
    pub n_spins: usize,
}

impl DosModel {
    pub fn new(bath: &BathSpec) -> Self {
        Self {
            sigma_n: bath.sigma_n(),
            log_total_states: bath.log_total_states(),
            n_spins: bath.n_spins,
        }
    }

    /// `g(e) / 2^N`.
    pub fn density_fraction(&self, e: f64) -> f64 {
        normal_pdf(e, self.sigma_n)
    }

    /// `2^N`, exact while representable.
    pub fn total_states(&self) -> f64 {
        match i32::try_from(self.n_spins) {
            Ok(n) => 2f64.powi(n),
            Err(_) => f64::INFINITY,
        }
    }

    pub fn density(&self, e: f64) -> f64 {
        self.density_fraction(e) * self.total_states()
    }
}

/// Where volumes come from.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeModel {
    /// Closed forms built on [`DosModel`].
    Gaussian,
    /// Exhaustively enumerated spectrum (sorted).
    Exact(Arc<Vec<f64>>),
}

/// Volumes `V(E) = int de W(E|e) g(e)` and the quantities derived from them.
///
/// Internally every count is stored as a fraction of the `2^N` states so that
/// large baths do not overflow; [`Volumes::log_volume`] adds `N ln 2` back.
#[derive(Debug, Clone, PartialEq)]
pub struct Volumes {
    pub kernel: MeasurementKernel,
    pub dos: DosModel,
    pub model: VolumeModel,
    max_energy: f64,
}

impl Volumes {
    pub fn gaussian(bath: &BathSpec, kernel: MeasurementKernel) -> Self {
        Self {
            kernel,
            dos: bath.dos(),
            model: VolumeModel::Gaussian,
            max_energy: bath.max_energy(),
        }
    }

    pub fn exact(bath: &BathSpec, kernel: MeasurementKernel) -> Result<Self> {
        let spectrum = enumerate_spectrum(bath)?;
        Ok(Self {
            kernel,
            dos: bath.dos(),
            model: VolumeModel::Exact(Arc::new(spectrum)),
            max_energy: bath.max_energy(),
        })
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.model, VolumeModel::Exact(_))
    }

    pub fn delta_e(&self) -> f64 {
        self.kernel.delta_e
    }

    /// Indicator outputs `|m dE| <= min(8 sigma_N, E_max)`.
    pub fn default_grid(&self) -> Result<EnergyGrid> {
        self.grid_with_sigmas(GRID_SIGMAS)
    }

    pub fn grid_with_sigmas(&self, sigmas: f64) -> Result<EnergyGrid> {
        let half = (sigmas * self.dos.sigma_n).min(self.max_energy + 0.5 * self.delta_e());
        EnergyGrid::symmetric(half, self.delta_e())
    }

    /// `V(E) / 2^N`.
    pub fn fraction(&self, e: f64) -> f64 {
        let d = self.delta_e();
        let s = self.dos.sigma_n;
        match (&self.model, self.kernel.kind) {
            (VolumeModel::Gaussian, KernelKind::Indicator) => {
                normal_mass((e - 0.5 * d) / s, (e + 0.5 * d) / s)
            }
            (VolumeModel::Gaussian, KernelKind::Gaussian) => normal_pdf(e, d.hypot(s)),
            (VolumeModel::Exact(levels), KernelKind::Indicator) => {
                let m = self.kernel.bin_index(e);
                let lo = levels.partition_point(|&x| self.kernel.bin_index(x) < m);
                let hi = levels.partition_point(|&x| self.kernel.bin_index(x) <= m);
                (hi - lo) as f64 / levels.len() as f64
            }
            (VolumeModel::Exact(levels), KernelKind::Gaussian) => {
                levels.iter().map(|&x| normal_pdf(e - x, d)).sum::<f64>() / levels.len() as f64
            }
        }
    }

    /// `V(E)` in states (indicator) or states per unit energy (Gaussian).
    /// Overflows to infinity for very large baths; prefer [`Self::log_volume`].
    pub fn volume(&self, e: f64) -> f64 {
        self.fraction(e) * self.dos.total_states()
    }

    pub fn log_volume(&self, e: f64) -> Result<f64> {
        let f = self.fraction(e);
        if f > 0.0 {
            Ok(self.dos.log_total_states + f.ln())
        } else {
            Err(Error::UndefinedEntropy { energy: e })
        }
    }

    /// Boltzmann entropy `ln(V(E) dE)`.
    pub fn entropy(&self, e: f64) -> Result<f64> {
        Ok(self.log_volume(e)? + self.delta_e().ln())
    }

    /// Boltzmann inverse temperature `dS/dE`.
    ///
    /// Indicator: centred difference over neighbouring bins. Gaussian kernel:
    /// analytic derivative of the closed form or of the exact level sum.
    pub fn beta(&self, e: f64) -> Result<f64> {
        let d = self.delta_e();
        match (&self.model, self.kernel.kind) {
            (_, KernelKind::Indicator) => {
                Ok((self.entropy(e + d)? - self.entropy(e - d)?) / (2.0 * d))
            }
            (VolumeModel::Gaussian, KernelKind::Gaussian) => {
                Ok(-e / (d * d + self.dos.sigma_n * self.dos.sigma_n))
            }
            (VolumeModel::Exact(levels), KernelKind::Gaussian) => {
                let (num, den) = levels.iter().fold((0.0, 0.0), |(n, s), &x| {
                    let w = normal_pdf(e - x, d);
                    (n - (e - x) / (d * d) * w, s + w)
                });
                if den > 0.0 {
                    Ok(num / den)
                } else {
                    Err(Error::UndefinedEntropy { energy: e })
                }
            }
        }
    }

    /// `-E / sigma_N^2`, the large-bath expansion of [`Self::beta`].
    pub fn beta_linear(&self, e: f64) -> f64 {
        -e / (self.dos.sigma_n * self.dos.sigma_n)
    }

    /// Microcanonical heat capacity `-beta^2 / (d beta / dE)`.
    pub fn heat_capacity(&self, e: f64) -> Result<f64> {
        let d = self.delta_e();
        let b = self.beta(e)?;
        let slope = (self.beta(e + d)? - self.beta(e - d)?) / (2.0 * d);
        Ok(-b * b / slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{sample_bath, CouplingRule, ZeemanDistribution};

    fn reference_bath(n: usize) -> BathSpec {
        sample_bath(
            n,
            ZeemanDistribution::new(1.0, 0.2),
            &CouplingRule::Uniform(1.0),
            7,
        )
        .unwrap()
    }

    /// Composite Simpson on `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn exact_central_bin_of_two_spins() {
        let bath = BathSpec::uniform(2, 1.0).unwrap();
        let v = Volumes::exact(&bath, MeasurementKernel::indicator(1.0).unwrap()).unwrap();
        assert_eq!(v.volume(0.0), 2.0);
        assert_eq!(v.volume(1.0), 1.0);
        assert_eq!(v.volume(2.0), 0.0);
    }

    #[test]
    fn gaussian_peak_in_narrow_kernel_limit() {
        let bath = reference_bath(20);
        let v = Volumes::gaussian(&bath, MeasurementKernel::gaussian(1e-6).unwrap());
        let expected = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bath.sigma_n());
        assert!((v.fraction(0.0) / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn indicator_closed_form_matches_quadrature() {
        let bath = reference_bath(100);
        let s = bath.sigma_n();
        let v = Volumes::gaussian(&bath, MeasurementKernel::indicator(1.0).unwrap());
        for e in [-1.0, 0.0, -5.0, 12.0, -30.0] {
            let q = simpson(|x| normal_pdf(x, s), e - 0.5, e + 0.5, 2000);
            let rel = (v.fraction(e) / q - 1.0).abs();
            assert!(rel < 1e-10, "E = {e}: rel = {rel:e}");
        }
    }

    #[test]
    fn gaussian_closed_form_matches_quadrature() {
        let bath = reference_bath(30);
        let s = bath.sigma_n();
        let k = MeasurementKernel::gaussian(1.0).unwrap();
        let v = Volumes::gaussian(&bath, k);
        for e in [0.0, -3.0, 7.5] {
            let q = simpson(
                |x| normal_pdf(x, s) * normal_pdf(e - x, 1.0),
                -14.0 * s,
                14.0 * s,
                20_000,
            );
            assert!((v.fraction(e) / q - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_sum_rule() {
        let bath = reference_bath(12);
        let v = Volumes::exact(&bath, MeasurementKernel::indicator(1.0).unwrap()).unwrap();
        let grid = v.default_grid().unwrap();
        let total: f64 = grid.energies().iter().map(|&e| v.volume(e)).sum();
        assert_eq!(total, 4096.0);
    }

    #[test]
    fn closed_form_sum_rule_on_truncated_grid() {
        let bath = reference_bath(100);
        let v = Volumes::gaussian(&bath, MeasurementKernel::indicator(1.0).unwrap());
        let grid = v.default_grid().unwrap();
        let total: f64 = grid.energies().iter().map(|&e| v.fraction(e)).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn closed_form_close_to_bin_counts() {
        let bath = reference_bath(14);
        let k = MeasurementKernel::indicator(1.0).unwrap();
        let ex = Volumes::exact(&bath, k).unwrap();
        let ga = Volumes::gaussian(&bath, k);
        for e in ex.default_grid().unwrap().energies() {
            let count = ex.volume(e);
            if count >= 100.0 {
                let rel = (ga.volume(e) / count - 1.0).abs();
                assert!(rel < 0.1, "E = {e}: count {count}, rel {rel}");
            }
        }
    }

    #[test]
    fn beta_zero_at_centre() {
        let bath = reference_bath(100);
        let v = Volumes::gaussian(&bath, MeasurementKernel::indicator(1.0).unwrap());
        assert!(v.beta(0.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn beta_uniform_bath_at_minus_eighteen() {
        let bath = BathSpec::uniform(100, 1.0).unwrap();
        let v = Volumes::gaussian(&bath, MeasurementKernel::indicator(1.0).unwrap());
        assert!((v.beta_linear(-18.0) - 0.72).abs() < 1e-14);
        // bin averaging shifts the difference quotient by E dE^2 / (12 sigma^4)
        let reference = 0.717_623_665_643_964_4; // 40-digit erf evaluation
        assert!((v.beta(-18.0).unwrap() - reference).abs() < 1e-12);
        assert!((v.beta(-18.0).unwrap() / 0.72 - 1.0).abs() < 5e-3);
    }

    #[test]
    fn gaussian_kernel_beta_closed_form_vs_difference() {
        let bath = reference_bath(100);
        let v = Volumes::gaussian(&bath, MeasurementKernel::gaussian(1.0).unwrap());
        let h = 1e-4;
        for e in [-10.0, -2.0, 4.0] {
            let fd = (v.entropy(e + h).unwrap() - v.entropy(e - h).unwrap()) / (2.0 * h);
            assert!((fd - v.beta(e).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_gaussian_kernel_beta_vs_difference() {
        let bath = reference_bath(10);
        let v = Volumes::exact(&bath, MeasurementKernel::gaussian(1.0).unwrap()).unwrap();
        let h = 1e-5;
        for e in [-3.0, 0.5, 2.0] {
            let fd = (v.entropy(e + h).unwrap() - v.entropy(e - h).unwrap()) / (2.0 * h);
            assert!((fd - v.beta(e).unwrap()).abs() < 1e-7);
        }
    }

    #[test]
    fn microcanonical_heat_capacity_is_beta_squared_sigma_squared() {
        let bath = reference_bath(100);
        let v = Volumes::gaussian(&bath, MeasurementKernel::gaussian(1.0).unwrap());
        let s2 = bath.variance() + 1.0;
        for e in [-15.0, -5.0, 3.0] {
            let b = v.beta(e).unwrap();
            assert!((v.heat_capacity(e).unwrap() / (b * b * s2) - 1.0).abs() < 1e-9);
        }
        let vi = Volumes::gaussian(&bath, MeasurementKernel::indicator(1.0).unwrap());
        let b = vi.beta(-10.0).unwrap();
        let c = vi.heat_capacity(-10.0).unwrap();
        assert!((c / (b * b * bath.variance()) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn empty_bin_has_no_entropy() {
        let bath = BathSpec::uniform(2, 1.0).unwrap();
        let v = Volumes::exact(&bath, MeasurementKernel::indicator(1.0).unwrap()).unwrap();
        assert!(matches!(
            v.entropy(3.0),
            Err(Error::UndefinedEntropy { .. })
        ));
    }

    #[test]
    fn large_bath_log_volume_is_finite() {
        let bath = reference_bath(1000);
        let v = Volumes::gaussian(&bath, MeasurementKernel::indicator(1.0).unwrap());
        let lv = v.log_volume(-8.0).unwrap();
        assert!(lv.is_finite() && lv > 600.0);
    }
}
