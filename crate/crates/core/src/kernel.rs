//! Imperfect bath-energy measurements.
//!
//! A [`MeasurementKernel`] is the weighting function `W(E | E_i)`: the
//! probability of reading `E` when the bath sits at energy `E_i`. Indicator
//! kernels bin the spectrum into half-open windows `[E - dE/2, E + dE/2)` on
//! the lattice `E = m dE`; Gaussian kernels blur each level with a normal
//! profile of width `dE`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Indicator,
    Gaussian,
}

/// Weighting function `W(E | E_i)` with resolution `delta_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementKernel {
    pub kind: KernelKind,
    pub delta_e: f64,
}

/// Gaussian outputs are integrated on a grid of this many points per `dE`.
pub const GAUSSIAN_POINTS_PER_DELTA: usize = 8;

/// Gaussian output integrals are cut at this many widths from the peak.
const GAUSSIAN_SUPPORT: f64 = 10.0;

impl MeasurementKernel {
    pub fn new(kind: KernelKind, delta_e: f64) -> Result<Self> {
        if !(delta_e > 0.0 && delta_e.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel delta_e must be positive, got {delta_e}"
            )));
        }
        Ok(Self { kind, delta_e })
    }

    pub fn indicator(delta_e: f64) -> Result<Self> {
        Self::new(KernelKind::Indicator, delta_e)
    }

    pub fn gaussian(delta_e: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, delta_e)
    }

    pub fn is_indicator(&self) -> bool {
        self.kind == KernelKind::Indicator
    }

    /// Lattice index of the indicator bin containing `energy`.
    ///
    /// Bins are half-open, so a level sitting exactly on the upper edge of
    /// bin `m` belongs to bin `m + 1`.
    #[inline]
    pub fn bin_index(&self, energy: f64) -> i64 {
        (energy / self.delta_e + 0.5).floor() as i64
    }

    /// `W(E | E_i)`.
    ///
    /// For the indicator kernel `output` is expected on the lattice; the
    /// comparison is made through [`Self::bin_index`] so that the result is
    /// exactly consistent with binning.
    #[inline]
    pub fn weight(&self, output: f64, level: f64) -> f64 {
        match self.kind {
            KernelKind::Indicator => {
                let m = (output / self.delta_e).round() as i64;
                if self.bin_index(level) == m {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => normal_pdf(output - level, self.delta_e),
        }
    }

    /// Output points and trapezoid weights covering every output the kernel
    /// can produce for levels in `[lo, hi]`.
    ///
    /// Indicator: the lattice bins touching the interval, unit weights.
    /// Gaussian: spacing `dE / 8`, extended by ten widths on both sides.
    pub fn output_quadrature(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        match self.kind {
            KernelKind::Indicator => (self.bin_index(lo)..=self.bin_index(hi))
                .map(|m| (m as f64 * self.delta_e, 1.0))
                .collect(),
            KernelKind::Gaussian => {
                let h = self.delta_e / GAUSSIAN_POINTS_PER_DELTA as f64;
                let a = lo - GAUSSIAN_SUPPORT * self.delta_e;
                let b = hi + GAUSSIAN_SUPPORT * self.delta_e;
                let n = ((b - a) / h).ceil() as usize;
                (0..=n)
                    .map(|i| {
                        let w = if i == 0 || i == n { 0.5 * h } else { h };
                        (a + i as f64 * h, w)
                    })
                    .collect()
            }
        }
    }

    /// `|sum_E E W(E|E_i) - E_i|` for a single level.
    pub fn bias_at(&self, level: f64) -> f64 {
        let (num, den) = self
            .output_quadrature(level, level)
            .into_iter()
            .fold((0.0, 0.0), |(n, d), (e, w)| {
                let wt = w * self.weight(e, level);
                (n + e * wt, d + wt)
            });
        (num / den - level).abs()
    }

    /// Worst-case measurement bias over all levels: `dE/2` for binning,
    /// zero for the symmetric Gaussian.
    pub fn bias(&self) -> f64 {
        match self.kind {
            KernelKind::Indicator => 0.5 * self.delta_e,
            KernelKind::Gaussian => 0.0,
        }
    }

    /// Largest observed bias over a set of levels.
    pub fn bias_over(&self, levels: &[f64]) -> f64 {
        levels.iter().map(|&e| self.bias_at(e)).fold(0.0, f64::max)
    }
}

/// Contiguous lattice of indicator outputs `E = m dE`, `m_min <= m <= m_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGrid {
    pub m_min: i64,
    pub m_max: i64,
    delta_e: f64,
}

impl EnergyGrid {
    pub fn new(m_min: i64, m_max: i64, delta_e: f64) -> Result<Self> {
        if m_max < m_min {
            return Err(Error::EmptyGrid);
        }
        if !(delta_e > 0.0) {
            return Err(Error::InvalidParameter(format!("delta_e = {delta_e}")));
        }
        Ok(Self {
            m_min,
            m_max,
            delta_e,
        })
    }

    /// Symmetric grid `[-ceil(width/dE), +ceil(width/dE)] dE`.
    pub fn symmetric(half_width: f64, delta_e: f64) -> Result<Self> {
        let m = (half_width / delta_e).ceil() as i64;
        Self::new(-m, m, delta_e)
    }

    #[inline]
    pub fn delta_e(&self) -> f64 {
        self.delta_e
    }

    #[inline]
    pub fn len(&self) -> usize {
        (self.m_max - self.m_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn energy(&self, i: usize) -> f64 {
        (self.m_min + i as i64) as f64 * self.delta_e()
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.energy(i)).collect()
    }

    /// Position of the lattice point closest to `energy`, if inside the grid.
    pub fn index_of(&self, energy: f64) -> Option<usize> {
        let m = (energy / self.delta_e()).round() as i64;
        (self.m_min..=self.m_max)
            .contains(&m)
            .then(|| (m - self.m_min) as usize)
    }

    pub fn index_of_m(&self, m: i64) -> Option<usize> {
        (self.m_min..=self.m_max)
            .contains(&m)
            .then(|| (m - self.m_min) as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn indicator_weight_at_centre_is_one() {
        let k = MeasurementKernel::indicator(1.0).unwrap();
        assert_eq!(k.weight(3.0, 3.0), 1.0);
        assert_eq!(k.weight(-2.0, -2.0), 1.0);
    }

    #[test]
    fn gaussian_weight_peak() {
        let k = MeasurementKernel::gaussian(1.0).unwrap();
        assert!((k.weight(0.7, 0.7) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn indicator_upper_edge_belongs_to_next_bin() {
        let k = MeasurementKernel::indicator(1.0).unwrap();
        assert_eq!(k.weight(2.0, 2.5), 0.0);
        assert_eq!(k.weight(3.0, 2.5), 1.0);
        // lower edge is inside
        assert_eq!(k.weight(2.0, 1.5), 1.0);
    }

    #[test]
    fn bias_values() {
        let g = MeasurementKernel::gaussian(1.0).unwrap();
        assert_eq!(g.bias(), 0.0);
        assert!(g.bias_over(&[-3.3, 0.1, 7.77]) < 1e-10);
        let ind = MeasurementKernel::indicator(1.0).unwrap();
        assert_eq!(ind.bias(), 0.5);
        assert_eq!(ind.bias_over(&[-3.0, 0.0, 5.0]), 0.0);
        assert!((ind.bias_at(0.3) - 0.3).abs() < 1e-15);
        assert!(ind.bias_over(&[0.49, -0.2]) <= 0.5);
    }

    #[test]
    fn invalid_width_rejected() {
        assert!(MeasurementKernel::indicator(0.0).is_err());
        assert!(MeasurementKernel::gaussian(-1.0).is_err());
    }

    #[test]
    fn grid_indexing() {
        let g = EnergyGrid::symmetric(2.3, 1.0).unwrap();
        assert_eq!(g.len(), 7);
        assert_eq!(g.energy(0), -3.0);
        assert_eq!(g.index_of(0.0), Some(3));
        assert_eq!(g.index_of(4.0), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn partition_of_unity(level in -50.0f64..50.0, de in 0.3f64..2.0) {
            for kind in [KernelKind::Indicator, KernelKind::Gaussian] {
                let k = MeasurementKernel::new(kind, de).unwrap();
                let total: f64 = k
                    .output_quadrature(level, level)
                    .into_iter()
                    .map(|(e, w)| w * k.weight(e, level))
                    .sum();
                prop_assert!((total - 1.0).abs() < 1e-9, "{:?} {}", kind, total);
            }
        }

        #[test]
        fn translation_covariance(level in -20.0f64..20.0, shift in -5i64..5) {
            let s = shift as f64;
            for kind in [KernelKind::Indicator, KernelKind::Gaussian] {
                let k = MeasurementKernel::new(kind, 1.0).unwrap();
                for m in -25i64..25 {
                    let e = m as f64;
                    let a = k.weight(e + s, level + s);
                    let b = k.weight(e, level);
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
