//! Population dynamics: the microcanonical rate equation on the joint
//! (system level, bath bin) space and its two canonical reductions.
//!
//! Joint vectors are stored system-major: entry `k * n_bins + i` holds
//! `p(eps_k, E_i)`.

mod bms;
mod emme;
mod observables;
mod rate_matrix;

pub use bms::{
    adaptive_stationary, evolve_bms_adaptive, evolve_bms_fixed, gibbs_populations,
    resolved_beta_stars, BathStart, BetaUpdate, BmsSetup,
};
pub use emme::{evolve_emme, stationary_by_eigen, stationary_distribution, EmmeMethod, Propagator};
pub use observables::{
    mutual_information, shannon_rate, time_integrated_l1, Observables, Trajectory,
    TrajectoryKind, TrajectoryPoint,
};
pub use rate_matrix::RateMatrix;

use serde::{Deserialize, Serialize};

use crate::bath::{GridCanonical, Volumes};
use crate::error::{Error, Result};
use crate::kernel::EnergyGrid;
use crate::system::SystemSpec;

/// Normalization tolerance for probability vectors.
pub const NORM_TOL: f64 = 1e-9;

/// `p(eps_k, E)` on a system x grid product space.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub system: SystemSpec,
    pub grid: EnergyGrid,
    pub p: Vec<f64>,
}

impl JointDistribution {
    pub fn new(system: SystemSpec, grid: EnergyGrid, p: Vec<f64>) -> Result<Self> {
        if p.len() != system.dim() * grid.len() {
            return Err(Error::InvalidParameter(format!(
                "joint vector has {} entries, expected {}",
                p.len(),
                system.dim() * grid.len()
            )));
        }
        check_normalized(&p)?;
        Ok(Self { system, grid, p })
    }

    /// `p(k) p(E)`.
    pub fn product(system: SystemSpec, grid: EnergyGrid, p_s: &[f64], p_e: &[f64]) -> Result<Self> {
        if p_s.len() != system.dim() || p_e.len() != grid.len() {
            return Err(Error::InvalidParameter("marginal lengths do not match".into()));
        }
        let p = p_s
            .iter()
            .flat_map(|&a| p_e.iter().map(move |&b| a * b))
            .collect();
        Self::new(system, grid, p)
    }

    pub fn n_bins(&self) -> usize {
        self.grid.len()
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.p[k * self.grid.len() + i]
    }

    pub fn system_marginal(&self) -> Vec<f64> {
        system_marginal(&self.p, self.system.dim(), self.grid.len())
    }

    pub fn bath_marginal(&self) -> Vec<f64> {
        bath_marginal(&self.p, self.system.dim(), self.grid.len())
    }

    pub fn mutual_information(&self) -> f64 {
        mutual_information(&self.p, self.system.dim(), self.grid.len())
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).sum()
    }
}

pub(crate) fn check_normalized(p: &[f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORM_TOL || p.iter().any(|&x| !(x >= -NORM_TOL)) {
        return Err(Error::NotNormalized { total });
    }
    Ok(())
}

pub(crate) fn system_marginal(p: &[f64], d: usize, n: usize) -> Vec<f64> {
    (0..d).map(|k| p[k * n..(k + 1) * n].iter().sum()).collect()
}

pub(crate) fn bath_marginal(p: &[f64], d: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| (0..d).map(|k| p[k * n + i]).sum()).collect()
}

/// Point mass on system level `k`.
pub fn system_basis_state(system: &SystemSpec, k: usize) -> Result<Vec<f64>> {
    if k >= system.dim() {
        return Err(Error::InvalidParameter(format!(
            "level {k} outside 0..{}",
            system.dim()
        )));
    }
    let mut p = vec![0.0; system.dim()];
    p[k] = 1.0;
    Ok(p)
}

/// Bath distribution `p(E) ~ V(E) exp(-beta E)` on the grid.
pub fn canonical_bath(volumes: &Volumes, grid: EnergyGrid, beta: f64) -> Result<Vec<f64>> {
    Ok(GridCanonical::new(volumes, grid)?.probabilities(beta))
}

/// Bath prepared in the microcanonical state of the bin at `energy`.
pub fn microcanonical_bath(volumes: &Volumes, grid: EnergyGrid, energy: f64) -> Result<Vec<f64>> {
    let i = grid.index_of(energy).ok_or_else(|| {
        Error::InvalidParameter(format!("energy {energy} lies outside the grid"))
    })?;
    if volumes.fraction(grid.energy(i)) <= 0.0 {
        return Err(Error::ExcludedBin { energy });
    }
    let mut p = vec![0.0; grid.len()];
    p[i] = 1.0;
    Ok(p)
}

/// `beta*` of the grid canonical family at bath energy `u_b`.
pub fn beta_star_of(model: &GridCanonical, u_b: f64) -> Result<f64> {
    Ok(crate::bath::solve_beta_star(model, u_b)?.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

/// Output times `0 = t_0 < t_1 < ... < t_max`.
///
/// Log spacing puts `t_1 = t_max * 10^-LOG_DECADES` and spaces the remaining
/// points geometrically up to `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Linear
}

pub const LOG_DECADES: f64 = 4.0;

impl TimeGrid {
    pub fn linear(t_max: f64, n_points: usize) -> Self {
        Self {
            t_max,
            n_points,
            spacing: Spacing::Linear,
        }
    }

    pub fn times(&self) -> Result<Vec<f64>> {
        if !(self.t_max > 0.0 && self.t_max.is_finite()) || self.n_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs t_max > 0 and at least 2 points, got {self:?}"
            )));
        }
        let n = self.n_points;
        Ok(match self.spacing {
            Spacing::Linear => (0..n)
                .map(|i| self.t_max * i as f64 / (n - 1) as f64)
                .collect(),
            Spacing::Log => {
                let mut t = vec![0.0];
                if n == 2 {
                    t.push(self.t_max);
                } else {
                    let lo = self.t_max.log10() - LOG_DECADES;
                    let hi = self.t_max.log10();
                    t.extend((0..n - 1).map(|i| {
                        if i == n - 2 {
                            self.t_max
                        } else {
                            10f64.powf(lo + (hi - lo) * i as f64 / (n - 2) as f64)
                        }
                    }));
                }
                t
            }
        })
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "output times must be non-negative and strictly increasing".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (SystemSpec, EnergyGrid) {
        (
            SystemSpec::new(1.0, 1.0).unwrap(),
            EnergyGrid::new(-2, 2, 1.0).unwrap(),
        )
    }

    #[test]
    fn product_marginals() {
        let (s, g) = setup();
        let p_s = [0.2, 0.3, 0.5];
        let p_e = [0.1, 0.2, 0.4, 0.2, 0.1];
        let j = JointDistribution::product(s, g, &p_s, &p_e).unwrap();
        for (a, b) in j.system_marginal().iter().zip(p_s) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in j.bath_marginal().iter().zip(p_e) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(j.mutual_information().abs() < 1e-15);
        assert_eq!(j.get(2, 2), 0.5 * 0.4);
    }

    #[test]
    fn rejects_bad_vectors() {
        let (s, g) = setup();
        assert!(matches!(
            JointDistribution::new(s, g, vec![0.1; 15]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(JointDistribution::new(s, g, vec![0.1; 14]).is_err());
        let mut p = vec![0.0; 15];
        p[0] = 1.1;
        p[1] = -0.1;
        assert!(JointDistribution::new(s, g, p).is_err());
    }

    #[test]
    fn time_grids() {
        let lin = TimeGrid::linear(2.0, 5).times().unwrap();
        assert_eq!(lin, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let log = TimeGrid {
            t_max: 100.0,
            n_points: 6,
            spacing: Spacing::Log,
        }
        .times()
        .unwrap();
        assert_eq!(log[0], 0.0);
        assert!((log[1] - 1e-2).abs() < 1e-15);
        assert!((log[3] - 1.0).abs() < 1e-12);
        assert_eq!(*log.last().unwrap(), 100.0);
        assert!(log.windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::linear(0.0, 4).times().is_err());
        assert!(TimeGrid::linear(1.0, 1).times().is_err());
    }

    #[test]
    fn microcanonical_start_checks_grid() {
        let bath = crate::bath::BathSpec::uniform(4, 1.0).unwrap();
        let k = crate::kernel::MeasurementKernel::indicator(1.0).unwrap();
        let v = Volumes::exact(&bath, k).unwrap();
        let g = EnergyGrid::new(-3, 3, 1.0).unwrap();
        let p = microcanonical_bath(&v, g, -1.0).unwrap();
        assert_eq!(p[2], 1.0);
        assert!(microcanonical_bath(&v, g, 9.0).is_err());
        // uniform N=4 only has levels at -2..=2
        assert!(matches!(
            microcanonical_bath(&v, g, 3.0),
            Err(Error::ExcludedBin { .. })
        ));
    }
}
