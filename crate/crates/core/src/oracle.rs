//! Closed-system evolution of system plus bath for desk-size instances.
//!
//! The joint basis is `|k> (x) |b>` with index `k * 2^N + b`, system level
//! major and bath bit-vector minor (bit `r` set means spin `r` up). The full
//! Hamiltonian `H = omega_S S^z + H_B + lambda (2 S^x) (x) sum_r c_r sigma^x_r`
//! is real symmetric and diagonalized once.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::bath::{level_energies, BathSpec};
use crate::dynamics::JointDistribution;
use crate::error::{Error, Result};
use crate::kernel::{EnergyGrid, MeasurementKernel};
use crate::system::SystemSpec;

/// Largest joint dimension accepted.
pub const MAX_DIM: usize = 4096;

/// Dense density operator on the joint space.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub system: SystemSpec,
    /// Bath energies in bit-vector order.
    pub bath_levels: Arc<Vec<f64>>,
    pub rho: DMatrix<Complex64>,
}

fn check_dim(system: &SystemSpec, bath: &BathSpec) -> Result<usize> {
    let dim = system
        .dim()
        .checked_mul(1usize.checked_shl(bath.n_spins as u32).unwrap_or(usize::MAX))
        .unwrap_or(usize::MAX);
    if bath.n_spins >= usize::BITS as usize - 1 || dim > MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim,
            limit: MAX_DIM,
        });
    }
    Ok(dim)
}

impl FullState {
    /// `rho_S (x) rho_B` with both factors diagonal in their energy bases.
    pub fn diagonal_product(
        system: SystemSpec,
        bath: &BathSpec,
        p_s: &[f64],
        bath_weights: &[f64],
    ) -> Result<Self> {
        let dim = check_dim(&system, bath)?;
        let levels = Arc::new(level_energies(bath)?);
        if p_s.len() != system.dim() || bath_weights.len() != levels.len() {
            return Err(Error::InvalidParameter("factor sizes do not match".into()));
        }
        let nb = levels.len();
        let diag = DVector::from_fn(dim, |i, _| Complex64::new(p_s[i / nb] * bath_weights[i % nb], 0.0));
        let state = Self {
            system,
            bath_levels: levels,
            rho: DMatrix::from_diagonal(&diag),
        };
        state.check_trace()?;
        Ok(state)
    }

    /// Pure state `|psi><psi|` for a normalized amplitude vector.
    pub fn pure(system: SystemSpec, bath: &BathSpec, psi: &[Complex64]) -> Result<Self> {
        let dim = check_dim(&system, bath)?;
        if psi.len() != dim {
            return Err(Error::InvalidParameter(format!(
                "state vector has {} amplitudes, expected {dim}",
                psi.len()
            )));
        }
        let v = DVector::from_column_slice(psi);
        let state = Self {
            system,
            bath_levels: Arc::new(level_energies(bath)?),
            rho: &v * v.adjoint(),
        };
        state.check_trace()?;
        Ok(state)
    }

    fn check_trace(&self) -> Result<()> {
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { total: tr });
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    /// `tr rho^2`.
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `max |rho - rho^dagger|`.
    pub fn hermiticity_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in 0..=i {
                worst = worst.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.min()
    }

    /// Diagonal of `rho` in the joint product basis.
    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    /// `<k| tr_B rho |k>`.
    pub fn system_populations(&self) -> Vec<f64> {
        let nb = self.bath_levels.len();
        let pop = self.populations();
        (0..self.system.dim())
            .map(|k| pop[k * nb..(k + 1) * nb].iter().sum())
            .collect()
    }
}

/// Bath weights of the microcanonical state `Pi(E) / V(E)` for an indicator bin.
pub fn microcanonical_weights(bath: &BathSpec, kernel: &MeasurementKernel, energy: f64) -> Result<Vec<f64>> {
    let levels = level_energies(bath)?;
    let m = (energy / kernel.delta_e).round() as i64;
    let count = levels.iter().filter(|&&x| kernel.bin_index(x) == m).count();
    if count == 0 {
        return Err(Error::ExcludedBin { energy });
    }
    Ok(levels
        .iter()
        .map(|&x| {
            if kernel.bin_index(x) == m {
                1.0 / count as f64
            } else {
                0.0
            }
        })
        .collect())
}

/// Bath weights `exp(-beta E_b) / Z`.
pub fn thermal_weights(bath: &BathSpec, beta: f64) -> Result<Vec<f64>> {
    let levels = level_energies(bath)?;
    let shift = levels.iter().map(|&e| -beta * e).fold(f64::MIN, f64::max);
    let w: Vec<f64> = levels.iter().map(|&e| (-beta * e - shift).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Dense `H` with its eigendecomposition, reusable across initial states and times.
#[derive(Debug, Clone)]
pub struct ExactPropagator {
    system: SystemSpec,
    bath_levels: Arc<Vec<f64>>,
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
}

/// `H = H_S + H_B + lambda (2 S^x) (x) sum_r c_r sigma^x_r` in the joint basis.
pub fn hamiltonian(system: &SystemSpec, bath: &BathSpec, lambda: f64) -> Result<DMatrix<f64>> {
    let dim = check_dim(system, bath)?;
    let levels = level_energies(bath)?;
    let nb = levels.len();
    let d = system.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for k in 0..d {
        for b in 0..nb {
            h[(k * nb + b, k * nb + b)] = system.level(k) + levels[b];
        }
    }
    if lambda != 0.0 {
        for k in 0..d {
            for q in [k.wrapping_sub(1), k + 1] {
                if q >= d {
                    continue;
                }
                let a = lambda * system.coupling_amplitude(k, q);
                for b in 0..nb {
                    for (r, &c) in bath.couplings.iter().enumerate() {
                        h[(k * nb + b, q * nb + (b ^ (1 << r)))] += a * c;
                    }
                }
            }
        }
    }
    Ok(h)
}

impl ExactPropagator {
    pub fn new(system: SystemSpec, bath: &BathSpec, lambda: f64) -> Result<Self> {
        let h = hamiltonian(&system, bath, lambda)?;
        let eig = SymmetricEigen::new(h);
        Ok(Self {
            system,
            bath_levels: Arc::new(level_energies(bath)?),
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    fn to_eigenbasis(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let u = self.vectors.map(|x| Complex64::new(x, 0.0));
        u.transpose() * rho * &u
    }

    /// `rho(t) = exp(-iHt) rho0 exp(iHt)` at each of `times`.
    pub fn evolve_many(&self, rho0: &FullState, times: &[f64]) -> Result<Vec<FullState>> {
        if rho0.dim() != self.dim() || rho0.system != self.system {
            return Err(Error::InvalidParameter(
                "initial state lives on a different space".into(),
            ));
        }
        let u = self.vectors.map(|x| Complex64::new(x, 0.0));
        let tilde = self.to_eigenbasis(&rho0.rho);
        let d = self.dim();
        Ok(times
            .iter()
            .map(|&t| {
                let phases: Vec<Complex64> = self
                    .energies
                    .iter()
                    .map(|&e| Complex64::from_polar(1.0, -e * t))
                    .collect();
                let rotated = DMatrix::from_fn(d, d, |a, b| tilde[(a, b)] * phases[a] * phases[b].conj());
                FullState {
                    system: self.system,
                    bath_levels: Arc::clone(&self.bath_levels),
                    rho: &u * rotated * u.transpose(),
                }
            })
            .collect())
    }

    pub fn evolve(&self, rho0: &FullState, t: f64) -> Result<FullState> {
        Ok(self.evolve_many(rho0, &[t])?.remove(0))
    }
}

/// `rho(t)` for a single time, diagonalizing `H` on the spot.
pub fn evolve_exact(
    system: SystemSpec,
    bath: &BathSpec,
    lambda: f64,
    rho0: &FullState,
    t: f64,
) -> Result<FullState> {
    ExactPropagator::new(system, bath, lambda)?.evolve(rho0, t)
}

/// `p(k, E) = tr[rho (|k><k| (x) Pi(E))]` on `grid`.
pub fn measure_joint(
    state: &FullState,
    kernel: &MeasurementKernel,
    grid: EnergyGrid,
) -> Result<JointDistribution> {
    if !kernel.is_indicator() {
        return Err(Error::IndicatorRequired);
    }
    let nb = state.bath_levels.len();
    let n = grid.len();
    let pop = state.populations();
    let mut p = vec![0.0; state.system.dim() * n];
    for (idx, x) in pop.into_iter().enumerate() {
        let (k, b) = (idx / nb, idx % nb);
        let e = state.bath_levels[b];
        let i = grid.index_of_m(kernel.bin_index(e)).ok_or_else(|| {
            Error::InvalidParameter(format!("bath level {e} falls outside the grid"))
        })?;
        p[k * n + i] += x;
    }
    JointDistribution::new(state.system, grid, p)
}
