//! Canonical bath ensembles and the nonequilibrium temperature `beta*`.

use super::{BathSpec, Volumes};
use crate::error::{Error, Result};
use crate::kernel::EnergyGrid;
use crate::special::{ln_2cosh, log_sum_exp, sech2};

/// A canonical family `pi_B(beta)` with monotone mean energy.
pub trait CanonicalModel {
    /// `<E>_beta`.
    fn mean_energy(&self, beta: f64) -> f64;
    /// `-d<E>_beta/dbeta`, the energy variance; never negative.
    fn energy_slope(&self, beta: f64) -> f64;
    fn log_partition(&self, beta: f64) -> f64;
    /// Infimum and supremum of attainable mean energies.
    fn energy_bounds(&self) -> (f64, f64);
    /// Natural energy scale, used for solver tolerances.
    fn energy_scale(&self) -> f64;

    /// `C(beta) = beta^2 (-d<E>/dbeta)`.
    fn heat_capacity(&self, beta: f64) -> f64 {
        beta * beta * self.energy_slope(beta)
    }
}

/// Closed forms for independent spins.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinCanonical {
    half_splittings: Vec<f64>,
}

impl SpinCanonical {
    pub fn new(bath: &BathSpec) -> Self {
        Self {
            half_splittings: bath.zeeman.iter().map(|w| 0.5 * w).collect(),
        }
    }
}

impl CanonicalModel for SpinCanonical {
    fn mean_energy(&self, beta: f64) -> f64 {
        -self
            .half_splittings
            .iter()
            .map(|&h| h * (beta * h).tanh())
            .sum::<f64>()
    }

    fn energy_slope(&self, beta: f64) -> f64 {
        self.half_splittings
            .iter()
            .map(|&h| h * h * sech2(beta * h))
            .sum()
    }

    fn log_partition(&self, beta: f64) -> f64 {
        self.half_splittings.iter().map(|&h| ln_2cosh(beta * h)).sum()
    }

    fn energy_bounds(&self) -> (f64, f64) {
        let m: f64 = self.half_splittings.iter().sum();
        (-m, m)
    }

    fn energy_scale(&self) -> f64 {
        self.half_splittings.iter().map(|h| h * h).sum::<f64>().sqrt()
    }
}

/// Discretized canonical state `p(E) ~ V(E) exp(-beta E)` on an indicator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCanonical {
    grid: EnergyGrid,
    /// Grid positions with nonzero volume.
    active: Vec<usize>,
    energies: Vec<f64>,
    log_volumes: Vec<f64>,
    scale: f64,
}

impl GridCanonical {
    pub fn new(volumes: &Volumes, grid: EnergyGrid) -> Result<Self> {
        let mut active = Vec::new();
        let mut energies = Vec::new();
        let mut log_volumes = Vec::new();
        for i in 0..grid.len() {
            let e = grid.energy(i);
            if let Ok(lv) = volumes.log_volume(e) {
                active.push(i);
                energies.push(e);
                log_volumes.push(lv);
            }
        }
        if active.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut model = Self {
            grid,
            active,
            energies,
            log_volumes,
            scale: 1.0,
        };
        model.scale = model.energy_slope(0.0).sqrt().max(f64::MIN_POSITIVE);
        Ok(model)
    }

    pub fn grid(&self) -> EnergyGrid {
        self.grid
    }

    fn weights(&self, beta: f64) -> Vec<f64> {
        let lw: Vec<f64> = self
            .log_volumes
            .iter()
            .zip(&self.energies)
            .map(|(lv, e)| lv - beta * e)
            .collect();
        let norm = log_sum_exp(lw.iter().copied());
        lw.into_iter().map(|x| (x - norm).exp()).collect()
    }

    /// Normalized thermal distribution over every grid point.
    pub fn probabilities(&self, beta: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.grid.len()];
        for (&i, w) in self.active.iter().zip(self.weights(beta)) {
            p[i] = w;
        }
        p
    }

    /// Thermal average of a per-bin quantity `f(E)`.
    pub fn average(&self, beta: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.weights(beta)
            .iter()
            .zip(&self.energies)
            .map(|(w, &e)| w * f(e))
            .sum()
    }
}

impl CanonicalModel for GridCanonical {
    fn mean_energy(&self, beta: f64) -> f64 {
        self.average(beta, |e| e)
    }

    fn energy_slope(&self, beta: f64) -> f64 {
        let w = self.weights(beta);
        let mean: f64 = w.iter().zip(&self.energies).map(|(w, e)| w * e).sum();
        w.iter()
            .zip(&self.energies)
            .map(|(w, e)| w * (e - mean) * (e - mean))
            .sum()
    }

    fn log_partition(&self, beta: f64) -> f64 {
        let lw: Vec<f64> = self
            .log_volumes
            .iter()
            .zip(&self.energies)
            .map(|(lv, e)| lv - beta * e)
            .collect();
        log_sum_exp(lw.iter().copied())
    }

    fn energy_bounds(&self) -> (f64, f64) {
        (self.energies[0], *self.energies.last().unwrap())
    }

    fn energy_scale(&self) -> f64 {
        self.scale
    }
}

/// Result of inverting `<E>_beta = U_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaStar {
    pub beta: f64,
    /// Set when `U_B` lies above the infinite-temperature energy.
    pub negative_temperature: bool,
}

/// Root of `<E>_beta = target` to `1e-10` of the model's energy scale.
pub fn solve_beta_star<M: CanonicalModel + ?Sized>(model: &M, target: f64) -> Result<BetaStar> {
    solve_beta_star_with_tolerance(model, target, 1e-10 * model.energy_scale())
}

/// Safeguarded Newton iteration inside an expanding bracket.
pub fn solve_beta_star_with_tolerance<M: CanonicalModel + ?Sized>(
    model: &M,
    target: f64,
    tol: f64,
) -> Result<BetaStar> {
    let (lower, upper) = model.energy_bounds();
    if !(target > lower && target < upper) {
        return Err(Error::UnattainableEnergy {
            target,
            lower,
            upper,
        });
    }
    let f = |b: f64| model.mean_energy(b) - target;
    let f0 = f(0.0);
    if f0.abs() <= tol {
        return Ok(BetaStar {
            beta: 0.0,
            negative_temperature: false,
        });
    }
    // f is decreasing: positive f means beta must grow
    let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
    let (mut lo, mut hi) = (0.0_f64, dir);
    while f(hi) * dir > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi.abs() > 1e12 {
            return Err(Error::UnattainableEnergy {
                target,
                lower,
                upper,
            });
        }
    }
    // invariant: f(lo)*dir > 0 >= f(hi)*dir
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() <= tol {
            return Ok(BetaStar {
                beta: x,
                negative_temperature: x < 0.0,
            });
        }
        if fx * dir > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = model.energy_slope(x);
        let newton = x + fx / slope;
        let inside = (newton - lo) * (newton - hi) < 0.0;
        x = if slope > 0.0 && inside {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    let fx = f(x);
    if fx.abs() <= tol {
        Ok(BetaStar {
            beta: x,
            negative_temperature: x < 0.0,
        })
    } else {
        Err(Error::Integration(format!(
            "beta* iteration stalled at beta = {x}, residual {fx:e}"
        )))
    }
}
