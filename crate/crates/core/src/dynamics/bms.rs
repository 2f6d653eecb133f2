use serde::{Deserialize, Serialize};

use super::observables::{beta_star_or_nan, mean};
use super::{check_normalized, check_times, shannon_rate, Observables, Trajectory, TrajectoryKind, TrajectoryPoint};
use crate::bath::{solve_beta_star, CanonicalModel, GridCanonical};
use crate::correlation::RateEngine;
use crate::error::{Error, Result};
use crate::kernel::EnergyGrid;
use crate::ode::{integrate, OdeOptions};
use crate::system::SystemSpec;

/// Energy variances below this fraction of the infinite-temperature variance
/// are treated as a vanishing heat capacity.
const STIFF_VARIANCE: f64 = 1e-12;

/// Initial bath condition for the adaptive-temperature equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BathStart {
    /// Canonical at this inverse temperature.
    Beta(f64),
    /// Any state with this mean energy; `beta*(0)` is solved for.
    Energy(f64),
}

/// How `beta*(t)` follows the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaUpdate {
    /// Re-solve `<E>_beta = U_B(0) - (U_S(t) - U_S(0))` at every evaluation.
    #[default]
    Resolve,
    /// Integrate `d beta/dt = beta^2 Qdot / C(beta)` alongside the populations.
    Integrate,
}

/// Per-bin `kappa(E; +-omega_S)` and the grid canonical family they are averaged over.
///
/// Like the rate matrix, `kappa` only counts transitions that stay on the
/// grid, which keeps the thermal averages in exact detailed balance.
#[derive(Debug, Clone)]
pub struct BmsSetup {
    pub system: SystemSpec,
    pub canonical: GridCanonical,
    kappa_emit: Vec<f64>,
    kappa_absorb: Vec<f64>,
}

impl BmsSetup {
    pub fn new(system: SystemSpec, engine: &RateEngine, grid: EnergyGrid) -> Result<Self> {
        let canonical = GridCanonical::new(engine.volumes(), grid)?;
        let w = system.omega_s();
        let live: Vec<bool> = (0..grid.len())
            .map(|i| engine.volumes().fraction(grid.energy(i)) > 0.0)
            .collect();
        // kappa(E; omega) restricted to outputs on the grid, as in the rate matrix
        let per_bin = |omega: f64| -> Result<Vec<f64>> {
            (0..grid.len())
                .map(|i| {
                    if !live[i] {
                        return Ok(0.0);
                    }
                    let e = grid.energy(i);
                    let d = grid.delta_e();
                    let lo = engine.kernel().bin_index(e + omega - d);
                    let hi = engine.kernel().bin_index(e + omega + d);
                    let mut total = 0.0;
                    for m in lo..=hi {
                        if let Some(j) = grid.index_of_m(m).filter(|&j| live[j]) {
                            total += engine.gamma1(grid.energy(j), e, omega)?;
                        }
                    }
                    Ok(total)
                })
                .collect()
        };
        Ok(Self {
            system,
            canonical,
            kappa_emit: per_bin(w)?,
            kappa_absorb: per_bin(-w)?,
        })
    }

    pub fn grid(&self) -> EnergyGrid {
        self.canonical.grid()
    }

    /// `(kappa_beta(+omega_S), kappa_beta(-omega_S))`.
    pub fn kappa_beta(&self, beta: f64) -> (f64, f64) {
        let p = self.canonical.probabilities(beta);
        (mean(&self.kappa_emit, &p), mean(&self.kappa_absorb, &p))
    }

    /// Population rate equation with the two thermal rates.
    fn rhs(&self, p: &[f64], rates: (f64, f64), dp: &mut [f64]) -> Result<()> {
        let d = self.system.dim();
        dp.fill(0.0);
        for q in 0..d {
            for k in [q.wrapping_sub(1), q + 1] {
                if k >= d {
                    continue;
                }
                // q -> k emits eps_q - eps_k into the bath
                let rate = self.system.coupling_element(k, q)?
                    * if k < q { rates.0 } else { rates.1 };
                dp[k] += rate * p[q];
                dp[q] -= rate * p[q];
            }
        }
        Ok(())
    }

    fn stiffness_check(&self, beta: f64) -> Result<f64> {
        let var = self.canonical.energy_slope(beta);
        let scale = self.canonical.energy_scale();
        if !(var > STIFF_VARIANCE * scale * scale) {
            return Err(Error::Stiffness { beta });
        }
        Ok(var)
    }

    fn point(&self, t: f64, p_s: Vec<f64>, beta: f64, u_b: f64, dp_s: &[f64]) -> TrajectoryPoint {
        let levels = self.system.levels();
        let u_s = mean(&levels, &p_s);
        let q_dot = mean(&levels, dp_s);
        TrajectoryPoint {
            t,
            obs: Observables {
                u_s,
                u_b,
                u: u_s + u_b,
                q_dot,
                beta_star: beta,
                mutual_info: 0.0,
                clausius_rate: shannon_rate(&p_s, dp_s) - beta * q_dot,
            },
            p_e: self.canonical.probabilities(beta),
            p_s,
        }
    }
}

fn check_system_start(setup: &BmsSetup, p_s0: &[f64], times: &[f64]) -> Result<()> {
    if p_s0.len() != setup.system.dim() {
        return Err(Error::InvalidParameter(format!(
            "system populations have {} entries, expected {}",
            p_s0.len(),
            setup.system.dim()
        )));
    }
    check_normalized(p_s0)?;
    check_times(times)
}

/// Rate equation at the fixed inverse temperature `beta0`.
pub fn evolve_bms_fixed(setup: &BmsSetup, beta0: f64, p_s0: &[f64], times: &[f64]) -> Result<Trajectory> {
    if !beta0.is_finite() {
        return Err(Error::InvalidParameter(format!("beta0 = {beta0}")));
    }
    check_system_start(setup, p_s0, times)?;
    let rates = setup.kappa_beta(beta0);
    let states = integrate(|_, y, dy| setup.rhs(y, rates, dy), 0.0, p_s0, times, &OdeOptions::default())?;
    let u_b = setup.canonical.mean_energy(beta0);
    let mut dp = vec![0.0; p_s0.len()];
    let points = times
        .iter()
        .zip(states)
        .map(|(&t, p)| {
            setup.rhs(&p, rates, &mut dp)?;
            Ok(setup.point(t, p, beta0, u_b, &dp))
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory {
        kind: TrajectoryKind::BmsFixed,
        system: setup.system,
        grid: setup.grid(),
        points,
        joint: None,
    })
}

/// Rate equation with `kappa` averaged at the nonequilibrium temperature `beta*(t)`.
pub fn evolve_bms_adaptive(
    setup: &BmsSetup,
    start: BathStart,
    p_s0: &[f64],
    times: &[f64],
    update: BetaUpdate,
) -> Result<Trajectory> {
    check_system_start(setup, p_s0, times)?;
    let (beta0, u_b0) = match start {
        BathStart::Beta(b) => (b, setup.canonical.mean_energy(b)),
        BathStart::Energy(u) => (solve_beta_star(&setup.canonical, u)?.beta, u),
    };
    let levels = setup.system.levels();
    let u_s0 = mean(&levels, p_s0);
    let d = setup.system.dim();
    let bath_energy = |p: &[f64]| u_b0 - (mean(&levels, p) - u_s0);
    let solve = |p: &[f64]| -> Result<f64> {
        let beta = solve_beta_star(&setup.canonical, bath_energy(p))?.beta;
        setup.stiffness_check(beta)?;
        Ok(beta)
    };

    let mut dp = vec![0.0; d];
    let points: Vec<TrajectoryPoint> = match update {
        BetaUpdate::Resolve => {
            let states = integrate(
                |_, y, dy| {
                    let beta = solve(y)?;
                    setup.rhs(y, setup.kappa_beta(beta), dy)
                },
                0.0,
                p_s0,
                times,
                &OdeOptions::default(),
            )?;
            times
                .iter()
                .zip(states)
                .map(|(&t, p)| {
                    let beta = if t == 0.0 { beta0 } else { solve(&p)? };
                    setup.rhs(&p, setup.kappa_beta(beta), &mut dp)?;
                    let u_b = bath_energy(&p);
                    Ok(setup.point(t, p, beta, u_b, &dp))
                })
                .collect::<Result<_>>()?
        }
        BetaUpdate::Integrate => {
            let mut y0 = p_s0.to_vec();
            y0.push(beta0);
            let states = integrate(
                |_, y, dy| {
                    let beta = y[d];
                    let var = setup.stiffness_check(beta)?;
                    setup.rhs(&y[..d], setup.kappa_beta(beta), &mut dy[..d])?;
                    // d<E>/dbeta = -var and dU_B/dt = -Qdot
                    dy[d] = mean(&levels, &dy[..d]) / var;
                    Ok(())
                },
                0.0,
                &y0,
                times,
                &OdeOptions::default(),
            )?;
            times
                .iter()
                .zip(states)
                .map(|(&t, mut y)| {
                    let beta = y.pop().unwrap();
                    setup.rhs(&y, setup.kappa_beta(beta), &mut dp)?;
                    let u_b = bath_energy(&y);
                    Ok(setup.point(t, y, beta, u_b, &dp))
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(Trajectory {
        kind: TrajectoryKind::BmsAdaptive,
        system: setup.system,
        grid: setup.grid(),
        points,
        joint: None,
    })
}

/// Gibbs populations `exp(-beta eps_k) / Z` over the system levels.
pub fn gibbs_populations(system: &SystemSpec, beta: f64) -> Vec<f64> {
    let levels = system.levels();
    let shift = levels.iter().map(|&e| -beta * e).fold(f64::MIN, f64::max);
    let w: Vec<f64> = levels.iter().map(|&e| (-beta * e - shift).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Long-time state of the adaptive equation: system Gibbs at the `beta*`
/// for which `<E>_beta + U_S(beta)` equals the initial total energy.
pub fn adaptive_stationary(setup: &BmsSetup, start: BathStart, p_s0: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_normalized(p_s0)?;
    let levels = setup.system.levels();
    let u_b0 = match start {
        BathStart::Beta(b) => setup.canonical.mean_energy(b),
        BathStart::Energy(u) => u,
    };
    let total = u_b0 + mean(&levels, p_s0);
    let excess = |b: f64| {
        setup.canonical.mean_energy(b) + mean(&levels, &gibbs_populations(&setup.system, b)) - total
    };
    // excess decreases in beta
    let (mut lo, mut hi) = (-1.0, 1.0);
    while excess(lo) < 0.0 {
        lo *= 2.0;
        if lo < -1e6 {
            return Err(Error::Stiffness { beta: lo });
        }
    }
    while excess(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Stiffness { beta: hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    let beta = 0.5 * (lo + hi);
    Ok((beta, gibbs_populations(&setup.system, beta)))
}

/// `beta*` of every point recomputed from its bath energy.
pub fn resolved_beta_stars(setup: &BmsSetup, traj: &Trajectory) -> Vec<f64> {
    traj.points
        .iter()
        .map(|p| beta_star_or_nan(&setup.canonical, p.obs.u_b))
        .collect()
}
