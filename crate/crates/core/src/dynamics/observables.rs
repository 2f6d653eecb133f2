use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{bath_marginal, system_marginal, JointDistribution, RateMatrix};
use crate::bath::{solve_beta_star, GridCanonical};
use crate::error::{Error, Result};
use crate::kernel::EnergyGrid;
use crate::system::SystemSpec;

/// Thermodynamic quantities at one instant.
///
/// `q_dot` is the heat flowing from the bath into the system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub u_s: f64,
    pub u_b: f64,
    pub u: f64,
    pub q_dot: f64,
    pub beta_star: f64,
    pub mutual_info: f64,
    pub clausius_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Emme,
    BmsAdaptive,
    BmsFixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub obs: Observables,
    pub p_s: Vec<f64>,
    /// Bath distribution; canonical at `beta_star` for the BMS levels.
    pub p_e: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub system: SystemSpec,
    pub grid: EnergyGrid,
    pub points: Vec<TrajectoryPoint>,
    /// Full joint vectors, EMME only.
    pub joint: Option<Vec<Vec<f64>>>,
}

/// `sum p ln(p / (p_k p_E))`.
pub fn mutual_information(p: &[f64], d: usize, n: usize) -> f64 {
    let ps = system_marginal(p, d, n);
    let pe = bath_marginal(p, d, n);
    let mut acc = 0.0;
    for k in 0..d {
        for i in 0..n {
            let x = p[k * n + i];
            if x > 0.0 && ps[k] > 0.0 && pe[i] > 0.0 {
                acc += x * (x / (ps[k] * pe[i])).ln();
            }
        }
    }
    acc.max(0.0)
}

/// `dS/dt = -sum pdot ln p` for the Shannon entropy.
///
/// A level that is empty but filling contributes `+inf`; empty and static
/// levels contribute nothing.
pub fn shannon_rate(p: &[f64], p_dot: &[f64]) -> f64 {
    p.iter()
        .zip(p_dot)
        .map(|(&x, &dx)| {
            if x > 0.0 {
                -dx * x.ln()
            } else if dx > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum()
}

/// `int_0^T sum_k |a_k(t) - b_k(t)| dt` by the trapezoid rule on the output times.
pub fn time_integrated_l1(times: &[f64], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let dist: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()).sum())
        .collect();
    times
        .windows(2)
        .zip(dist.windows(2))
        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
        .sum()
}

pub(crate) fn mean(values: &[f64], p: &[f64]) -> f64 {
    values.iter().zip(p).map(|(a, b)| a * b).sum()
}

/// `beta*` at `u_b`, or NaN (with a warning) when no canonical state has that energy.
pub(crate) fn beta_star_or_nan(model: &GridCanonical, u_b: f64) -> f64 {
    match solve_beta_star(model, u_b) {
        Ok(b) => b.beta,
        Err(e) => {
            log::warn!("beta* undefined: {e}");
            f64::NAN
        }
    }
}

impl Trajectory {
    /// Observables along an EMME run.
    pub fn from_emme(
        m: &RateMatrix,
        canonical: &GridCanonical,
        times: &[f64],
        states: &[JointDistribution],
    ) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidParameter("times and states differ in length".into()));
        }
        let d = m.system.dim();
        let n = m.n_bins();
        let levels = m.system.levels();
        let energies = m.grid.energies();
        let mut dp = vec![0.0; m.dim()];
        let points = times
            .iter()
            .zip(states)
            .map(|(&t, st)| {
                m.apply(&st.p, &mut dp);
                let p_s = system_marginal(&st.p, d, n);
                let p_e = bath_marginal(&st.p, d, n);
                let dp_s = system_marginal(&dp, d, n);
                let dp_e = bath_marginal(&dp, d, n);
                let u_s = mean(&levels, &p_s);
                let u_b = mean(&energies, &p_e);
                let q_dot = -mean(&energies, &dp_e);
                let beta_star = beta_star_or_nan(canonical, u_b);
                TrajectoryPoint {
                    t,
                    obs: Observables {
                        u_s,
                        u_b,
                        u: u_s + u_b,
                        q_dot,
                        beta_star,
                        mutual_info: mutual_information(&st.p, d, n),
                        clausius_rate: shannon_rate(&p_s, &dp_s) - beta_star * q_dot,
                    },
                    p_s,
                    p_e,
                }
            })
            .collect();
        Ok(Self {
            kind: TrajectoryKind::Emme,
            system: m.system,
            grid: m.grid,
            points,
            joint: Some(states.iter().map(|s| s.p.clone()).collect()),
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn system_populations(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.p_s.clone()).collect()
    }

    pub fn beta_stars(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.obs.beta_star).collect()
    }

    /// Columns `t, U_S, U_B, U, Q_dot, beta_star, mutual_info, clausius_rate,
    /// p_k_0.., p_E_<E>..`, floats with 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut header = String::from("t,U_S,U_B,U,Q_dot,beta_star,mutual_info,clausius_rate");
        for k in 0..self.system.dim() {
            header.push_str(&format!(",p_k_{k}"));
        }
        for e in self.grid.energies() {
            header.push_str(&format!(",p_E_{e}"));
        }
        writeln!(out, "{header}")?;
        for pt in &self.points {
            let o = &pt.obs;
            let mut row = [pt.t, o.u_s, o.u_b, o.u, o.q_dot, o.beta_star, o.mutual_info, o.clausius_rate]
                .iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>();
            row.extend(pt.p_s.iter().chain(&pt.p_e).map(|x| format!("{x:.16e}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// One row per time and joint entry: `t,k,E,p`.
    pub fn write_joint_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let Some(joint) = &self.joint else {
            return Ok(());
        };
        writeln!(out, "t,k,E,p")?;
        let n = self.grid.len();
        for (pt, p) in self.points.iter().zip(joint) {
            for (s, x) in p.iter().enumerate() {
                writeln!(out, "{:.16e},{},{:.16e},{:.16e}", pt.t, s / n, self.grid.energy(s % n), x)?;
            }
        }
        Ok(())
    }
}
