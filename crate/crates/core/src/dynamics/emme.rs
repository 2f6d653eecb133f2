use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{check_normalized, check_times, JointDistribution, RateMatrix};
use crate::error::{Error, Result};
use crate::ode::{integrate, OdeOptions};

/// Blocks whose `ln V` spans more than this use the matrix exponential
/// instead of the symmetrized eigendecomposition.
const MAX_LOG_VOLUME_SPAN: f64 = 40.0;

/// Eigenvalues this close to zero (relative to the block's largest) count as null.
const NULL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmmeMethod {
    /// Per-block propagator from a symmetric eigendecomposition.
    #[default]
    Eigen,
    /// Adaptive Runge-Kutta on the full vector.
    Ode,
}

#[derive(Debug, Clone)]
enum Block {
    Inert(usize),
    /// `Lambda = D^{1/2} U diag(w) U^T D^{-1/2}` with `D = diag(V)`.
    Eigen {
        states: Vec<usize>,
        sqrt_v: Vec<f64>,
        values: DVector<f64>,
        vectors: DMatrix<f64>,
    },
    Dense {
        states: Vec<usize>,
        generator: DMatrix<f64>,
    },
}

/// Cached `exp(Lambda t)` factorized over the connected components of `Lambda`.
#[derive(Debug, Clone)]
pub struct Propagator {
    dim: usize,
    blocks: Vec<Block>,
}

impl Propagator {
    pub fn new(m: &RateMatrix) -> Self {
        let blocks = m
            .components()
            .iter()
            .map(|states| {
                if states.len() == 1 {
                    return Block::Inert(states[0]);
                }
                let local = block_generator(m, states);
                let logs: Vec<f64> = states.iter().map(|&s| m.volume_fraction(s).ln()).collect();
                let span = logs.iter().cloned().fold(f64::MIN, f64::max)
                    - logs.iter().cloned().fold(f64::MAX, f64::min);
                if span > MAX_LOG_VOLUME_SPAN {
                    return Block::Dense {
                        states: states.clone(),
                        generator: local,
                    };
                }
                let sqrt_v: Vec<f64> = states.iter().map(|&s| m.volume_fraction(s).sqrt()).collect();
                let sym = symmetrize(&local, &sqrt_v);
                let eig = SymmetricEigen::new(sym);
                Block::Eigen {
                    states: states.clone(),
                    sqrt_v,
                    values: eig.eigenvalues,
                    vectors: eig.eigenvectors,
                }
            })
            .collect();
        Self {
            dim: m.dim(),
            blocks,
        }
    }

    /// `exp(Lambda t) p0`.
    pub fn propagate(&self, p0: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for block in &self.blocks {
            match block {
                Block::Inert(s) => out[*s] = p0[*s],
                Block::Eigen {
                    states,
                    sqrt_v,
                    values,
                    vectors,
                } => {
                    if states.iter().all(|&s| p0[s] == 0.0) {
                        continue;
                    }
                    let y = DVector::from_iterator(
                        states.len(),
                        states.iter().zip(sqrt_v).map(|(&s, r)| p0[s] / r),
                    );
                    let mut z = vectors.tr_mul(&y);
                    for (zi, w) in z.iter_mut().zip(values.iter()) {
                        *zi *= (w * t).exp();
                    }
                    let y = vectors * z;
                    for ((&s, r), v) in states.iter().zip(sqrt_v).zip(y.iter()) {
                        out[s] = r * v;
                    }
                }
                Block::Dense { states, generator } => {
                    if states.iter().all(|&s| p0[s] == 0.0) {
                        continue;
                    }
                    let x = DVector::from_iterator(states.len(), states.iter().map(|&s| p0[s]));
                    let y = (generator * t).exp() * x;
                    for (&s, v) in states.iter().zip(y.iter()) {
                        out[s] = *v;
                    }
                }
            }
        }
        out
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }
}

fn block_generator(m: &RateMatrix, states: &[usize]) -> DMatrix<f64> {
    let n = states.len();
    DMatrix::from_fn(n, n, |a, b| m.entry(states[a], states[b]))
}

/// `D^{-1/2} Lambda D^{1/2}`, symmetric under detailed balance; the two
/// triangles are averaged to remove rounding asymmetry.
fn symmetrize(local: &DMatrix<f64>, sqrt_v: &[f64]) -> DMatrix<f64> {
    let n = local.nrows();
    let s = DMatrix::from_fn(n, n, |a, b| local[(a, b)] * sqrt_v[b] / sqrt_v[a]);
    (&s + s.transpose()) * 0.5
}

/// Joint distribution at each of `times`.
pub fn evolve_emme(
    m: &RateMatrix,
    p0: &JointDistribution,
    times: &[f64],
    method: EmmeMethod,
) -> Result<Vec<JointDistribution>> {
    check_normalized(&p0.p)?;
    if p0.p.len() != m.dim() {
        return Err(Error::InvalidParameter(
            "initial state does not match the rate matrix".into(),
        ));
    }
    check_times(times)?;
    let states = match method {
        EmmeMethod::Eigen => {
            let prop = Propagator::new(m);
            times.iter().map(|&t| prop.propagate(&p0.p, t)).collect()
        }
        EmmeMethod::Ode => integrate(
            |_, y, dy| {
                m.apply(y, dy);
                Ok(())
            },
            0.0,
            &p0.p,
            times,
            &OdeOptions::default(),
        )?,
    };
    Ok(states
        .into_iter()
        .map(|p| JointDistribution {
            system: m.system,
            grid: m.grid,
            p,
        })
        .collect())
}

/// Long-time limit: within each connected block `p ~ V(E)`, carrying the
/// block's initial mass.
pub fn stationary_distribution(m: &RateMatrix, p0: &JointDistribution) -> Result<JointDistribution> {
    check_normalized(&p0.p)?;
    warn_split_shells(m);
    let mut p = vec![0.0; m.dim()];
    for states in m.components() {
        let mass: f64 = states.iter().map(|&s| p0.p[s]).sum();
        if states.len() == 1 {
            p[states[0]] = p0.p[states[0]];
            continue;
        }
        let total: f64 = states.iter().map(|&s| m.volume_fraction(s)).sum();
        for &s in states {
            p[s] = mass * m.volume_fraction(s) / total;
        }
    }
    Ok(JointDistribution {
        system: m.system,
        grid: m.grid,
        p,
    })
}

/// Stationary state from the null eigenvector of each symmetrized block,
/// projected onto non-negative vectors and rescaled to the block's mass.
pub fn stationary_by_eigen(m: &RateMatrix, p0: &JointDistribution) -> Result<JointDistribution> {
    check_normalized(&p0.p)?;
    let mut p = vec![0.0; m.dim()];
    for states in m.components() {
        let mass: f64 = states.iter().map(|&s| p0.p[s]).sum();
        if states.len() == 1 {
            p[states[0]] = p0.p[states[0]];
            continue;
        }
        let sqrt_v: Vec<f64> = states.iter().map(|&s| m.volume_fraction(s).sqrt()).collect();
        let eig = SymmetricEigen::new(symmetrize(&block_generator(m, states), &sqrt_v));
        let mut order: Vec<usize> = (0..states.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].abs().total_cmp(&eig.eigenvalues[b].abs()));
        let scale = eig.eigenvalues.amax();
        if eig.eigenvalues[order[1]].abs() <= NULL_TOL * scale {
            log::warn!(
                "block of {} states has a degenerate null space; using the smallest eigenpair",
                states.len()
            );
        }
        let v = eig.eigenvectors.column(order[0]);
        let sign = if v.sum() < 0.0 { -1.0 } else { 1.0 };
        let raw: Vec<f64> = v
            .iter()
            .zip(&sqrt_v)
            .map(|(x, r)| (sign * x * r).max(0.0))
            .collect();
        let total: f64 = raw.iter().sum();
        for (&s, x) in states.iter().zip(raw) {
            p[s] = mass * x / total;
        }
    }
    Ok(JointDistribution {
        system: m.system,
        grid: m.grid,
        p,
    })
}

fn warn_split_shells(m: &RateMatrix) {
    if m.shell_step().is_none() {
        return;
    }
    let mut per_shell = std::collections::BTreeMap::new();
    for states in m.components().iter().filter(|c| c.len() > 1) {
        *per_shell.entry(m.shell_of(states[0])).or_insert(0usize) += 1;
    }
    let split = per_shell.values().filter(|&&c| c > 1).count();
    if split > 0 {
        log::warn!("{split} total-energy shells split into several components; each is resolved separately");
    }
}
