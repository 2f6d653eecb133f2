use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::correlation::RateEngine;
use crate::error::{Error, Result};
use crate::kernel::EnergyGrid;
use crate::system::SystemSpec;

/// `omega_S / dE` closer than this to an integer counts as commensurate.
const COMMENSURATE_TOL: f64 = 1e-9;

/// Generator `Lambda` of `dp/dt = Lambda p` on the joint space.
///
/// Off-diagonal `Lambda[(k,E),(q,E')] = |<k|S|q>|^2 gamma_1(E, E'; eps_q - eps_k)`;
/// the diagonal is minus the column sum. Transitions into bins beyond the
/// grid are dropped, so probability stays on the grid. Bins of zero volume
/// are inert.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    pub system: SystemSpec,
    pub grid: EnergyGrid,
    /// `V(E) / 2^N` per bin.
    volumes: Vec<f64>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
    /// `omega_S / dE` when integral.
    shell_step: Option<i64>,
    components: Vec<Vec<usize>>,
    component_of: Vec<usize>,
}

impl RateMatrix {
    pub fn build(system: SystemSpec, engine: &RateEngine, grid: EnergyGrid) -> Result<Self> {
        let kernel = engine.kernel();
        if !kernel.is_indicator() {
            return Err(Error::IndicatorRequired);
        }
        if (grid.delta_e() - kernel.delta_e).abs() > 1e-12 * kernel.delta_e {
            return Err(Error::InvalidParameter(format!(
                "grid spacing {} differs from kernel resolution {}",
                grid.delta_e(),
                kernel.delta_e
            )));
        }
        let n = grid.len();
        let d = system.dim();
        let volumes: Vec<f64> = (0..n)
            .map(|i| engine.volumes().fraction(grid.energy(i)))
            .collect();
        let dead = volumes.iter().filter(|&&v| v <= 0.0).count();
        if dead == n {
            return Err(Error::EmptyGrid);
        }
        if dead > 0 {
            log::warn!("{dead} zero-volume bins are inert in the rate matrix");
        }
        let ratio = system.omega_s() / kernel.delta_e;
        let shell_step = ((ratio - ratio.round()).abs() < COMMENSURATE_TOL).then(|| ratio.round() as i64);
        if shell_step.is_none() {
            log::warn!("omega_S / dE = {ratio} is not integral; total-energy blocks are approximate");
        }

        let dim = d * n;
        // entries per source column (q, j)
        let columns: Vec<Vec<(usize, f64)>> = (0..dim)
            .into_par_iter()
            .map(|c| -> Result<Vec<(usize, f64)>> {
                let (q, j) = (c / n, c % n);
                let mut out = Vec::new();
                if volumes[j] <= 0.0 {
                    return Ok(out);
                }
                let ep = grid.energy(j);
                for k in [q.wrapping_sub(1), q + 1] {
                    if k >= d {
                        continue;
                    }
                    let s2 = system.coupling_element(k, q)?;
                    let omega = system.level(q) - system.level(k);
                    let lo = kernel.bin_index(ep + omega - kernel.delta_e);
                    let hi = kernel.bin_index(ep + omega + kernel.delta_e);
                    for m in lo..=hi {
                        let Some(i) = grid.index_of_m(m) else { continue };
                        if volumes[i] <= 0.0 {
                            continue;
                        }
                        let g = engine.gamma1(grid.energy(i), ep, omega)?;
                        if g > 0.0 {
                            out.push((k * n + i, s2 * g));
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;

        let mut diag = vec![0.0; dim];
        let mut triplets = Vec::new();
        for (c, col) in columns.into_iter().enumerate() {
            for (r, v) in col {
                diag[c] -= v;
                triplets.push((r, c, v));
            }
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &triplets {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = triplets.iter().map(|t| t.1).collect();
        let values = triplets.iter().map(|t| t.2).collect();

        let mut m = Self {
            system,
            grid,
            volumes,
            row_ptr,
            col_idx,
            values,
            diag,
            shell_step,
            components: Vec::new(),
            component_of: Vec::new(),
        };
        m.find_components();
        Ok(m)
    }

    fn find_components(&mut self) {
        let dim = self.dim();
        let mut parent: Vec<usize> = (0..dim).collect();
        fn root(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for r in 0..dim {
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (a, b) = (root(&mut parent, r), root(&mut parent, self.col_idx[idx]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = vec![usize::MAX; dim];
        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut component_of = vec![0; dim];
        for s in 0..dim {
            let r = root(&mut parent, s);
            if label[r] == usize::MAX {
                label[r] = components.len();
                components.push(Vec::new());
            }
            component_of[s] = label[r];
            components[label[r]].push(s);
        }
        self.components = components;
        self.component_of = component_of;
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn n_bins(&self) -> usize {
        self.grid.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `V(E) / 2^N` of the bin of `state`.
    pub fn volume_fraction(&self, state: usize) -> f64 {
        self.volumes[state % self.n_bins()]
    }

    pub fn bin_volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// `eps_k + E`.
    pub fn state_energy(&self, state: usize) -> f64 {
        let n = self.n_bins();
        self.system.level(state / n) + self.grid.energy(state % n)
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        if r == c {
            return self.diag[r];
        }
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match row.binary_search(&c) {
            Ok(pos) => self.values[self.row_ptr[r] + pos],
            Err(_) => 0.0,
        }
    }

    /// Off-diagonal entries `(row, col, value)` in row-major order.
    pub fn off_diagonal(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |i| (r, self.col_idx[i], self.values[i]))
        })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `out = Lambda p`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        for r in 0..self.dim() {
            let mut acc = self.diag[r] * p[r];
            for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[idx] * p[self.col_idx[idx]];
            }
            out[r] = acc;
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = self.diag.clone();
        for (_, c, v) in self.off_diagonal() {
            s[c] += v;
        }
        s
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for (r, c, v) in self.off_diagonal() {
            m[(r, c)] = v;
        }
        m
    }

    /// Connected components of the transition graph, each sorted ascending.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    pub fn component_of(&self, state: usize) -> usize {
        self.component_of[state]
    }

    /// `omega_S / dE` when the total-energy shells are exact.
    pub fn shell_step(&self) -> Option<i64> {
        self.shell_step
    }

    /// Total energy of `state` in units of `dE`, offset by `s omega_S`.
    pub fn shell_of(&self, state: usize) -> Option<i64> {
        let n = self.n_bins();
        self.shell_step
            .map(|w| (state / n) as i64 * w + self.grid.m_min + (state % n) as i64)
    }

    /// True when every transition stays inside one total-energy shell.
    pub fn is_block_diagonal(&self) -> bool {
        self.shell_step.is_some()
            && self
                .off_diagonal()
                .all(|(r, c, _)| self.shell_of(r) == self.shell_of(c))
    }

    /// States sorted by total energy (stable within a shell), for display of the block structure.
    pub fn shell_ordering(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| self.state_energy(a).total_cmp(&self.state_energy(b)));
        order
    }

    /// `p_tot` over shells: `(shell, probability)` ascending in shell.
    pub fn total_energy_distribution(&self, p: &[f64]) -> Result<Vec<(i64, f64)>> {
        if self.shell_step.is_none() {
            return Err(Error::InvalidParameter(
                "total-energy shells need omega_S to be a multiple of dE".into(),
            ));
        }
        let mut map = std::collections::BTreeMap::new();
        for (s, &x) in p.iter().enumerate() {
            *map.entry(self.shell_of(s).unwrap()).or_insert(0.0) += x;
        }
        Ok(map.into_iter().collect())
    }

    /// Largest `|Lambda_rc V_c - Lambda_cr V_r| / (Lambda_rc V_c)` over connected pairs.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (r, c, v) in self.off_diagonal() {
            let forward = v * self.volume_fraction(c);
            let back = self.entry(c, r) * self.volume_fraction(r);
            worst = worst.max((forward - back).abs() / forward);
        }
        worst
    }
}
