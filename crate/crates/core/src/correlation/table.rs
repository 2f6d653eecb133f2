use std::io::Write;

use rayon::prelude::*;

use super::RateEngine;
use crate::error::{Error, Result};
use crate::kernel::EnergyGrid;

/// Dense `gamma_1`, `gamma_2` and `kappa` on `grid x grid x omegas`.
///
/// Bins of zero volume are listed in `excluded` and carry zero rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub grid: EnergyGrid,
    pub omegas: Vec<f64>,
    pub excluded: Vec<f64>,
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    kappa: Vec<f64>,
}

impl RateTable {
    pub fn build(engine: &RateEngine, grid: EnergyGrid, omegas: &[f64]) -> Result<Self> {
        let n = grid.len();
        let live: Vec<bool> = (0..n)
            .map(|i| engine.volumes().fraction(grid.energy(i)) > 0.0)
            .collect();
        let excluded: Vec<f64> = (0..n)
            .filter(|&i| !live[i])
            .map(|i| grid.energy(i))
            .collect();
        if excluded.len() == n {
            return Err(Error::EmptyGrid);
        }
        if !excluded.is_empty() {
            log::warn!("{} zero-volume bins excluded from the rate table", excluded.len());
        }
        // one row (fixed omega, E) per task
        let rows: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..omegas.len() * n)
            .into_par_iter()
            .map(|idx| -> Result<_> {
                let (w, i) = (omegas[idx / n], idx % n);
                let e = grid.energy(i);
                let mut g1 = vec![0.0; n];
                let mut g2 = vec![0.0; n];
                for j in (0..n).filter(|&j| live[j]) {
                    let ep = grid.energy(j);
                    g1[j] = engine.gamma1(e, ep, w)?;
                    g2[j] = engine.gamma2(e, ep, w)?;
                }
                let k = if live[i] { engine.kappa(e, w)? } else { 0.0 };
                Ok((g1, g2, k))
            })
            .collect::<Result<_>>()?;
        let mut gamma1 = Vec::with_capacity(omegas.len() * n * n);
        let mut gamma2 = Vec::with_capacity(omegas.len() * n * n);
        let mut kappa = Vec::with_capacity(omegas.len() * n);
        for (g1, g2, k) in rows {
            gamma1.extend(g1);
            gamma2.extend(g2);
            kappa.push(k);
        }
        Ok(Self {
            grid,
            omegas: omegas.to_vec(),
            excluded,
            gamma1,
            gamma2,
            kappa,
        })
    }

    fn idx(&self, w: usize, i: usize, j: usize) -> usize {
        let n = self.grid.len();
        (w * n + i) * n + j
    }

    pub fn gamma1(&self, w: usize, i: usize, j: usize) -> f64 {
        self.gamma1[self.idx(w, i, j)]
    }

    pub fn gamma2(&self, w: usize, i: usize, j: usize) -> f64 {
        self.gamma2[self.idx(w, i, j)]
    }

    pub fn kappa(&self, w: usize, i: usize) -> f64 {
        self.kappa[w * self.grid.len() + i]
    }

    /// Rows `E,E_prime,omega,gamma1,gamma2` for every entry with a nonzero rate.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "E,E_prime,omega,gamma1,gamma2")?;
        let n = self.grid.len();
        for (w, &omega) in self.omegas.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    let (g1, g2) = (self.gamma1(w, i, j), self.gamma2(w, i, j));
                    if g1 != 0.0 || g2 != 0.0 {
                        writeln!(
                            out,
                            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                            self.grid.energy(i),
                            self.grid.energy(j),
                            omega,
                            g1,
                            g2
                        )?;
                    }
                }
            }
        }
        Ok(())
    }
}
