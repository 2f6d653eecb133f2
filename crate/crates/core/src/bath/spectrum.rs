use serde::{Deserialize, Serialize};

use super::BathSpec;
use crate::error::{Error, Result};
use crate::special::normal_cdf;

/// Exhaustive enumeration is refused beyond this many spins.
pub const MAX_EXACT_SPINS: usize = 24;

fn guard(n: usize) -> Result<()> {
    if n > MAX_EXACT_SPINS {
        return Err(Error::TooManySpins {
            n_spins: n,
            limit: MAX_EXACT_SPINS,
        });
    }
    Ok(())
}

/// Energies indexed by configuration bit-vector: bit `r` set means spin `r`
/// points up (`+Omega_r / 2`).
fn levels_of(zeeman: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; 1 << zeeman.len()];
    e[0] = -zeeman.iter().map(|w| 0.5 * w).sum::<f64>();
    for (r, &w) in zeeman.iter().enumerate() {
        let half = 1usize << r;
        for b in 0..half {
            e[b | half] = e[b] + w;
        }
    }
    e
}

/// Unsorted level energies in bit-vector order (the exact-oracle basis order).
pub fn level_energies(bath: &BathSpec) -> Result<Vec<f64>> {
    guard(bath.n_spins)?;
    Ok(levels_of(&bath.zeeman))
}

/// All `2^N` energies `sum_r n_r Omega_r / 2`, ascending.
pub fn enumerate_spectrum(bath: &BathSpec) -> Result<Vec<f64>> {
    let mut e = level_energies(bath)?;
    e.sort_unstable_by(f64::total_cmp);
    Ok(e)
}

/// Energies of the `2^(N-1)` configurations of every spin except `r`.
pub fn complement_levels(bath: &BathSpec, r: usize) -> Result<Vec<f64>> {
    guard(bath.n_spins)?;
    if r >= bath.n_spins {
        return Err(Error::InvalidParameter(format!(
            "spin index {r} out of range for N = {}",
            bath.n_spins
        )));
    }
    let rest: Vec<f64> = bath
        .zeeman
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != r)
        .map(|(_, &w)| w)
        .collect();
    Ok(levels_of(&rest))
}

/// Kolmogorov-Smirnov distance between a sorted sample and `N(0, sigma)`.
pub fn ks_distance_to_gaussian(sorted: &[f64], sigma: f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        let f = normal_cdf(v / sigma);
        d = d.max((j as f64 / n - f).abs()).max((f - i as f64 / n).abs());
        i = j;
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LindebergReport {
    /// `max_r Omega_r / (2 sigma_N)`.
    pub ratio: f64,
    /// Only available when the spectrum can be enumerated.
    pub ks_statistic: Option<f64>,
}

pub fn lindeberg_check(bath: &BathSpec) -> LindebergReport {
    let max = bath.zeeman.iter().copied().fold(0.0, f64::max);
    let sigma = bath.sigma_n();
    let ks_statistic = enumerate_spectrum(bath)
        .ok()
        .map(|s| ks_distance_to_gaussian(&s, sigma));
    LindebergReport {
        ratio: max / (2.0 * sigma),
        ks_statistic,
    }
}
