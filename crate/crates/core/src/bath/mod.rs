//! The finite, non-interacting spin bath `H_B = sum_r (Omega_r / 2) sigma^z_r`.

mod canonical;
mod spectrum;
mod volume;

pub use canonical::{
    solve_beta_star, solve_beta_star_with_tolerance, BetaStar, CanonicalModel, GridCanonical,
    SpinCanonical,
};
pub use spectrum::{
    complement_levels, enumerate_spectrum, ks_distance_to_gaussian, level_energies,
    lindeberg_check, LindebergReport, MAX_EXACT_SPINS,
};
pub use volume::{DosModel, VolumeModel, Volumes, GRID_SIGMAS};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_cdf;

/// Name of the generator used by [`sample_bath`], recorded in run metadata.
pub const PRNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9) seeded via seed_from_u64; normal deviates from rand_distr 0.5 Normal; rejection of Omega <= 0";

/// Largest mass fraction of `p_Z` allowed below zero.
const MAX_TRUNCATED_MASS: f64 = 1e-2;

/// Underlying distribution `p_Z(Omega) = N(Omega - mean, std)` of Zeeman splittings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanDistribution {
    pub mean: f64,
    pub std: f64,
}

impl ZeemanDistribution {
    pub fn new(mean: f64, std: f64) -> Self {
        Self { mean, std }
    }

    /// Probability mass of the untruncated normal below zero.
    pub fn truncated_mass(&self) -> f64 {
        if self.std == 0.0 {
            if self.mean > 0.0 {
                0.0
            } else {
                1.0
            }
        } else {
            normal_cdf(-self.mean / self.std)
        }
    }
}

/// How bath couplings `c_r` are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingRule {
    Uniform(f64),
    Explicit(Vec<f64>),
}

/// Realized bath: Zeeman splittings, couplings and their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub n_spins: usize,
    pub zeeman: Vec<f64>,
    pub couplings: Vec<f64>,
    pub seed: u64,
    pub zeeman_dist: ZeemanDistribution,
}

impl BathSpec {
    pub fn new(
        zeeman: Vec<f64>,
        couplings: Vec<f64>,
        seed: u64,
        zeeman_dist: ZeemanDistribution,
    ) -> Result<Self> {
        let spec = Self {
            n_spins: zeeman.len(),
            zeeman,
            couplings,
            seed,
            zeeman_dist,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `n` identical spins of splitting `omega` and unit coupling.
    pub fn uniform(n: usize, omega: f64) -> Result<Self> {
        Self::new(
            vec![omega; n],
            vec![1.0; n],
            0,
            ZeemanDistribution::new(omega, 0.0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins == 0 {
            return Err(Error::InvalidParameter("bath needs at least one spin".into()));
        }
        if self.zeeman.len() != self.n_spins || self.couplings.len() != self.n_spins {
            return Err(Error::InvalidParameter(format!(
                "expected {} splittings and couplings, got {} and {}",
                self.n_spins,
                self.zeeman.len(),
                self.couplings.len()
            )));
        }
        if let Some(bad) = self.zeeman.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "Zeeman splittings must be positive, found {bad}"
            )));
        }
        if self.couplings.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coupling".into()));
        }
        Ok(())
    }

    /// `sigma_N^2 = sum_r Omega_r^2 / 4`.
    pub fn variance(&self) -> f64 {
        self.zeeman.iter().map(|w| 0.25 * w * w).sum()
    }

    pub fn sigma_n(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Largest bath energy `sum_r Omega_r / 2`; the spectrum spans `[-max, max]`.
    pub fn max_energy(&self) -> f64 {
        self.zeeman.iter().map(|w| 0.5 * w).sum()
    }

    pub fn log_total_states(&self) -> f64 {
        self.n_spins as f64 * std::f64::consts::LN_2
    }

    /// Bath restricted to its first `n` spins (used for size sweeps).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        Self::new(
            self.zeeman[..n].to_vec(),
            self.couplings[..n].to_vec(),
            self.seed,
            self.zeeman_dist,
        )
    }

    pub fn dos(&self) -> DosModel {
        DosModel::new(self)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bath spec serializes")
    }
}

/// Draw `n_spins` splittings i.i.d. from `p_Z`, truncated to `Omega > 0`.
pub fn sample_bath(
    n_spins: usize,
    zeeman_dist: ZeemanDistribution,
    coupling_rule: &CouplingRule,
    seed: u64,
) -> Result<BathSpec> {
    if n_spins == 0 {
        return Err(Error::InvalidParameter("n_spins must be >= 1".into()));
    }
    if !(zeeman_dist.std >= 0.0) || !zeeman_dist.mean.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "invalid Zeeman distribution {zeeman_dist:?}"
        )));
    }
    let discarded = zeeman_dist.truncated_mass();
    if discarded > MAX_TRUNCATED_MASS {
        return Err(Error::UnphysicalDistribution { discarded });
    }
    let normal = Normal::new(zeeman_dist.mean, zeeman_dist.std)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let zeeman: Vec<f64> = (0..n_spins)
        .map(|_| loop {
            let w = normal.sample(&mut rng);
            if w > 0.0 {
                break w;
            }
        })
        .collect();
    let couplings = match coupling_rule {
        CouplingRule::Uniform(c) => vec![*c; n_spins],
        CouplingRule::Explicit(cs) => {
            if cs.len() != n_spins {
                return Err(Error::InvalidParameter(format!(
                    "{} couplings given for {n_spins} spins",
                    cs.len()
                )));
            }
            cs.clone()
        }
    };
    BathSpec::new(zeeman, couplings, seed, zeeman_dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_mean_close_to_distribution_mean() {
        let bath = sample_bath(
            100,
            ZeemanDistribution::new(1.0, 0.2),
            &CouplingRule::Uniform(1.0),
            7,
        )
        .unwrap();
        let mean = bath.zeeman.iter().sum::<f64>() / 100.0;
        assert!((mean - 1.0).abs() < 3.0 * 0.2 / 10.0, "mean {mean}");
        assert!(bath.zeeman.iter().all(|&w| w > 0.0));
        assert_eq!(bath.couplings, vec![1.0; 100]);
    }

    #[test]
    fn zero_width_gives_exact_splittings() {
        let bath = sample_bath(
            2,
            ZeemanDistribution::new(1.0, 0.0),
            &CouplingRule::Uniform(1.0),
            3,
        )
        .unwrap();
        assert_eq!(bath.zeeman, vec![1.0, 1.0]);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let d = ZeemanDistribution::new(1.0, 0.2);
        let a = sample_bath(50, d, &CouplingRule::Uniform(1.0), 11).unwrap();
        let b = sample_bath(50, d, &CouplingRule::Uniform(1.0), 11).unwrap();
        assert_eq!(a, b);
        let c = sample_bath(50, d, &CouplingRule::Uniform(1.0), 12).unwrap();
        assert_ne!(a.zeeman, c.zeeman);
    }

    #[test]
    fn too_wide_distribution_rejected() {
        let err = sample_bath(
            10,
            ZeemanDistribution::new(1.0, 0.6),
            &CouplingRule::Uniform(1.0),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnphysicalDistribution { .. }));
        // 0.4 discards ~6e-3 which is tolerated
        assert!(sample_bath(
            10,
            ZeemanDistribution::new(1.0, 0.4),
            &CouplingRule::Uniform(1.0),
            1
        )
        .is_ok());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(BathSpec::uniform(0, 1.0).is_err());
        assert!(BathSpec::new(
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            0,
            ZeemanDistribution::new(1.0, 0.0)
        )
        .is_err());
        assert!(BathSpec::new(vec![1.0], vec![1.0, 1.0], 0, ZeemanDistribution::new(1.0, 0.0))
            .is_err());
    }

    #[test]
    fn json_round_trip_keeps_frequencies() {
        let bath = sample_bath(
            5,
            ZeemanDistribution::new(1.0, 0.2),
            &CouplingRule::Uniform(0.5),
            99,
        )
        .unwrap();
        let json = bath.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["n_spins", "zeeman", "couplings", "seed", "zeeman_dist"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: BathSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, bath);
    }

    proptest::proptest! {
        #[test]
        fn sampled_baths_are_valid(seed in 0u64..10_000, n in 1usize..300, std in 0.0f64..0.35) {
            let dist = ZeemanDistribution::new(1.0, std);
            let bath = sample_bath(n, dist, &CouplingRule::Uniform(1.0), seed).unwrap();
            proptest::prop_assert!(bath.zeeman.iter().all(|&w| w > 0.0));
            proptest::prop_assert_eq!(bath.zeeman.len(), n);
            proptest::prop_assert_eq!(bath.couplings.len(), n);
            let var: f64 = bath.zeeman.iter().map(|w| w * w / 4.0).sum();
            proptest::prop_assert!(bath.variance() > 0.0);
            proptest::prop_assert!((bath.variance() - var).abs() <= 1e-12 * var);
        }
    }
}
