//! The central spin `H_S = omega_S S^z` coupled through `S = 2 S^x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spin magnitude as written in configs: a number (`0.5`) or a fraction (`"1/2"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum SpinValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SystemConfig {
    spin: SpinValue,
    omega_s: f64,
}

/// Spin `s` with levels `eps_k = (k - s) omega_S`, `k = 0..=2s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemConfig", into = "SystemConfig")]
pub struct SystemSpec {
    twice_spin: u32,
    omega_s: f64,
}

impl TryFrom<SystemConfig> for SystemSpec {
    type Error = Error;

    fn try_from(c: SystemConfig) -> Result<Self> {
        let spin = match c.spin {
            SpinValue::Number(x) => x,
            SpinValue::Text(t) => parse_fraction(&t)?,
        };
        Self::new(spin, c.omega_s)
    }
}

impl From<SystemSpec> for SystemConfig {
    fn from(s: SystemSpec) -> Self {
        Self {
            spin: SpinValue::Number(s.spin()),
            omega_s: s.omega_s,
        }
    }
}

fn parse_fraction(t: &str) -> Result<f64> {
    let bad = || Error::InvalidParameter(format!("cannot parse spin {t:?}"));
    match t.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            Ok(n / d)
        }
        None => t.trim().parse().map_err(|_| bad()),
    }
}

/// Transitions `q -> k` sharing the Bohr frequency `eps_q - eps_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BohrGroup {
    pub omega: f64,
    /// `(k, q)` pairs.
    pub transitions: Vec<(usize, usize)>,
}

impl SystemSpec {
    pub fn new(spin: f64, omega_s: f64) -> Result<Self> {
        let twice = 2.0 * spin;
        if !(twice >= 1.0 && (twice - twice.round()).abs() < 1e-12 && twice < 1e6) {
            return Err(Error::InvalidParameter(format!(
                "spin must be a positive half-integer, got {spin}"
            )));
        }
        Self::from_twice_spin(twice.round() as u32, omega_s)
    }

    pub fn from_twice_spin(twice_spin: u32, omega_s: f64) -> Result<Self> {
        if twice_spin == 0 {
            return Err(Error::InvalidParameter("spin 0 has no transitions".into()));
        }
        if !(omega_s > 0.0 && omega_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega_s must be positive, got {omega_s}"
            )));
        }
        Ok(Self {
            twice_spin,
            omega_s,
        })
    }

    pub fn spin(&self) -> f64 {
        0.5 * self.twice_spin as f64
    }

    pub fn twice_spin(&self) -> u32 {
        self.twice_spin
    }

    pub fn omega_s(&self) -> f64 {
        self.omega_s
    }

    pub fn dim(&self) -> usize {
        self.twice_spin as usize + 1
    }

    pub fn level(&self, k: usize) -> f64 {
        (k as f64 - self.spin()) * self.omega_s
    }

    pub fn levels(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.level(k)).collect()
    }

    /// `<k| 2S^x |q>`, real and symmetric.
    pub fn coupling_amplitude(&self, k: usize, q: usize) -> f64 {
        let ts = self.twice_spin as f64;
        let kk = k as f64;
        if q == k + 1 {
            ((kk + 1.0) * (ts - kk)).sqrt()
        } else if k == q + 1 {
            (kk * (ts - kk + 1.0)).sqrt()
        } else {
            0.0
        }
    }

    /// `|<k|S|q>|^2`.
    pub fn coupling_element(&self, k: usize, q: usize) -> Result<f64> {
        let d = self.dim();
        if k >= d || q >= d {
            return Err(Error::InvalidParameter(format!(
                "level index ({k}, {q}) outside 0..{d}"
            )));
        }
        let ts = self.twice_spin as u64;
        let kk = k as u64;
        let v = if q == k + 1 {
            (kk + 1) * (ts - kk)
        } else if k == q + 1 {
            kk * (ts - kk + 1)
        } else {
            0
        };
        Ok(v as f64)
    }

    /// The two groups `+omega_S` and `-omega_S`.
    pub fn bohr_frequencies(&self) -> Vec<BohrGroup> {
        let d = self.dim();
        vec![
            BohrGroup {
                omega: self.omega_s,
                transitions: (0..d - 1).map(|k| (k, k + 1)).collect(),
            },
            BohrGroup {
                omega: -self.omega_s,
                transitions: (1..d).map(|k| (k, k - 1)).collect(),
            },
        ]
    }
}
