//! Scenario configuration: one JSON document per run.
//!
//! Energies, frequencies and temperatures are in units of the measurement
//! resolution `dE` (inverse temperatures in `1/dE`, times in `1/dE`).

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use finitebath::bath::{sample_bath, BathSpec, CouplingRule, ZeemanDistribution};
use finitebath::correlation::RateMode;
use finitebath::dynamics::{BetaUpdate, EmmeMethod, TimeGrid};
use finitebath::kernel::{KernelKind, MeasurementKernel};
use finitebath::system::SystemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Spectrum,
    Correlations,
    Rates,
    Evolve,
    Compare,
    Stationary,
    Mutualinfo,
    Validate,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Spectrum => "spectrum",
            Scenario::Correlations => "correlations",
            Scenario::Rates => "rates",
            Scenario::Evolve => "evolve",
            Scenario::Compare => "compare",
            Scenario::Stationary => "stationary",
            Scenario::Mutualinfo => "mutualinfo",
            Scenario::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub n_spins: usize,
    #[serde(default = "one")]
    pub zeeman_mean: f64,
    #[serde(default = "default_std")]
    pub zeeman_std: f64,
    #[serde(default = "unit_coupling")]
    pub couplings: CouplingRule,
    /// Explicit splittings; overrides sampling when present.
    #[serde(default)]
    pub zeeman: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "indicator")]
    pub kind: KernelKind,
    #[serde(default = "one")]
    pub delta_e: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            kind: KernelKind::Indicator,
            delta_e: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "continuum")]
    pub mode: RateMode,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            c0: 1.0,
            mode: RateMode::Continuum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BathInit {
    Canonical { beta: f64 },
    Microcanonical { energy: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// System level `k`; defaults to the top level `2s`.
    #[serde(default)]
    pub system_level: Option<usize>,
    #[serde(default = "default_bath_init")]
    pub bath: BathInit,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            system_level: None,
            bath: default_bath_init(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default)]
    pub method: EmmeMethod,
    #[serde(default)]
    pub beta_update: BetaUpdate,
    /// Grid half-width in units of `sigma_N`.
    #[serde(default = "default_sigmas")]
    pub grid_sigmas: f64,
    /// Also write the full joint distribution at every output time.
    #[serde(default)]
    pub dump_joint: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            method: EmmeMethod::Eigen,
            beta_update: BetaUpdate::Resolve,
            grid_sigmas: default_sigmas(),
            dump_joint: false,
        }
    }
}

/// Ratio `f_exact / f_approx` over nested baths of `n_min..=n_spins` spins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioConfig {
    pub e: f64,
    pub e_prime: f64,
    pub omega: f64,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationsConfig {
    /// `(E, E')` pairs.
    #[serde(default = "default_pairs")]
    pub pairs: Vec<(f64, f64)>,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default = "default_n_taus")]
    pub n_taus: usize,
    /// Frequencies at which the numerical transform is compared with `gamma_1`.
    #[serde(default = "default_omegas")]
    pub omegas: Vec<f64>,
    #[serde(default)]
    pub ratio: Option<RatioConfig>,
}

impl Default for CorrelationsConfig {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            tau_max: default_tau_max(),
            n_taus: default_n_taus(),
            omegas: default_omegas(),
            ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    #[serde(default = "default_rate_omegas")]
    pub omegas: Vec<f64>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            omegas: default_rate_omegas(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutualInfoConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_energy")]
    pub energy: f64,
}

impl Default for MutualInfoConfig {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            energy: default_energy(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub bath: BathConfig,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub times: Option<TimeGrid>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub correlations: CorrelationsConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub mutualinfo: MutualInfoConfig,
}

fn one() -> f64 {
    1.0
}
fn default_std() -> f64 {
    0.2
}
fn unit_coupling() -> CouplingRule {
    CouplingRule::Uniform(1.0)
}
fn indicator() -> KernelKind {
    KernelKind::Indicator
}
fn continuum() -> RateMode {
    RateMode::Continuum
}
fn default_lambda() -> f64 {
    0.01
}
fn default_beta() -> f64 {
    0.75
}
fn default_energy() -> f64 {
    -18.0
}
fn default_bath_init() -> BathInit {
    BathInit::Canonical { beta: 0.75 }
}
fn default_sigmas() -> f64 {
    finitebath::bath::GRID_SIGMAS
}
fn default_n_min() -> usize {
    6
}
fn default_pairs() -> Vec<(f64, f64)> {
    vec![(-1.0, -2.0)]
}
fn default_tau_max() -> f64 {
    100.0
}
fn default_n_taus() -> usize {
    2001
}
fn default_omegas() -> Vec<f64> {
    (0..=20).map(|i| 0.5 + 0.05 * i as f64).collect()
}
fn default_rate_omegas() -> Vec<f64> {
    vec![1.0, -1.0]
}
fn default_seed() -> u64 {
    7
}

/// A configuration problem, reported with its position when known.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<(usize, usize)>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some((l, c)) => write!(f, "{}:{l}:{c}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: Some((e.line(), e.column())),
            message: e.to_string(),
        })
    }
}

/// Everything a scenario needs, built and checked before any numerics run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub config: ScenarioConfig,
    pub bath: BathSpec,
    pub kernel: MeasurementKernel,
    pub system: Option<SystemSpec>,
    pub times: Option<Vec<f64>>,
}

impl Resolved {
    pub fn system(&self) -> SystemSpec {
        self.system.expect("checked at resolve time")
    }

    pub fn times(&self) -> &[f64] {
        self.times.as_deref().expect("checked at resolve time")
    }
}

pub fn resolve(scenario: Scenario, config: ScenarioConfig, path: &Path) -> Result<Resolved, ConfigError> {
    let err = |message: String| ConfigError {
        path: path.to_path_buf(),
        line: None,
        message,
    };
    if let Some(s) = config.scenario {
        if s != scenario {
            return Err(err(format!(
                "config is written for scenario `{}` but `{}` was requested",
                s.name(),
                scenario.name()
            )));
        }
    }
    let needs_system = !matches!(scenario, Scenario::Spectrum | Scenario::Correlations | Scenario::Rates);
    let needs_times = matches!(
        scenario,
        Scenario::Evolve | Scenario::Compare | Scenario::Mutualinfo | Scenario::Validate
    );
    if needs_system && config.system.is_none() {
        return Err(err(format!(
            "section `system` is required by scenario `{}`",
            scenario.name()
        )));
    }
    if needs_times && config.times.is_none() {
        return Err(err(format!(
            "section `times` is required by scenario `{}`",
            scenario.name()
        )));
    }
    let b = &config.bath;
    let dist = ZeemanDistribution::new(b.zeeman_mean, b.zeeman_std);
    let bath = match &b.zeeman {
        Some(z) => {
            if z.len() != b.n_spins {
                return Err(err(format!(
                    "bath.zeeman lists {} splittings for n_spins = {}",
                    z.len(),
                    b.n_spins
                )));
            }
            let couplings = match &b.couplings {
                CouplingRule::Uniform(c) => vec![*c; b.n_spins],
                CouplingRule::Explicit(cs) => cs.clone(),
            };
            BathSpec::new(z.clone(), couplings, config.seed, dist)
        }
        None => sample_bath(b.n_spins, dist, &b.couplings, config.seed),
    }
    .map_err(|e| err(format!("bath: {e}")))?;
    let kernel = MeasurementKernel::new(config.kernel.kind, config.kernel.delta_e)
        .map_err(|e| err(format!("kernel: {e}")))?;
    let times = match &config.times {
        Some(t) if needs_times => Some(t.times().map_err(|e| err(format!("times: {e}")))?),
        _ => None,
    };
    if let (Some(s), Some(k)) = (config.system, config.initial.system_level) {
        if k >= s.dim() {
            return Err(err(format!(
                "initial.system_level = {k} but the system has levels 0..{}",
                s.dim() - 1
            )));
        }
    }
    if !(config.dynamics.grid_sigmas > 0.0) {
        return Err(err("dynamics.grid_sigmas must be positive".into()));
    }
    Ok(Resolved {
        scenario,
        system: config.system,
        config,
        bath,
        kernel,
        times,
    })
}
