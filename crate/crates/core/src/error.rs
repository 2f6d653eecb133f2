use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("zeeman distribution too wide: truncation at zero discards {discarded:.3e} of the mass (limit 1e-2)")]
    UnphysicalDistribution { discarded: f64 },

    #[error("exhaustive enumeration refused for {n_spins} spins (limit {limit})")]
    TooManySpins { n_spins: usize, limit: usize },

    #[error("volume vanishes at E = {energy}; entropy undefined")]
    UndefinedEntropy { energy: f64 },

    #[error("energy {target} is not attainable by a canonical state (open interval ({lower}, {upper}))")]
    UnattainableEnergy { target: f64, lower: f64, upper: f64 },

    #[error("bin at E = {energy} has zero volume and is excluded")]
    ExcludedBin { energy: f64 },

    #[error("distribution is not normalized: total = {total}")]
    NotNormalized { total: f64 },

    #[error("heat capacity vanished at beta* = {beta}; temperature update is stiff")]
    Stiffness { beta: f64 },

    #[error("dimension {dim} exceeds the dense-state limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },

    #[error("operation requires an indicator kernel")]
    IndicatorRequired,

    #[error("empty energy grid")]
    EmptyGrid,

    #[error("integration failed: {0}")]
    Integration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
