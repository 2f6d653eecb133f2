//! Master equations for open quantum systems coupled to finite spin baths.
//!
//! The crate is organised bottom-up:
//!
//! * [`bath`]: the spin bath, its spectrum, volumes and canonical ensembles.
//! * [`kernel`]: imperfect energy measurements (indicator and Gaussian).
//! * [`correlation`]: bath correlation functions and dissipation rates.
//! * [`system`]: the central spin.
//! * [`dynamics`]: rate matrices, time evolution and thermodynamic observables.
//! * [`oracle`]: exact unitary evolution of tiny instances.
//!
//! Energies are measured in units of the measurement resolution `dE`, with
//! `hbar = k_B = 1`.

pub mod bath;
pub mod error;
pub mod kernel;
pub mod special;
pub mod system;
pub mod correlation;
pub mod ode;
pub mod dynamics;
pub mod oracle;

pub use error::{Error, Result};

/// Library version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
