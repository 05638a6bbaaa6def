//! Stability analysis of WKB solutions to semilinear hyperbolic systems with
//! a large high-frequency source term.
//!
//! The crate covers the whole chain from a system description to a verdict:
//! branch-tracked spectral decomposition of the symbol ([`spectral`]),
//! resonance location ([`resonance`]), interaction coefficients and the
//! stability index ([`interaction`]), the frozen-coefficient symbolic flow
//! ([`flow`]), leading-order WKB amplitudes ([`wkb`]) and direct
//! pseudospectral simulation ([`simulator`]).

pub mod analysis;
pub mod catalog;
pub mod dispersion;
pub mod error;
pub mod flow;
pub mod fourier;
pub mod interaction;
pub mod io;
pub mod linalg;
pub mod policy;
pub mod resonance;
pub mod simulator;
pub mod spectral;
pub mod system;
pub mod wkb;

pub use error::{Error, Result};
pub use policy::NumericPolicy;
pub use spectral::{FrequencyGrid, SpectralField};
pub use system::{Phase, SystemSpec, Triplet};
