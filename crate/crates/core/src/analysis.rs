//! One-call analysis of a system around a fundamental phase.

use crate::error::Result;
use crate::interaction::{polarization_vectors, stability_report, Coupling, PolarizationVectors, StabilityInputs, StabilityReport};
use crate::linalg::CVec;
use crate::policy::NumericPolicy;
use crate::resonance::{analyze_resonances, ResonanceReport, Window};
use crate::spectral::SpectralField;
use crate::system::{Phase, SystemSpec};

/// Spectral field, resonances and polarization of one system and phase.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub spec: SystemSpec,
    pub phase: Phase,
    pub window: Window,
    pub field: SpectralField,
    pub resonance: ResonanceReport,
    pub polarization: PolarizationVectors,
}

impl Analysis {
    /// `polarization` overrides the kernel computation (needed when the phase is not simple).
    pub fn run(spec: SystemSpec, phase: Phase, polarization: Option<&CVec>, window: Option<Window>, policy: NumericPolicy) -> Result<Self> {
        let window = window.unwrap_or_else(|| Window::around(&phase));
        let polarization = match polarization {
            Some(e) => PolarizationVectors::supplied(&spec, &phase, e)?,
            None => polarization_vectors(&spec, &phase)?,
        };
        let (field, resonance) = analyze_resonances(&spec, &phase, &window, policy)?;
        Ok(Analysis { spec, phase, window, field, resonance, polarization })
    }

    pub fn coupling(&self) -> Coupling<'_> {
        Coupling::new(&self.field, &self.phase, &self.polarization)
    }

    pub fn stability(&self, inputs: StabilityInputs) -> Result<StabilityReport> {
        stability_report(&self.coupling(), &self.resonance, inputs)
    }
}
