//! Fixtures shared by the benchmarks.

use oscillant::analysis::Analysis;
use oscillant::catalog;
use oscillant::fourier::PeriodicGrid;
use oscillant::interaction::PolarizationVectors;
use oscillant::linalg::{c, CVec};
use oscillant::simulator::{Perturbation, SimConfig};
use oscillant::wkb::{self, Amplitude, WkbSolution};
use oscillant::{NumericPolicy, Phase, SystemSpec};

/// Default Klein-Gordon analysis around the fast phase with `k = 1`.
pub fn kg_equal() -> Analysis {
    let spec = catalog::kg_equal(1.0, 0.5, 1).expect("valid parameters");
    let phase = catalog::kg_fast_phase(1.0, &[1.0]);
    Analysis::run(spec, phase, None, None, NumericPolicy::default()).expect("kg-equal analyzes")
}

/// Unstable three-wave system with a Gaussian pump and its reference solution.
pub fn three_wave_run(eps: f64, points: usize) -> (SystemSpec, WkbSolution, SimConfig) {
    let spec = catalog::three_wave([1.0, 0.5, -0.5], [0.0, 1.0, 1.0]).expect("valid coefficients");
    let phase = Phase::new(0.0, &[0.0]);
    let pol = PolarizationVectors::supplied(&spec, &phase, &catalog::three_wave_polarization()).expect("three components");
    let width = 4.0;
    let t_end = 2.0 * eps.sqrt() * eps.ln().abs();
    let mut cfg = SimConfig::new(eps, points, width, t_end);
    let center = 0.5 * cfg.domain_length;
    cfg.amplitude = Amplitude::Gaussian { center, width, height: 1.0 };
    cfg.perturbation = Perturbation::Resonant { xi0: 0.0, direction: CVec::from_vec(vec![c(0.0), c(0.0), c(1.0)]), center, radius: 2.0 * width };
    let grid = PeriodicGrid::new(cfg.domain_length, points).expect("positive length");
    let g0 = cfg.amplitude.sample(&grid).expect("positive width");
    let sol = wkb::solve_transport(&spec, &phase, &pol, &g0, grid, 0.0, 2).expect("transport solves");
    (spec, sol, cfg)
}
