use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use oscillant::catalog::{self, KgBranch};
use oscillant::flow::{self, InteractionMatrix};
use oscillant::interaction::StabilityInputs;
use oscillant::linalg::c;
use oscillant::resonance::{analyze_resonances, Window};
use oscillant::simulator;
use oscillant::{FrequencyGrid, NumericPolicy, SpectralField};
use oscillant_bench::{kg_equal, three_wave_run};

fn spectral(cr: &mut Criterion) {
    let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
    cr.bench_function("spectral_field_kg_1d_4001", |b| {
        b.iter(|| SpectralField::compute(&spec, FrequencyGrid::line(-9.0, 9.0, 4001), NumericPolicy::default()).unwrap())
    });
    let spec2 = catalog::kg_equal(1.0, 0.5, 2).unwrap();
    cr.bench_function("spectral_field_kg_2d_61", |b| {
        b.iter(|| SpectralField::compute(&spec2, FrequencyGrid::square(-3.0, 3.0, 61), NumericPolicy::default()).unwrap())
    });
}

fn resonance(cr: &mut Criterion) {
    let spec = catalog::kg_equal(1.0, 0.5, 1).unwrap();
    let phase = catalog::kg_fast_phase(1.0, &[1.0]);
    let window = Window::around(&phase);
    cr.bench_function("resonances_kg_equal", |b| b.iter(|| analyze_resonances(&spec, &phase, &window, NumericPolicy::default()).unwrap()));
    let a = kg_equal();
    cr.bench_function("stability_index_kg_equal", |b| b.iter(|| a.stability(StabilityInputs::new(3.0, 3.0, 1.0, 1.0, 1)).unwrap()));
}

fn symbolic_flow(cr: &mut Criterion) {
    let a = kg_equal();
    let cp = a.coupling();
    let pair = (KgBranch::FastPlus.index(), KgBranch::SlowPlus.index());
    let root = a.resonance.roots(pair.0, pair.1)[0].clone();
    let m = InteractionMatrix::from_coupling(&cp, pair, &root, 1e-3, c(1.0), 1.0).unwrap();
    let t_end = 2.0 * 1e-3f64.ln().abs();
    let dt = flow::suggested_step(&m);
    cr.bench_function("flow_integrate_kg_eps1e-3", |b| b.iter(|| flow::integrate_flow(black_box(&m), 0.0, t_end, dt).unwrap()));
}

fn simulation(cr: &mut Criterion) {
    let (spec, sol, cfg) = three_wave_run(1e-2, 1024);
    let mut group = cr.benchmark_group("simulation");
    group.sample_size(10);
    group.bench_function("three_wave_1024_eps1e-2", |b| b.iter(|| simulator::run_instability_experiment(&spec, &sol, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, spectral, resonance, symbolic_flow, simulation);
criterion_main!(benches);
