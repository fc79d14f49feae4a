use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use satl_core::spectrum::{regression_spectrum, FrequencyGrid, SpectrumMethod};
use satl_core::sweep::{run_sweep, GridKind, SweepGrid, SweepOutputs, SweepPlan};
use satl_core::trajectory::{ensemble_density, TrajectoryOptions};
use satl_core::{steady_state, Exec, Generator, ModelSpec, RateParams, Scheme};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn three(g: f64, pump: f64) -> RateParams {
    RateParams { g, kappa: 0.1, gamma: 1.0, pump, ..Default::default() }
}

fn spectrum(c: &mut Criterion) {
    let m = ModelSpec::new(Scheme::ThreeIncoherent, three(1.414, 1.0), 12).unwrap();
    let gen = Generator::new(&m).unwrap();
    let ss = steady_state(&gen).unwrap();
    let grid = FrequencyGrid::symmetric(8.0, 2001).unwrap();
    let mut group = c.benchmark_group("spectrum");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| regression_spectrum(&ss, &gen, &grid, SpectrumMethod::Sector, exec).unwrap())
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let m = ModelSpec::new(Scheme::ThreeIncoherent, three(1.0, 1.0), 3).unwrap();
    let psi = m.space().basis_vector(1, 0).unwrap();
    let opts = TrajectoryOptions { dt: None, t_final: 2.0, record_stride: 40 };
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| ensemble_density(&m, &psi, &opts, 256, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let values = SweepGrid { kind: GridKind::Log, start: 0.05, stop: 100.0, points: 16 }.values().unwrap();
    let mut plan = SweepPlan::new(Scheme::ThreeIncoherent, three(0.6, 0.0), "Gamma", values).unwrap();
    plan.outputs = SweepOutputs { linewidth: false, ..Default::default() };
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| b.iter(|| run_sweep(&plan, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, spectrum, ensemble, sweep);
criterion_main!(benches);
