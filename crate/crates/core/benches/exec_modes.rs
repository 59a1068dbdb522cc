use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmq_core::evalharness::{generate_banks, run_sweep_on, SweepOptions, SweepSpec};
use mmq_core::par::Exec;
use mmq_core::synthgen::{featurize_with, generate_dataset_with, GenConfig};
use mmq_core::trainer::TrainConfig;

fn bench_config() -> GenConfig {
    GenConfig {
        n_samples: 32,
        duration_s: 4.0,
        ..GenConfig::default()
    }
}

fn generation(c: &mut Criterion) {
    let cfg = bench_config();
    let mut group = c.benchmark_group("generate_32_records");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| generate_dataset_with(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn featurization(c: &mut Criterion) {
    let ds = generate_dataset_with(&bench_config(), Exec::Parallel).unwrap();
    let mut group = c.benchmark_group("featurize_32_records");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| featurize_with(&ds, exec).unwrap())
        });
    }
    group.finish();
}

fn sweep_cells(c: &mut Criterion) {
    let spec = SweepSpec {
        missing_rates: vec![0.0, 0.5],
        seeds: vec![0, 1],
        ..SweepSpec::default()
    };
    let banks = generate_banks(&bench_config(), &spec.seeds, Exec::Parallel).unwrap();
    let train = TrainConfig {
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let mut group = c.benchmark_group("sweep_2_seeds");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let opts = SweepOptions {
            exec,
            ..SweepOptions::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &opts, |b, opts| {
            b.iter(|| run_sweep_on(&spec, &banks, &train, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, generation, featurization, sweep_cells);
criterion_main!(benches);
