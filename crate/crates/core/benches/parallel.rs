//! Sequential vs rayon execution of the three hot loops.

use std::hint::black_box;

use arraysel::dataset::{generate_training_data, DirectionPlan, GenerationConfig};
use arraysel::doa::{pseudospectrum, AngularGrid};
use arraysel::geometry::build_uca;
use arraysel::nn::{batch_gradient, build_selector_cnn, CnnSettings, Params};
use arraysel::signal::{sample_covariance, simulate_snapshots, SourceDirection};
use arraysel::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn labeling(c: &mut Criterion) {
    let uca = build_uca(8, 0.5).unwrap();
    let gen = GenerationConfig::new(3, DirectionPlan::Azimuth { count: 12, theta_deg: 90.0 }, 4, 100, vec![20.0], 1);
    let mut group = c.benchmark_group("label_dataset");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_training_data(black_box(&uca), &gen, exec).unwrap())
        });
    }
    group.finish();
}

fn music_grid(c: &mut Criterion) {
    let uca = build_uca(16, 0.5).unwrap();
    let y = simulate_snapshots(&uca, &SourceDirection::azimuth(40.0), 100, 1.0, 0.1, None, 2).unwrap();
    let r = sample_covariance(&y);
    let grid = AngularGrid::azimuth_default();
    let mut group = c.benchmark_group("music_pseudospectrum");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pseudospectrum(uca.positions(), black_box(&r), &grid, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn batch_gradients(c: &mut Criterion) {
    let net =
        build_selector_cnn(8, 6, &CnnSettings { conv_filters: 16, fc_units: 64, ..Default::default() }, 3).unwrap();
    let data: Vec<Vec<f32>> =
        (0..64).map(|s| (0..192).map(|v| ((s * 31 + v * 7) % 17) as f32 / 17.0 - 0.5).collect()).collect();
    let batch: Vec<(&[f32], usize)> = data.iter().enumerate().map(|(i, x)| (x.as_slice(), i % 6)).collect();
    let seeds: Vec<u64> = (0..64).collect();
    let params = Params::from_model(&net);
    let mut group = c.benchmark_group("batch_gradient");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| batch_gradient(&net, &params, black_box(&batch), Some(&seeds), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, labeling, music_grid, batch_gradients);
criterion_main!(benches);
