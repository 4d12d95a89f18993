//! Sequential against rayon execution of the hot data-parallel loops.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use fedsurv_core::dp::{clip_in_place, mc_sensitivity_from_clipped};
use fedsurv_core::metrics::{censoring_km, evaluate, EvalTimes, PredictedSurvival};
use fedsurv_core::rng::stream;
use fedsurv_core::survival::{per_sample_gradients, Activation, Example, HazardModel, SurvivalRecord, TimeGrid};
use fedsurv_core::Execution;
use rand::Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn examples(n: usize, d: usize, grid: &TimeGrid) -> Vec<Example> {
    let mut rng = stream(&[1]);
    (0..n)
        .map(|_| {
            let x = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let rec = SurvivalRecord::new(x, rng.random::<f64>() * 14.0, rng.random_bool(0.6)).unwrap();
            Example::new(rec, grid).unwrap()
        })
        .collect()
}

fn model(d: usize, t: usize) -> HazardModel {
    HazardModel::new(vec![d, 128, 64, 64, 32, 32, t], Activation::Selu, &mut stream(&[2])).unwrap()
}

fn gradients(c: &mut Criterion) {
    let grid = TimeGrid::monthly(12).unwrap();
    let m = model(16, 12);
    let exs = examples(256, 16, &grid);
    let batch: Vec<_> = exs.iter().map(|e| (e.record.x.as_slice(), &e.target)).collect();
    let mut group = c.benchmark_group("per_sample_gradients_256");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| per_sample_gradients(&m, black_box(&batch), exec).unwrap())
        });
    }
    group.finish();
}

fn sensitivity(c: &mut Criterion) {
    let grid = TimeGrid::monthly(12).unwrap();
    let m = model(16, 12);
    let exs = examples(2000, 16, &grid);
    let pool: Vec<_> = exs.iter().map(|e| (e.record.x.as_slice(), &e.target)).collect();
    let clipped: Vec<Vec<f64>> = pool[..32]
        .iter()
        .map(|(x, t)| {
            let mut g = m.sample_gradient(x, t).unwrap().grad;
            clip_in_place(&mut g, 1.0);
            g
        })
        .collect();
    let mut group = c.benchmark_group("mc_sensitivity_64");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            let mut rng = stream(&[3]);
            b.iter(|| mc_sensitivity_from_clipped(&m, &clipped, &pool, 64, 1.0, &mut rng, exec).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let grid = TimeGrid::monthly(12).unwrap();
    let mut rng = stream(&[4]);
    let n = 5000;
    let curves: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let h = 0.02 + 0.1 * rng.random::<f64>();
            (1..=12).map(|l| (1.0 - h).powi(l)).collect()
        })
        .collect();
    let pred = PredictedSurvival::new(grid.clone(), curves).unwrap();
    let times: Vec<f64> = (0..n).map(|_| 14.0 * rng.random::<f64>()).collect();
    let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    let g = censoring_km(&times, &events).unwrap();
    let horizons = EvalTimes::default_for(&grid, &times, &events).unwrap();
    let mut group = c.benchmark_group("evaluate_5000");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate(&pred, &times, &events, &g, &horizons, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradients, sensitivity, metrics);
criterion_main!(benches);
