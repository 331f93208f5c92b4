use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

use coupled_smc::couplings::{SchemeId, StepOptions};
use coupled_smc::diffusion::gauss_transform::{direct_mixture, GaussMixture};
use coupled_smc::diffusion::{synthesize_observations, OuModel, OuPotential, OuSetup, OU_RATE};
use coupled_smc::par;
use coupled_smc::rng::{rng_from_seed, substream, tags};
use coupled_smc::stats::{replicate_seed, run_single, RunSpec};
use coupled_smc::TestFunction;
use rand::Rng;

fn ou_pair(level: u32, horizon: usize) -> OuModel {
    let ys = synthesize_observations(
        OU_RATE,
        0.0,
        horizon + 1,
        0.2,
        0.8,
        &mut substream(1, tags::OBSERVATIONS, 0),
    );
    OuModel::level_pair(OuSetup::new(OuPotential::logistic(0.2, 0.8, ys).unwrap()), level).unwrap()
}

fn spec(scheme: SchemeId, particles: usize, n: usize) -> RunSpec {
    RunSpec {
        scheme,
        particles,
        horizons: vec![n],
        phi: TestFunction::identity(),
        level: 4,
        opts: StepOptions::default(),
        timing: false,
    }
}

/// Rayon replicate map against the sequential path on the same work.
fn replicates(c: &mut Criterion) {
    let model = ou_pair(4, 10);
    let s = spec(SchemeId::W, 500, 10);
    let one = |r: usize| run_single(&model, &s, r, replicate_seed(3, r));
    let mut group = c.benchmark_group("replicates_32");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| black_box(par::map_indexed(32, one))));
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(par::map_indexed_sequential(32, one)))
    });
    group.finish();
}

/// Clustered Gauss transform against direct summation of the predictive mixture.
fn mixture(c: &mut Criterion) {
    let mut rng = rng_from_seed(5);
    let mut group = c.benchmark_group("mixture_eval");
    for size in [100usize, 1000, 10_000] {
        let means: Vec<f64> = (0..size).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let weights = vec![1.0 / size as f64; size];
        let variance = 0.3;
        group.bench_with_input(BenchmarkId::new("clustered", size), &size, |b, _| {
            b.iter_batched(
                || GaussMixture::new(&means, &weights, variance),
                |m| black_box((0..64).map(|i| m.eval(-2.0 + 0.0625 * i as f64)).sum::<f64>()),
                BatchSize::SmallInput,
            )
        });
        group.bench_with_input(BenchmarkId::new("direct", size), &size, |b, _| {
            b.iter(|| {
                black_box(
                    (0..64)
                        .map(|i| direct_mixture(&means, &weights, variance, -2.0 + 0.0625 * i as f64))
                        .sum::<f64>(),
                )
            })
        });
    }
    group.finish();
}

/// One coupled filter run of each scheme.
fn schemes(c: &mut Criterion) {
    let model = ou_pair(4, 5);
    let mut group = c.benchmark_group("coupled_filter_n5_N1000");
    group.sample_size(10);
    for scheme in SchemeId::ALL {
        let s = spec(scheme, 1000, 5);
        group.bench_function(scheme.as_str(), |b| b.iter(|| black_box(run_single(&model, &s, 0, 9))));
    }
    group.finish();
}

criterion_group!(benches, replicates, mixture, schemes);
criterion_main!(benches);
