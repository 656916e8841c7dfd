//! Rayon fan-out against the sequential path for the three parallel workloads:
//! batch loss/gradient during training, grid candidates, and verification trials.
//!
//! `cargo bench -p mmo-core --bench parallel` measures the default (parallel)
//! build; add `--no-default-features` for the sequential one. The `seq/*`
//! cases below run the same work through a one-thread pool for a side-by-side
//! comparison within a single build.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mmo_core::data::synth_linear;
use mmo_core::losses::gamma_from;
use mmo_core::metrics::{preset, Averaging, Preset};
use mmo_core::solver::{train_surrogate, TrainConfig};
use mmo_core::verify::{check_factorization, check_hconsistency_bound};

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

fn bench_training(c: &mut Criterion) {
    let (ds, _) = synth_linear(20, 100, 4000, 0.05, 1.0, 1).unwrap();
    let spec = preset(Preset::F1, 20, Averaging::Micro).unwrap();
    let gamma = gamma_from(&spec.alpha, &spec.beta, 0.5).unwrap();
    let cfg = TrainConfig { epochs: 1, batch_size: 512, learning_rate: 0.01, ..TrainConfig::default() };
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for threads in [1, num_threads()] {
        group.bench_with_input(BenchmarkId::new("threads", threads), &threads, |b, &t| {
            b.iter(|| with_threads(t, || train_surrogate(&ds, &gamma, &cfg).unwrap()))
        });
    }
    group.finish();
}

fn bench_verify(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify_trials");
    group.sample_size(10);
    for threads in [1, num_threads()] {
        group.bench_with_input(BenchmarkId::new("factorization", threads), &threads, |b, &t| {
            b.iter(|| with_threads(t, || check_factorization(6, 20, 0).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("bound_l2", threads), &threads, |b, &t| {
            b.iter(|| with_threads(t, || check_hconsistency_bound(2, 0.0, 16, 0).unwrap()))
        });
    }
    group.finish();
}

fn num_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

criterion_group!(benches, bench_training, bench_verify);
criterion_main!(benches);
