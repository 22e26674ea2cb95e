//! Parallel vs sequential throughput on the hot paths that fan out over
//! the rayon pool: codeword construction at experiment scale and the
//! Monte-Carlo binning oracle. "Sequential" runs the same code inside a
//! one-thread pool, so the comparison isolates the fan-out win without
//! rebuilding the crate.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use smra_core::binning::monte_carlo_error;
use smra_core::ldpca::LdpcaCode;
use smra_core::model::ChannelSpec;
use smra_core::staircase::{StaircaseCode, StaircaseParams};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn random_word(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..2u8)).collect()
}

fn staircase_encode(c: &mut Criterion) {
    let n = 40_000;
    let code = StaircaseCode::new(n, 7, StaircaseParams::default()).unwrap();
    let x = random_word(n, 1);
    let mut group = c.benchmark_group("staircase_encode_40000");
    for (label, pool) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &label, |b, _| {
            b.iter(|| pool.install(|| code.encode(&x).unwrap()));
        });
    }
    group.finish();
}

fn ldpca_encode(c: &mut Criterion) {
    let n = 6_336;
    let code = LdpcaCode::new(n, 7, 66).unwrap();
    let x = random_word(n, 2);
    let mut group = c.benchmark_group("ldpca_encode_6336");
    for (label, pool) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &label, |b, _| {
            b.iter(|| pool.install(|| code.encode(&x).unwrap()));
        });
    }
    group.finish();
}

fn binning_monte_carlo(c: &mut Criterion) {
    let ch = ChannelSpec::Bsc(0.2);
    let mut group = c.benchmark_group("binning_monte_carlo_n12");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_with_input(BenchmarkId::from_parameter(label), &label, |b, _| {
            b.iter(|| {
                pool.install(|| monte_carlo_error(12, &[0.9], &ch, 0.1, 1024, 3).unwrap())
            });
        });
    }
    group.finish();
}

criterion_group!(benches, staircase_encode, ldpca_encode, binning_monte_carlo);
criterion_main!(benches);
