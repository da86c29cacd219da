//! Benchmarks of the ground-truth simulator path.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qtwin::qsim::{
    self, measure, propagate, ControlPulse, NoiseRealization, QubitConfig, TransferKernel,
};

fn random_pulse(len: usize, rng: &mut ChaCha8Rng) -> ControlPulse {
    let eps = (0..len).map(|_| rng.gen_range(-2.4..1.27)).collect();
    ControlPulse::new(eps, qsim::DBZ_DEFAULT).unwrap()
}

fn bench_propagate(c: &mut Criterion) {
    let cfg = QubitConfig::general();
    let kernel = TransferKernel::build(&cfg.kernel).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    c.bench_function("propagate_50_segments", |b| {
        b.iter_batched(
            || random_pulse(50, &mut rng),
            |pulse| {
                let quiet = NoiseRealization::quiet(pulse.dbz, pulse.len());
                propagate(&pulse, &cfg.exchange, &kernel, &quiet).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_measure(c: &mut Criterion) {
    let cfg = QubitConfig::general();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pulse = random_pulse(30, &mut rng);

    c.bench_function("measure_noisy_n60", |b| {
        let mut id = 0u64;
        b.iter(|| {
            id += 1;
            measure(&pulse, &cfg, 7, id).unwrap()
        })
    });
}

fn bench_fast_noise(c: &mut Criterion) {
    let cfg = QubitConfig::general();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    c.bench_function("fast_noise_trace_50", |b| {
        b.iter(|| qsim::sample_fast_noise(&cfg.noise, 50, &mut rng))
    });
}

criterion_group!(benches, bench_propagate, bench_measure, bench_fast_noise);
criterion_main!(benches);
