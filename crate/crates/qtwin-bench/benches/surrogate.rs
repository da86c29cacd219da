//! Benchmarks of the surrogate forward/backward path, sized like the
//! desk-scale training and optimization workloads.

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qtwin::qsim::{self, ControlPulse};
use qtwin::surrogate::network::{Mode, Network, SeqBatch, VecBatch};
use qtwin::surrogate::spec::NetworkSpec;
use qtwin::surrogate::{EncoderNorm, Surrogate};

fn random_batch(b: usize, t: usize, rng: &mut ChaCha8Rng) -> SeqBatch {
    let mut x = SeqBatch::zeros(b, t, 3);
    for v in &mut x.data {
        *v = rng.gen_range(-1.0..1.0);
    }
    x
}

fn bench_forward(c: &mut Criterion) {
    let net = Network::build(NetworkSpec::reduced(50)).unwrap();
    let params = net.init_params(1);
    let bn = net.fresh_bn();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = random_batch(64, 50, &mut rng);

    c.bench_function("reduced_forward_b64", |b| {
        b.iter(|| net.forward(&params, &bn, &batch, Mode::Eval, false).unwrap())
    });

    c.bench_function("reduced_forward_backward_b64", |b| {
        b.iter(|| {
            let pass = net.forward(&params, &bn, &batch, Mode::Train, true).unwrap();
            let mut dout = VecBatch::zeros(64, 2);
            dout.data.iter_mut().for_each(|v| *v = 0.01);
            net.backward(&params, pass.trace.as_ref().unwrap(), &dout, true, false)
        })
    });
}

fn bench_input_gradient(c: &mut Criterion) {
    let network = Network::build(NetworkSpec::reduced(50)).unwrap();
    let params = network.init_params(2);
    let bn = network.fresh_bn();
    let model = Surrogate {
        network,
        params,
        bn,
        norm: EncoderNorm { eps_scale: 2.4 },
        training_window: (10, 20),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pulses: Vec<ControlPulse> = (0..30)
        .map(|_| {
            let len = rng.gen_range(12..=48);
            let eps = (0..len).map(|_| rng.gen_range(-2.4..1.27)).collect();
            ControlPulse::new(eps, qsim::DBZ_DEFAULT).unwrap()
        })
        .collect();
    let upstream = vec![(0.03, 0.001); 30];

    c.bench_function("syndrome_batch_input_grad", |b| {
        b.iter(|| model.predict_with_input_grad(&pulses, &upstream).unwrap())
    });
}

criterion_group!(benches, bench_forward, bench_input_gradient);
criterion_main!(benches);
