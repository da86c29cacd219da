//! Finite-difference verification of the reverse-mode gradients.
//!
//! Used by the test and acceptance suites: compares analytic gradients of a
//! weighted-MAE loss against central differences at random coordinates on
//! miniature architectures. Test points are kept strictly inside the clip
//! interval, where the loss is differentiable.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::surrogate::network::{BnState, Mode, Network, Parameters, SeqBatch, VecBatch};
use crate::surrogate::spec::{Activation, LayerSpec, NetworkSpec, INPUT_CHANNELS, OUTPUTS};
use crate::surrogate::weighted_mae_grad;

pub const FD_STEP: f64 = 1e-5;

/// Outcome of one finite-difference sweep.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub coords_checked: usize,
    pub max_rel_error: f64,
}

/// A small architecture exercising every layer kind (including batch norm).
pub fn mini_spec_with_bn() -> NetworkSpec {
    use Activation::*;
    use LayerSpec::*;
    NetworkSpec {
        l_max: 6,
        layers: vec![
            ZeroPad { pad: 1 },
            Conv { width: 3, channels: 4, activation: Selu },
            BatchNorm,
            Conv { width: 1, channels: 3, activation: Sine },
            Lstm { units: 5 },
            Dense { units: 4, activation: Relu },
            Dense { units: 2, activation: Linear },
            Clip,
        ],
    }
}

/// Batch-norm-free variant matching the reduced preset's layer mix.
pub fn mini_spec_plain() -> NetworkSpec {
    use Activation::*;
    use LayerSpec::*;
    NetworkSpec {
        l_max: 6,
        layers: vec![
            ZeroPad { pad: 1 },
            Conv { width: 3, channels: 3, activation: Selu },
            Conv { width: 3, channels: 4, activation: Selu },
            Lstm { units: 4 },
            Dense { units: 3, activation: Relu },
            Dense { units: 2, activation: Linear },
            Clip,
        ],
    }
}

struct Setup {
    net: Network,
    params: Parameters,
    bn: BnState,
    input: SeqBatch,
    target: VecBatch,
    weights: Vec<f64>,
}

fn build_setup(spec: NetworkSpec, mode: Mode, seed: u64, batch: usize) -> Setup {
    let net = Network::build(spec).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut params = net.init_params(seed);
    // Nudge off the symmetric init, then shrink the head weights so outputs
    // cluster near the 0.5 bias, inside the clip interval.
    for v in &mut params.0 {
        *v += r.gen_range(-0.05..0.05);
    }
    let head = net
        .param_slots()
        .iter()
        .rfind(|s| s.name.ends_with("dense.weight"))
        .unwrap()
        .clone();
    for v in &mut params.0[head.offset..head.offset + head.len] {
        *v *= 0.2;
    }

    let mut bn = net.fresh_bn();
    let random_input = |r: &mut ChaCha8Rng, b: usize, t: usize| {
        let mut x = SeqBatch::zeros(b, t, INPUT_CHANNELS);
        for v in &mut x.data {
            *v = r.gen_range(-0.9..0.9);
        }
        x
    };
    // Warm the running statistics so eval mode is exercised away from the
    // (0, 1) defaults.
    let warm = random_input(&mut r, 8, net.spec.l_max);
    for _ in 0..3 {
        let pass = net.forward(&params, &bn, &warm, Mode::Train, false).unwrap();
        for (s, u) in bn.stats.iter_mut().zip(pass.bn_updates) {
            *s = u;
        }
    }

    let input = random_input(&mut r, batch, net.spec.l_max);
    let mut target = VecBatch::zeros(batch, OUTPUTS);
    for v in &mut target.data {
        *v = r.gen_range(0.1..0.9) + 1e-7;
    }
    let weights = (0..batch).map(|_| r.gen_range(0.5..2.0)).collect();

    let setup = Setup {
        net,
        params,
        bn,
        input,
        target,
        weights,
    };
    // The checks are only valid strictly inside the clip interval.
    let out = setup
        .net
        .forward(&setup.params, &setup.bn, &setup.input, mode, false)
        .unwrap()
        .output;
    assert!(
        out.data.iter().all(|&v| v > 1e-4 && v < 1.0 - 1e-4),
        "setup produced outputs on the clip boundary; change the seed"
    );
    setup
}

fn loss_of(s: &Setup, params: &Parameters, input: &SeqBatch, mode: Mode) -> f64 {
    let pass = s.net.forward(params, &s.bn, input, mode, false).unwrap();
    weighted_mae_grad(&pass.output, &s.target, &s.weights).0
}

fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-10 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Central-difference check of `n_coords` random parameter coordinates.
pub fn check_param_gradients(
    spec: NetworkSpec,
    mode: Mode,
    seed: u64,
    n_coords: usize,
) -> GradCheck {
    let s = build_setup(spec, mode, seed, 5);
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);

    let pass = s
        .net
        .forward(&s.params, &s.bn, &s.input, mode, true)
        .unwrap();
    let (_, dout) = weighted_mae_grad(&pass.output, &s.target, &s.weights);
    let analytic = s
        .net
        .backward(&s.params, pass.trace.as_ref().unwrap(), &dout, true, false)
        .params
        .unwrap();

    let mut max_rel: f64 = 0.0;
    let mut perturbed = s.params.clone();
    for _ in 0..n_coords {
        let i = r.gen_range(0..s.net.n_params());
        perturbed.0[i] = s.params.0[i] + FD_STEP;
        let up = loss_of(&s, &perturbed, &s.input, mode);
        perturbed.0[i] = s.params.0[i] - FD_STEP;
        let down = loss_of(&s, &perturbed, &s.input, mode);
        perturbed.0[i] = s.params.0[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        if fd.abs() < 1e-8 && analytic[i].abs() < 1e-8 {
            continue;
        }
        max_rel = max_rel.max(relative_error(fd, analytic[i]));
    }
    GradCheck {
        coords_checked: n_coords,
        max_rel_error: max_rel,
    }
}

/// Central-difference check of `n_coords` random input-tensor coordinates
/// (inference mode, as used during pulse optimization).
pub fn check_input_gradients(spec: NetworkSpec, seed: u64, n_coords: usize) -> GradCheck {
    let s = build_setup(spec, Mode::Eval, seed, 4);
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);

    let pass = s
        .net
        .forward(&s.params, &s.bn, &s.input, Mode::Eval, true)
        .unwrap();
    let (_, dout) = weighted_mae_grad(&pass.output, &s.target, &s.weights);
    let analytic = s
        .net
        .backward(&s.params, pass.trace.as_ref().unwrap(), &dout, false, true)
        .input
        .unwrap();

    let mut max_rel: f64 = 0.0;
    let mut perturbed = s.input.clone();
    for _ in 0..n_coords {
        let i = r.gen_range(0..s.input.data.len());
        perturbed.data[i] = s.input.data[i] + FD_STEP;
        let up = loss_of(&s, &s.params, &perturbed, Mode::Eval);
        perturbed.data[i] = s.input.data[i] - FD_STEP;
        let down = loss_of(&s, &s.params, &perturbed, Mode::Eval);
        perturbed.data[i] = s.input.data[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        if fd.abs() < 1e-8 && analytic.data[i].abs() < 1e-8 {
            continue;
        }
        max_rel = max_rel.max(relative_error(fd, analytic.data[i]));
    }
    GradCheck {
        coords_checked: n_coords,
        max_rel_error: max_rel,
    }
}
