// Diagnoses the optimization landscape of a trained surrogate: how accurate
// and how sensitive the per-sequence predictions are at each syndrome
// length, how many rail against the output clip, and how a short
// high-learning-rate stage moves the loss.

use qtwin::gsc::{concat_pulses, GateSet, HoldSpec, SyndromeSet};
use qtwin::optimize::{self, OptimizeConfig, PartialStage};
use qtwin::qsim::{self, QubitConfig};
use qtwin::rng::{substream, StreamKind};
use qtwin::surrogate::Checkpoint;
use rand::Rng;

fn main() {
    let model = Checkpoint::load(std::path::Path::new("/tmp/pilot_ckpt.json"))
        .unwrap()
        .into_model()
        .unwrap();
    let cfg = QubitConfig::general();
    let syndromes = SyndromeSet::new(4);

    // Random candidate gate sets, like the optimizer's initialization.
    let mut railed0 = 0usize;
    let mut railed1 = 0usize;
    let mut total = 0usize;
    let mut grad_norm_by_len = [0.0f64; 5];
    let mut count_by_len = [0usize; 5];
    for n in 0..8u64 {
        let mut rng = substream(601, StreamKind::GateSetInit, n, 0);
        let mut pulse = || {
            let eps: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.4..1.27)).collect();
            qsim::ControlPulse::new(eps, qsim::DBZ_DEFAULT).unwrap()
        };
        let gs = GateSet { x_pulse: pulse(), y_pulse: pulse() };
        let pulses: Vec<_> = syndromes
            .sequences
            .iter()
            .map(|seq| concat_pulses(&gs, seq, &HoldSpec::none(), model.l_max()).unwrap())
            .collect();
        let upstream: Vec<(f64, f64)> = vec![(1.0, 0.0); pulses.len()];
        let (preds, grads) = model.predict_with_input_grad(&pulses, &upstream).unwrap();
        for (i, &(p, _)) in preds.iter().enumerate() {
            total += 1;
            if p <= 0.0 {
                railed0 += 1;
            }
            if p >= 1.0 {
                railed1 += 1;
            }
            let len = syndromes.sequences[i].len();
            let gnorm: f64 = grads[i].iter().map(|g| g * g).sum::<f64>().sqrt();
            grad_norm_by_len[len] += gnorm;
            count_by_len[len] += 1;
        }
    }
    println!("railing: {railed0}/{total} at 0.0, {railed1}/{total} at 1.0");
    for len in 1..=4 {
        println!(
            "  length {len}: mean |dp/deps| norm = {:.4e}",
            grad_norm_by_len[len] / count_by_len[len] as f64
        );
    }

    // Short aggressive stage to see how far the loss CAN fall per config.
    for (iters, lr, ls) in [(150usize, 0.5, 4usize), (150, 1.5, 4), (300, 0.5, 3)] {
        let ocfg = OptimizeConfig {
            n_gatesets: 8,
            gate_segments: 12,
            max_syndrome_len: 4,
            hold: None,
            stages: vec![PartialStage {
                iterations: iters,
                learning_rate: lr,
                max_seq_len: Some(ls),
                loss_exponent: Some(2),
                minibatch: Some(1),
                gamma: Some(0.0),
                delta: Some(0.0),
            }],
            voltage_bounds: None,
            pulse_dbz: None,
            eval_noise_samples: 4,
            seed: 601,
        };
        let t = std::time::Instant::now();
        let candidates = optimize::optimize_gatesets(
            &model,
            &syndromes,
            &ocfg,
            (cfg.eps_min_mv, cfg.eps_max_mv),
            qsim::DBZ_DEFAULT,
        )
        .unwrap();
        let mut initial: Vec<f64> = candidates.iter().map(|c| c.initial_gsc_loss).collect();
        let mut fin: Vec<f64> = candidates.iter().map(|c| c.gsc_loss).collect();
        initial.sort_by(|a, b| a.partial_cmp(b).unwrap());
        fin.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "stage trial iters={iters} lr={lr} L_S={ls}: median {:.4e} -> {:.4e} (ratio {:.1}x) min {:.3e} [{:.0?}]",
            initial[initial.len() / 2],
            fin[fin.len() / 2],
            initial[initial.len() / 2] / fin[fin.len() / 2],
            fin[0],
            t.elapsed()
        );
    }
}
