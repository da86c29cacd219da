// Is the calibration-loss stall a representational floor or slow dynamics?
// One candidate, many iterations, escalating learning rates.

use qtwin::gsc::SyndromeSet;
use qtwin::optimize::{self, OptimizeConfig, PartialStage};
use qtwin::qsim::{self, QubitConfig};
use qtwin::surrogate::Checkpoint;

fn main() {
    let model = Checkpoint::load(std::path::Path::new("/tmp/pilot_ckpt.json"))
        .unwrap()
        .into_model()
        .unwrap();
    let cfg = QubitConfig::general();
    let syndromes = SyndromeSet::new(4);

    let stage = |iterations: usize, lr: f64| PartialStage {
        iterations,
        learning_rate: lr,
        max_seq_len: Some(4),
        loss_exponent: Some(2),
        minibatch: Some(1),
        gamma: Some(0.0),
        delta: Some(0.0),
    };
    let ocfg = OptimizeConfig {
        n_gatesets: 2,
        gate_segments: 12,
        max_syndrome_len: 4,
        hold: None,
        stages: vec![stage(1500, 0.5), stage(1500, 0.1), stage(1000, 0.03)],
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
    for c in &candidates {
        println!(
            "cand {}: initial {:.4e} final {:.4e} (ratio {:.1}x) [{:.0?}]",
            c.index,
            c.initial_gsc_loss,
            c.gsc_loss,
            c.initial_gsc_loss / c.gsc_loss,
            t.elapsed()
        );
        for (i, l) in c.history.iter().enumerate().step_by(400) {
            println!("  iter {i:5}: {l:.4e}");
        }
    }
    let eval = optimize::evaluate_candidate(&candidates[0].gate_set, &cfg, 30, 1, 0).unwrap();
    println!("cand 0 coherent infidelity: {:?}", eval.coherent);
}
