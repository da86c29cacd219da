// End-to-end pilot at adjustable scale: dataset -> training -> gate-set
// optimization -> ground-truth scoring. Used to calibrate the desk-scale
// schedules before they are frozen into the acceptance suite.

use std::time::Instant;

use qtwin::gsc::SyndromeSet;
use qtwin::optimize::{self, OptimizeConfig};
use qtwin::probe::{self, SamplingStrategy};
use qtwin::qsim::QubitConfig;
use qtwin::surrogate::{self, EncoderNorm, NetworkSpec, Surrogate, TrainConfig};


fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_records: usize = args.get(1).map_or(5_000, |s| s.parse().unwrap());
    let max_epochs: usize = args.get(2).map_or(20, |s| s.parse().unwrap());
    let k_gatesets: usize = args.get(3).map_or(8, |s| s.parse().unwrap());
    let iter_div: usize = args.get(4).map_or(100, |s| s.parse().unwrap());

    let mut cfg = QubitConfig::general();
    cfg.noise.enabled = false;
    cfg.noise.n_samples = 1;

    let mut strategy = SamplingStrategy::general(&cfg);
    let l_lo: usize = args.get(8).map_or(10, |s| s.parse().unwrap());
    let l_hi: usize = args.get(9).map_or(20, |s| s.parse().unwrap());
    strategy.length_range = (l_lo, l_hi);

    let t0 = Instant::now();
    let records = probe::generate_dataset(&strategy, &cfg, n_records, 11).unwrap();
    println!("dataset: {} records in {:.1?}", records.len(), t0.elapsed());

    let split = probe::split_dataset(records.len(), probe::SPLIT_RATIOS, 11).unwrap();
    let train_records: Vec<_> = split.train.iter().map(|&i| records[i].clone()).collect();
    let train_weights = probe::sample_weights(&train_records);
    let mut weights = vec![1.0; records.len()];
    for (&idx, &w) in split.train.iter().zip(&train_weights) {
        weights[idx] = w;
    }

    let spec = NetworkSpec::reduced(50);
    let norm = EncoderNorm::from_config(&cfg);
    let mut tc = TrainConfig::desk(11);
    tc.max_epochs = max_epochs;
    tc.batch_size = args.get(5).map_or(256, |s| s.parse().unwrap());
    tc.lr0 = args.get(6).map_or(1e-3, |s| s.parse().unwrap());
    let stop: f64 = args.get(7).map_or(0.93, |s| s.parse().unwrap());
    tc.stop_at_val_a05 = if stop > 0.0 { Some(stop) } else { None };
    tc.log_every = 1;

    let t1 = Instant::now();
    let out = surrogate::train(&spec, &records, &split, &weights, &norm, &tc).unwrap();
    let n_epochs = out.history.len();
    println!(
        "training: {} epochs in {:.1?} ({:.2?}/epoch), best val {:.4e} at {}",
        n_epochs,
        t1.elapsed(),
        t1.elapsed() / n_epochs.max(1) as u32,
        out.best_val_loss,
        out.best_epoch
    );
    for e in out.history.iter().step_by((n_epochs / 12).max(1)) {
        println!(
            "  epoch {:3}: train {:.4e} val {:.4e} lr {:.2e}",
            e.epoch, e.train_loss, e.val_loss, e.lr
        );
    }

    let model = Surrogate {
        network: surrogate::Network::build(spec).unwrap(),
        params: out.params,
        bn: out.bn,
        norm,
        training_window: (l_lo, l_hi),
    };
    surrogate::Checkpoint::from_model(&model, 11, out.history.clone())
        .save(std::path::Path::new("/tmp/pilot_ckpt.json"))
        .unwrap();
    let test_records: Vec<_> = split.test.iter().map(|&i| records[i].clone()).collect();
    let metrics = surrogate::evaluate(&model, &test_records).unwrap();
    println!(
        "test: MAE(p)={:.4e} A_0.05={:.3} A_0.01={:.3}",
        metrics.mae_p, metrics.a_005, metrics.a_001
    );

    // Length generalization spot check.
    let rows = surrogate::length_generalization_report(&model, &cfg, &strategy, &[12, 24, 36, 48], 200, 77)
        .unwrap();
    for r in &rows {
        println!(
            "  length {:2}: MAE(p)={:.4e} rmse={:.4e} in_window={}",
            r.length, r.mae_p, r.rmse_p, r.in_window
        );
    }

    // Optimization.
    let mut ocfg = OptimizeConfig::desk(21);
    ocfg.n_gatesets = k_gatesets;
    ocfg.stages = ocfg
        .stages
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.iterations = (s.iterations * 10 / iter_div).max(1);
            if let Some(kb) = s.minibatch {
                s.minibatch = Some(kb.min(k_gatesets));
            }
            s
        })
        .collect();
    let syndromes = SyndromeSet::new(ocfg.max_syndrome_len);
    let t2 = Instant::now();
    let mut candidates = optimize::optimize_gatesets(
        &model,
        &syndromes,
        &ocfg,
        (cfg.eps_min_mv, cfg.eps_max_mv),
        qtwin::qsim::DBZ_DEFAULT,
    )
    .unwrap();
    println!("optimize: {} candidates in {:.1?}", candidates.len(), t2.elapsed());

    let eval_cfg = QubitConfig::general(); // noise on for incoherent scoring
    for c in candidates.iter_mut() {
        c.initial_eval = Some(
            optimize::evaluate_candidate(&c.initial_gate_set, &eval_cfg, 16, 31, c.index as u64)
                .unwrap(),
        );
        c.eval = Some(
            optimize::evaluate_candidate(&c.gate_set, &eval_cfg, 16, 32, c.index as u64).unwrap(),
        );
    }

    let mut losses: Vec<f64> = candidates.iter().map(|c| c.gsc_loss).collect();
    losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_final = losses[losses.len() / 2];
    let mut initial: Vec<f64> = candidates.iter().map(|c| c.initial_gsc_loss).collect();
    initial.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "gsc loss: median initial {:.4e} -> median final {:.4e} (ratio {:.1}x)",
        initial[initial.len() / 2],
        median_final,
        initial[initial.len() / 2] / median_final
    );

    for c in &candidates {
        let e = c.eval.unwrap();
        let ie = c.initial_eval.unwrap();
        println!(
            "  cand {:2}: loss {:.3e} coherent ({:.4}, {:.4}) incoh {:.4} init_coh {:.4}",
            c.index,
            c.gsc_loss,
            e.coherent[0],
            e.coherent[1],
            e.incoherent_mean(),
            ie.coherent_mean()
        );
    }
    let best = optimize::select_top(&candidates, 10);
    let best_coh = candidates[best[0]].eval.unwrap().coherent_mean();
    println!("best candidate coherent infidelity: {:.4}", best_coh);
}
