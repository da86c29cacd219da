// Loads the pilot checkpoint and runs the desk-scale optimization at an
// adjustable iteration divisor; prints the three quality measurements used
// to size the acceptance thresholds.

use std::time::Instant;

use qtwin::gsc::SyndromeSet;
use qtwin::optimize::{self, OptimizeConfig};
use qtwin::qsim::QubitConfig;
use qtwin::surrogate::Checkpoint;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(1).map_or(32, |s| s.parse().unwrap());
    let div: usize = args.get(2).map_or(10, |s| s.parse().unwrap());
    let seed: u64 = args.get(3).map_or(601, |s| s.parse().unwrap());

    let model = Checkpoint::load(std::path::Path::new("/tmp/pilot_ckpt.json"))
        .unwrap()
        .into_model()
        .unwrap();
    let cfg = QubitConfig::general();

    let mut ocfg = OptimizeConfig::desk(seed);
    ocfg.n_gatesets = k;
    if div != 10 {
        ocfg.stages = ocfg
            .stages
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.iterations = (s.iterations * 10 / div).max(1);
                s
            })
            .collect();
    }
    let syndromes = SyndromeSet::new(ocfg.max_syndrome_len);
    let t0 = Instant::now();
    let mut candidates = optimize::optimize_gatesets(
        &model,
        &syndromes,
        &ocfg,
        (cfg.eps_min_mv, cfg.eps_max_mv),
        qtwin::qsim::DBZ_DEFAULT,
    )
    .unwrap();
    println!("optimize: K={k} div={div} in {:.1?}", t0.elapsed());

    for c in candidates.iter_mut() {
        c.initial_eval = Some(
            optimize::evaluate_candidate(&c.initial_gate_set, &cfg, 60, seed ^ 1, c.index as u64)
                .unwrap(),
        );
        c.eval = Some(
            optimize::evaluate_candidate(&c.gate_set, &cfg, 60, seed ^ 2, c.index as u64).unwrap(),
        );
    }

    let mut initial: Vec<f64> = candidates.iter().map(|c| c.initial_gsc_loss).collect();
    let mut fin: Vec<f64> = candidates.iter().map(|c| c.gsc_loss).collect();
    initial.sort_by(|a, b| a.partial_cmp(b).unwrap());
    fin.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med_i = initial[initial.len() / 2];
    let med_f = fin[fin.len() / 2];
    println!("(a) median gsc loss {med_i:.4e} -> {med_f:.4e} (ratio {:.1}x)", med_i / med_f);

    let top = optimize::select_top(&candidates, 10);
    let best_coh = top
        .iter()
        .map(|&i| candidates[i].eval.unwrap().coherent_mean())
        .fold(f64::INFINITY, f64::min);
    println!("(b) best selected coherent infidelity: {best_coh:.4}");

    let init_coh: Vec<f64> = candidates
        .iter()
        .map(|c| c.initial_eval.unwrap().coherent_mean())
        .collect();
    let final_coh: Vec<f64> = candidates
        .iter()
        .map(|c| c.eval.unwrap().coherent_mean())
        .collect();
    let r = optimize::pearson(&init_coh, &final_coh);
    println!("(c) pearson r(initial, final) = {r:.3}");

    let mean_top: f64 = top
        .iter()
        .map(|&i| candidates[i].eval.unwrap().incoherent_mean())
        .sum::<f64>()
        / top.len() as f64;
    println!("top-10 mean incoherent infidelity: {mean_top:.4}");
    for &i in &top {
        let c = &candidates[i];
        let e = c.eval.unwrap();
        println!(
            "  cand {:2}: loss {:.3e} coh ({:.4}, {:.4}) incoh {:.4}",
            c.index, c.gsc_loss, e.coherent[0], e.coherent[1], e.incoherent_mean()
        );
    }
}
