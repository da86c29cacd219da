//! Subcommand implementations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;

use qtwin::gsc::SyndromeSet;
use qtwin::optimize::{self, OptimizeConfig};
use qtwin::probe::{self, DatasetManifest, SamplingStrategy};
use qtwin::qsim::{ExchangeModel, QubitConfig, DBZ_ASSUMED_SPECIFIC};
use qtwin::surrogate::{
    self, Checkpoint, EncoderNorm, NetworkSpec, Surrogate, TrainConfig,
};

use crate::config::apply_sets;
use crate::manifest::{value_hash, ManifestBuilder};

/// Default sampling strategy for a qubit config: the specific exchange model
/// gets the reduced model-based fractions and the longer length window.
fn default_strategy(cfg: &QubitConfig) -> SamplingStrategy {
    match cfg.exchange {
        ExchangeModel::Specific { .. } => SamplingStrategy::specific(cfg),
        ExchangeModel::General { .. } => SamplingStrategy::general(cfg),
    }
}

fn parse_lengths(raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("invalid length '{p}'"))
        })
        .collect()
}

pub struct GenDataArgs {
    pub config: String,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub lengths: Option<String>,
    pub sets: Vec<(String, Value)>,
}

pub fn cmd_gen_data(args: GenDataArgs) -> Result<()> {
    let cfg = crate::config::load_qubit_config(&args.config, &args.sets)?;
    let mut strategy_value = serde_json::to_value(default_strategy(&cfg))?;
    strategy_value = apply_sets(strategy_value, &args.sets, "strategy")?;
    let mut strategy: SamplingStrategy = serde_json::from_value(strategy_value)
        .context("invalid sampling strategy")?;
    if let Some(raw) = &args.lengths {
        let lens = parse_lengths(raw)?;
        if lens.len() != 2 {
            bail!("--lengths expects 'min,max'");
        }
        strategy.length_range = (lens[0], lens[1]);
    }
    strategy.validate().map_err(|e| anyhow!("{e}"))?;

    let t0 = Instant::now();
    let records = probe::generate_dataset(&strategy, &cfg, args.count, args.seed)?;
    let manifest = DatasetManifest {
        qubit_config_hash: cfg.hash(),
        strategy: strategy.clone(),
        count: records.len(),
        master_seed: args.seed,
    };
    probe::write_dataset(&args.out, &records, &manifest)?;

    let mut mb = ManifestBuilder::new("gen-data", args.seed);
    mb.config_hash("qubit", cfg.hash());
    mb.config_hash("strategy", value_hash(&strategy));
    mb.artifact(&args.out);
    mb.artifact(&probe::manifest_path(&args.out));
    mb.write(&args.out)?;

    println!(
        "wrote {} records to {} in {:.1?}",
        records.len(),
        args.out.display(),
        t0.elapsed()
    );
    Ok(())
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub network: String,
    pub l_max: usize,
    pub train_preset: String,
    pub seed: u64,
    pub out: PathBuf,
    pub sets: Vec<(String, Value)>,
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let records = probe::read_dataset(&args.data)?;
    if records.len() < 3 {
        bail!("dataset has {} records; need at least 3", records.len());
    }
    let sidecar: DatasetManifest = {
        let path = probe::manifest_path(&args.data);
        let text = std::fs::read_to_string(&path).with_context(|| {
            format!(
                "reading dataset manifest {} (generated by gen-data)",
                path.display()
            )
        })?;
        serde_json::from_str(&text).context("invalid dataset manifest")?
    };

    let mut train_value = serde_json::to_value(TrainConfig::by_name(&args.train_preset, args.seed)?)?;
    train_value = apply_sets(train_value, &args.sets, "train")?;
    let mut cfg: TrainConfig = serde_json::from_value(train_value).context("invalid train config")?;
    cfg.seed = args.seed;

    let spec = NetworkSpec::by_name(&args.network, args.l_max)?;
    println!(
        "network '{}' with l_max {}: {} trainable parameters",
        args.network,
        args.l_max,
        spec.parameter_count()
    );

    let split = probe::split_dataset(records.len(), probe::SPLIT_RATIOS, args.seed)?;
    // Density weights are computed on the training split only.
    let train_p_means: Vec<f64> = split.train.iter().map(|&i| records[i].stats.p_mean).collect();
    let train_weights = probe::sample_weights_of(train_p_means.iter().copied());
    let mut weights = vec![1.0; records.len()];
    for (&idx, &w) in split.train.iter().zip(&train_weights) {
        weights[idx] = w;
    }

    let norm = EncoderNorm {
        eps_scale: sidecar.strategy.voltage_range.0.abs().max(1e-9),
    };
    let window = records.iter().map(|r| r.pulse.len()).fold((usize::MAX, 0), |acc, l| {
        (acc.0.min(l), acc.1.max(l))
    });

    let t0 = Instant::now();
    let out = surrogate::train(&spec, &records, &split, &weights, &norm, &cfg)?;
    println!(
        "trained {} epochs in {:.1?}; best validation loss {:.4e} at epoch {}",
        out.history.len(),
        t0.elapsed(),
        out.best_val_loss,
        out.best_epoch
    );

    let model = Surrogate {
        network: surrogate::Network::build(spec)?,
        params: out.params,
        bn: out.bn,
        norm,
        training_window: window,
    };
    let checkpoint = Checkpoint::from_model(&model, args.seed, out.history.clone());
    checkpoint.save(&args.out)?;

    let history_path = with_suffix(&args.out, ".history.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&history_path)?);
    writeln!(w, "epoch,train_loss,val_loss,lr")?;
    for e in &out.history {
        writeln!(w, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.lr)?;
    }
    drop(w);

    // Test metrics on the held-out split.
    let test_records: Vec<_> = split.test.iter().map(|&i| records[i].clone()).collect();
    let metrics = surrogate::evaluate(&model, &test_records)?;
    println!(
        "test: MAE {:.4e} (p {:.4e} / dp {:.4e})  A_0.05 {:.4}  A_0.01 {:.4}",
        metrics.mae, metrics.mae_p, metrics.mae_dp, metrics.a_005, metrics.a_001
    );
    let metrics_path = with_suffix(&args.out, ".test_metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;

    let mut mb = ManifestBuilder::new("train", args.seed);
    mb.config_hash("dataset", sidecar.qubit_config_hash.clone());
    mb.config_hash("train", value_hash(&cfg));
    mb.config_hash("network", value_hash(&model.network.spec));
    mb.artifact(&args.out);
    mb.artifact(&history_path);
    mb.artifact(&metrics_path);
    mb.write(&args.out)?;

    if out.diverged {
        return Err(anyhow!(qtwin::Error::numeric(
            "training",
            "loss became non-finite; aborted with partial history"
        )));
    }
    Ok(())
}

pub struct OptimizeArgs {
    pub checkpoint: PathBuf,
    pub config: String,
    pub opt_config: String,
    pub seed: u64,
    pub out: PathBuf,
    pub top: usize,
    pub sets: Vec<(String, Value)>,
}

pub fn cmd_optimize(args: OptimizeArgs) -> Result<()> {
    let qubit = crate::config::load_qubit_config(&args.config, &args.sets)?;
    let opt: OptimizeConfig =
        crate::config::load_optimize_config(&args.opt_config, args.seed, &args.sets)?;
    let model = Checkpoint::load(&args.checkpoint)?.into_model()?;

    let stages = opt.resolve_stages().map_err(|e| anyhow!("{e}"))?;
    println!("resolved schedule ({} candidates):", opt.n_gatesets);
    for (i, s) in stages.iter().enumerate() {
        println!(
            "  stage {i}: {} iterations, lr {}, L_S {}, exponent {}, K_b {}, gamma {}, delta {}",
            s.iterations,
            s.learning_rate,
            s.max_seq_len,
            s.loss_exponent,
            s.minibatch,
            s.gamma,
            s.delta
        );
    }

    let pulse_dbz = opt.pulse_dbz.unwrap_or(match qubit.exchange {
        ExchangeModel::Specific { .. } => DBZ_ASSUMED_SPECIFIC,
        ExchangeModel::General { .. } => qubit.noise.dbz_mean,
    });

    std::fs::create_dir_all(&args.out)?;
    let syndromes = SyndromeSet::new(opt.max_syndrome_len);
    syndromes.write_csv(&args.out.join("syndromes.csv"))?;

    let t0 = Instant::now();
    let mut candidates = optimize::optimize_gatesets(
        &model,
        &syndromes,
        &opt,
        (qubit.eps_min_mv, qubit.eps_max_mv),
        pulse_dbz,
    )?;
    println!(
        "optimized {} candidates in {:.1?}",
        candidates.len(),
        t0.elapsed()
    );

    // Ground-truth scoring of initial and final pulses.
    let t1 = Instant::now();
    for c in candidates.iter_mut() {
        c.initial_eval = Some(optimize::evaluate_candidate(
            &c.initial_gate_set,
            &qubit,
            opt.eval_noise_samples,
            args.seed ^ 0x5eed_1111,
            c.index as u64,
        )?);
        c.eval = Some(optimize::evaluate_candidate(
            &c.gate_set,
            &qubit,
            opt.eval_noise_samples,
            args.seed ^ 0x5eed_2222,
            c.index as u64,
        )?);
    }
    println!("scored against the simulator in {:.1?}", t1.elapsed());

    optimize::report::write_reports(&args.out, &candidates, args.top)?;

    let top = optimize::select_top(&candidates, args.top);
    let mean_top: f64 = top
        .iter()
        .filter_map(|&i| candidates[i].eval.map(|e| e.incoherent_mean()))
        .sum::<f64>()
        / top.len().max(1) as f64;
    let best_coherent = top
        .first()
        .and_then(|&i| candidates[i].eval.map(|e| e.coherent_mean()))
        .unwrap_or(f64::NAN);
    println!(
        "top-{} mean noisy infidelity {:.4}; best candidate coherent infidelity {:.4}",
        top.len(),
        mean_top,
        best_coherent
    );

    let anchor = args.out.join("optimize");
    let mut mb = ManifestBuilder::new("optimize", args.seed);
    mb.config_hash("qubit", qubit.hash());
    mb.config_hash("optimize", value_hash(&opt));
    mb.config_hash("checkpoint", value_hash(&std::fs::read(&args.checkpoint)?));
    mb.artifact(&args.out.join("candidates.csv"));
    mb.artifact(&args.out.join("top10.csv"));
    mb.write(&anchor)?;
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub config: String,
    pub lengths: String,
    pub count: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub sets: Vec<(String, Value)>,
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let qubit = crate::config::load_qubit_config(&args.config, &args.sets)?;
    let model = Checkpoint::load(&args.checkpoint)?.into_model()?;
    let lengths = parse_lengths(&args.lengths)?;
    std::fs::create_dir_all(&args.out)?;

    // Metrics either on a provided dataset or on freshly generated records
    // spanning the training window.
    let mut strategy = default_strategy(&qubit);
    let records = match &args.data {
        Some(path) => probe::read_dataset(path)?,
        None => {
            strategy.length_range = model.training_window;
            probe::generate_dataset(&strategy, &qubit, args.count, args.seed)?
        }
    };
    let metrics = surrogate::evaluate(&model, &records)?;
    let metrics_path = args.out.join("metrics.json");
    std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
    println!(
        "metrics on {} records: MAE {:.4e}  A_0.05 {:.4}  A_0.01 {:.4}",
        records.len(),
        metrics.mae,
        metrics.a_005,
        metrics.a_001
    );

    let rows = surrogate::length_generalization_report(
        &model, &qubit, &strategy, &lengths, args.count, args.seed,
    )?;
    let report_path = args.out.join("length_generalization.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&report_path)?);
    writeln!(w, "length,count,mae_p,rmse_p,mae_dp,rmse_dp,in_window")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.length, r.count, r.mae_p, r.rmse_p, r.mae_dp, r.rmse_dp, r.in_window
        )?;
        println!(
            "  length {:3}: MAE(p) {:.4e}  RMSE(p) {:.4e}  {}",
            r.length,
            r.mae_p,
            r.rmse_p,
            if r.in_window { "in window" } else { "outside window" }
        );
    }
    drop(w);

    let anchor = args.out.join("eval");
    let mut mb = ManifestBuilder::new("eval", args.seed);
    mb.config_hash("qubit", qubit.hash());
    mb.config_hash("checkpoint", value_hash(&std::fs::read(&args.checkpoint)?));
    mb.artifact(&metrics_path);
    mb.artifact(&report_path);
    mb.write(&anchor)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}
