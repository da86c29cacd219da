//! Fast CLI behavior tests: exit codes, artifact layout, and a smoke run of
//! the full pipeline at miniature scale.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qtwin")
}

fn tmp(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(args: &[&str]) -> i32 {
    Command::new(bin())
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

#[test]
fn unknown_config_exits_with_2() {
    assert_eq!(
        exit_code(&[
            "gen-data",
            "--config",
            "no-such-config",
            "--count",
            "1",
            "--out",
            "/tmp/ignored.jsonl"
        ]),
        2
    );
}

#[test]
fn bad_set_override_exits_with_2() {
    let dir = tmp("cli-bad-set");
    assert_eq!(
        exit_code(&[
            "gen-data",
            "--config",
            "general",
            "--count",
            "1",
            "--set",
            "qubit.not_a_field=1",
            "--out",
            dir.join("x.jsonl").to_str().unwrap(),
        ]),
        2
    );
}

#[test]
fn config_dir_env_resolves_bare_names() {
    let dir = tmp("cli-config-dir");
    let cfg = qtwin::QubitConfig::general();
    std::fs::write(
        dir.join("mydevice.json"),
        serde_json::to_string_pretty(&cfg).unwrap(),
    )
    .unwrap();

    // Without the env var the bare name fails with exit 2.
    let out = Command::new(bin())
        .args(["gen-data", "--config", "mydevice.json", "--count", "2", "--out"])
        .arg(dir.join("a.jsonl"))
        .current_dir("/")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // With QTWIN_CONFIG_DIR set the same invocation resolves.
    let out = Command::new(bin())
        .args(["gen-data", "--config", "mydevice.json", "--count", "2", "--out"])
        .arg(dir.join("b.jsonl"))
        .current_dir("/")
        .env("QTWIN_CONFIG_DIR", &dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("b.jsonl").exists());
}

#[test]
fn shipped_config_files_match_code_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    for (name, expected) in [
        ("general.json", serde_json::to_value(qtwin::QubitConfig::general()).unwrap()),
        ("specific.json", serde_json::to_value(qtwin::QubitConfig::specific()).unwrap()),
    ] {
        let path = root.join("configs").join(name);
        let text = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let on_disk: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(on_disk, expected, "configs/{name} drifted from the code preset");
    }
}

#[test]
fn pipeline_smoke_run() {
    let dir = tmp("cli-smoke");
    let data = dir.join("probe.jsonl");

    // Dataset in the general preset range, noise off for speed.
    run_ok(&[
        "gen-data",
        "--config",
        "general",
        "--count",
        "300",
        "--seed",
        "3",
        "--lengths",
        "8,14",
        "--set",
        "qubit.noise.enabled=false",
        "--out",
        data.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().count(), 300);
    for line in text.lines().take(20) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let eps = v["epsilons_mv"].as_array().unwrap();
        assert!(eps.len() >= 8 && eps.len() <= 14);
        for e in eps {
            let e = e.as_f64().unwrap();
            assert!((-2.4..=1.27).contains(&e), "voltage {e} out of range");
        }
    }
    assert!(data.with_extension("jsonl.manifest.json").exists() || {
        // manifest path appends to the full name
        Path::new(&format!("{}.manifest.json", data.display())).exists()
    });

    // Train a miniature model.
    let ckpt = dir.join("model.ckpt.json");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--network",
        "reduced",
        "--l-max",
        "50",
        "--train-preset",
        "desk",
        "--seed",
        "4",
        "--set",
        "train.max_epochs=2",
        "--set",
        "train.batch_size=64",
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(ckpt.exists());
    let history = std::fs::read_to_string(format!("{}.history.csv", ckpt.display())).unwrap();
    assert_eq!(history.lines().count(), 1 + 2, "history rows = epochs + header");

    // K = 2 optimization smoke run: all report CSVs plus one file per candidate.
    let opt_cfg = dir.join("opt.json");
    std::fs::write(
        &opt_cfg,
        serde_json::json!({
            "n_gatesets": 2,
            "gate_segments": 12,
            "max_syndrome_len": 2,
            "stages": [
                {"iterations": 4, "learning_rate": 0.2, "max_seq_len": 2,
                 "loss_exponent": 2, "minibatch": 1, "gamma": 0.0, "delta": 0.0}
            ],
            "eval_noise_samples": 3,
            "seed": 0
        })
        .to_string(),
    )
    .unwrap();
    let opt_out = dir.join("opt");
    run_ok(&[
        "optimize",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        "general",
        "--opt-config",
        opt_cfg.to_str().unwrap(),
        "--seed",
        "5",
        "--out",
        opt_out.to_str().unwrap(),
    ]);
    for name in [
        "candidates.csv",
        "loss_history.csv",
        "initial_vs_final.csv",
        "sorted_infidelities.csv",
        "top10.csv",
        "histogram.csv",
        "syndromes.csv",
        "candidate_000.json",
        "candidate_001.json",
    ] {
        assert!(opt_out.join(name).exists(), "missing report {name}");
    }

    // Selected losses are bounded by every non-selected loss.
    let top: Vec<f64> = read_csv_column(&opt_out.join("top10.csv"), 2);
    let all: Vec<f64> = read_csv_column(&opt_out.join("candidates.csv"), 2);
    let max_top = top.iter().cloned().fold(f64::MIN, f64::max);
    let n_selected = top.len();
    let mut sorted = all.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for loss in &sorted[n_selected..] {
        assert!(*loss >= max_top, "non-selected loss {loss} below selected {max_top}");
    }

    // Eval subcommand on the trained checkpoint.
    let eval_out = dir.join("eval");
    run_ok(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--config",
        "general",
        "--lengths",
        "8,12,16",
        "--count",
        "40",
        "--seed",
        "6",
        "--set",
        "qubit.noise.enabled=false",
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_out.join("metrics.json")).unwrap())
            .unwrap();
    for key in ["mae", "mse", "rmse", "a_005", "a_001"] {
        assert!(metrics.get(key).is_some(), "metrics.json missing {key}");
    }
    assert!(metrics["a_001"].as_f64().unwrap() <= metrics["a_005"].as_f64().unwrap());
    let report = std::fs::read_to_string(eval_out.join("length_generalization.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3);

    // Length beyond the encoder capacity is a configuration error (exit 2).
    assert_eq!(
        exit_code(&[
            "eval",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--config",
            "general",
            "--lengths",
            "64",
            "--count",
            "5",
            "--out",
            eval_out.to_str().unwrap(),
        ]),
        2
    );
}

fn read_csv_column(path: &Path, column: usize) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(column).unwrap().parse().unwrap())
        .collect()
}
