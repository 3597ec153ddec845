use std::path::Path;
use std::process::{Command, Output};

use tp_transformer::training::load_checkpoint;

fn tpt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tpt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = tpt(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &[&str] = &[
    "--d-model",
    "16",
    "--d-ff",
    "32",
    "--heads",
    "2",
    "--layers",
    "1",
    "--batch-size",
    "8",
];

fn train(dir: &Path, out: &str, extra: &[&str]) -> String {
    let mut args = vec!["train", "--data", "train.jsonl", "--out", out];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    ok(&args, dir)
}

fn gen(dir: &Path, module: &str, n: &str, seed: &str, out: &str) {
    ok(
        &[
            "gen-data", "--module", module, "--n", n, "--seed", seed, "--out", out,
        ],
        dir,
    );
}

#[test]
fn gen_data_counts_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        &[
            "gen-data",
            "--module",
            "add_sub",
            "--n",
            "10000",
            "--seed",
            "7",
            "--out",
            "train.jsonl",
        ],
        dir.path(),
    );
    assert!(stdout.contains("10000"));
    let first = std::fs::read(dir.path().join("train.jsonl")).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 10000);
    gen(dir.path(), "add_sub", "10000", "7", "again.jsonl");
    assert_eq!(
        first,
        std::fs::read(dir.path().join("again.jsonl")).unwrap()
    );
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = tpt(
        &[
            "gen-data", "--module", "calculus", "--n", "3", "--out", "x.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calculus"));

    let out = tpt(
        &["eval", "--data", "missing.jsonl", "--ckpt", "missing.ckpt"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));

    assert_eq!(
        tpt(&["train", "--bogus-flag"], dir.path()).status.code(),
        Some(2)
    );
}

#[test]
fn zero_steps_write_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "add_sub", "64", "1", "train.jsonl");
    train(dir.path(), "run", &["--max-steps", "0", "--seed", "4"]);
    let ckpt = load_checkpoint(dir.path().join("run/model.ckpt")).unwrap();
    assert_eq!(ckpt.optimizer.step, 0);
    let fresh = tp_transformer::model::init_params(&ckpt.model.config, 4).unwrap();
    assert_eq!(ckpt.model.params, fresh);
    assert!(dir.path().join("run/config.toml").exists());
    let metrics = std::fs::read_to_string(dir.path().join("run/metrics.jsonl")).unwrap();
    assert!(metrics.lines().next().unwrap().contains("\"config\""));
}

#[test]
fn role_binding_flag_trains_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "add_sub", "64", "1", "train.jsonl");
    train(
        dir.path(),
        "base",
        &["--max-steps", "2", "--role-binding=false"],
    );
    let ckpt = load_checkpoint(dir.path().join("base/model.ckpt")).unwrap();
    assert!(!ckpt.model.config.role_binding);
    let toml = std::fs::read_to_string(dir.path().join("base/config.toml")).unwrap();
    assert!(toml.contains("role_binding = false"), "{toml}");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "add_sub", "80", "2", "train.jsonl");
    train(dir.path(), "full", &["--max-steps", "6", "--seed", "3"]);
    train(dir.path(), "half", &["--max-steps", "3", "--seed", "3"]);
    train(
        dir.path(),
        "rest",
        &[
            "--max-steps",
            "6",
            "--seed",
            "3",
            "--resume",
            "half/model.ckpt",
        ],
    );
    let full = load_checkpoint(dir.path().join("full/model.ckpt")).unwrap();
    let rest = load_checkpoint(dir.path().join("rest/model.ckpt")).unwrap();
    assert_eq!(rest.optimizer.step, 6);
    assert_eq!(full.model, rest.model);
    assert_eq!(full.optimizer, rest.optimizer);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "add_sub", "64", "5", "train.jsonl");
    gen(dir.path(), "add_sub", "16", "6", "held.jsonl");
    train(
        dir.path(),
        "a",
        &[
            "--max-steps",
            "4",
            "--eval-every",
            "2",
            "--eval-data",
            "held.jsonl",
            "--seed",
            "9",
        ],
    );
    ok(
        &["train", "--config", "a/config.toml", "--out", "b"],
        dir.path(),
    );
    let (a, b) = (
        load_checkpoint(dir.path().join("a/model.ckpt")).unwrap(),
        load_checkpoint(dir.path().join("b/model.ckpt")).unwrap(),
    );
    assert_eq!(a.model, b.model);
    let records = |d: &str| -> Vec<String> {
        std::fs::read_to_string(dir.path().join(d).join("metrics.jsonl"))
            .unwrap()
            .lines()
            .skip(1)
            .map(String::from)
            .collect()
    };
    assert_eq!(records("a"), records("b"));
    assert_eq!(records("a").len(), 2);
}

#[test]
fn model_commands_run_on_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    gen(dir.path(), "nested_fraction", "64", "1", "train.jsonl");
    gen(dir.path(), "nested_fraction", "8", "2", "test.jsonl");
    train(dir.path(), "run", &["--max-steps", "1"]);
    let p = dir.path();

    let acc = ok(
        &["eval", "--data", "test.jsonl", "--ckpt", "run/model.ckpt"],
        p,
    );
    assert!(acc.contains("accuracy"), "{acc}");
    let a = tpt(
        &[
            "decode",
            "--ckpt",
            "run/model.ckpt",
            "--question",
            "Calculate (1/2)/(3/4).",
            "--max-steps",
            "4",
        ],
        p,
    );
    let b = tpt(
        &[
            "decode",
            "--ckpt",
            "run/model.ckpt",
            "--question",
            "Calculate (1/2)/(3/4).",
            "--max-steps",
            "4",
        ],
        p,
    );
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    ok(
        &[
            "analyze",
            "roles",
            "--ckpt",
            "run/model.ckpt",
            "--data",
            "test.jsonl",
            "--k",
            "4",
            "--out",
            "roles.json",
        ],
        p,
    );
    assert!(p.join("roles.json").exists());
    ok(
        &[
            "analyze",
            "attention",
            "--ckpt",
            "run/model.ckpt",
            "--data",
            "test.jsonl",
            "--k",
            "4",
            "--out",
            "maps.jsonl",
        ],
        p,
    );
    let maps = tp_transformer::analysis::read_attention_maps(p.join("maps.jsonl")).unwrap();
    assert_eq!(maps.len(), 3 * 8);
    let probe = ok(
        &[
            "analyze",
            "probe",
            "--ckpt",
            "run/model.ckpt",
            "--data",
            "test.jsonl",
        ],
        p,
    );
    assert!(probe.contains("mean mse"), "{probe}");
}

#[test]
fn analysis_checks_report_and_pass() {
    let dir = tempfile::tempdir().unwrap();
    let binding = ok(
        &[
            "analyze",
            "binding",
            "--dim",
            "8",
            "--trials",
            "1000",
            "--out",
            "binding.json",
        ],
        dir.path(),
    );
    assert!(binding.contains("collision"), "{binding}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("binding.json")).unwrap())
            .unwrap();
    assert_eq!(report["tp_collisions"], 0);
    assert_eq!(report["standard_collisions"], 1000);
    ok(&["analyze", "appendix", "--trials", "100"], dir.path());
}

#[test]
fn gradcheck_passes_its_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gradcheck", "--tiny"], dir.path());
    assert!(out.contains("max relative error"), "{out}");
}
