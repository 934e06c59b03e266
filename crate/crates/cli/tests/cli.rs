//! End-to-end runs of the `lpclip` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden_config() -> PathBuf {
    repo_root().join("configs/golden.json")
}

fn lpclip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpclip"))
        .args(args)
        .output()
        .unwrap()
}

fn run_golden(out: &Path, extra: &[&str]) -> Output {
    let cfg = golden_config();
    let mut args = vec![
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    args.push("all");
    let o = lpclip(&args);
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn assert_csv_close(got: &str, want: &str, tol: f64) {
    let (gh, gr) = parse_csv(got);
    let (wh, wr) = parse_csv(want);
    assert_eq!(gh, wh);
    assert_eq!(gr.len(), wr.len());
    for (g, w) in gr.iter().zip(&wr) {
        assert_eq!(g.len(), w.len());
        for (a, b) in g.iter().zip(w) {
            match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() <= tol, "{x} vs {y} in row {g:?}"),
                _ => assert_eq!(a, b),
            }
        }
    }
}

fn digest_tree(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "resolved_config.json" {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, hex::encode(Sha256::digest(fs::read(&p).unwrap()))));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn all_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path(), &[]);
    let expected = [
        "data/train/weak.lpce",
        "data/train/strong_0.lpce",
        "data/train/strong_1.lpce",
        "data/train/group.manifest.json",
        "data/test.lpce",
        "data/prompts.lpce",
        "data/ood.lpce",
        "data/corrupt/gaussian_noise_3.lpce",
        "data/corrupt/brightness_2.lpce",
        "zeroshot/metrics.csv",
        "zeroshot/reliability.csv",
        "zeroshot/histogram.csv",
        "prompt_select/prompt_selection.csv",
        "train/seed_1/probe.lpce",
        "train/seed_1/probe.manifest.json",
        "train/seed_1/history.csv",
        "train/seed_2/probe.lpce",
        "eval/seed_1/metrics.csv",
        "eval/summary.csv",
        "ood/seed_2/ood.csv",
        "ood/summary.csv",
        "plots/reliability_teacher.svg",
        "plots/reliability_student.svg",
        "plots/histogram_student.svg",
        "plots/pca.svg",
    ];
    for rel in expected {
        assert!(dir.path().join(rel).is_file(), "missing {rel}");
    }
    for stage in [
        "data",
        "zeroshot",
        "prompt_select",
        "train",
        "eval",
        "ood",
        "plots",
    ] {
        assert!(
            dir.path()
                .join(stage)
                .join("resolved_config.json")
                .is_file(),
            "{stage}"
        );
    }
}

#[test]
fn golden_config_reproduces_pinned_metrics() {
    let dir = tempfile::tempdir().unwrap();
    run_golden(dir.path(), &[]);
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for (got, want) in [
        ("eval/summary.csv", "eval_summary.csv"),
        ("ood/summary.csv", "ood_summary.csv"),
    ] {
        let got = fs::read_to_string(dir.path().join(got)).unwrap();
        let want = fs::read_to_string(golden.join(want)).unwrap();
        assert_csv_close(&got, &want, 1e-9);
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_golden(a.path(), &[]);
    run_golden(b.path(), &[]);
    let (da, db) = (digest_tree(a.path()), digest_tree(b.path()));
    assert!(da.iter().any(|(p, _)| p.ends_with("probe.lpce")));
    assert_eq!(da, db);
}

#[test]
fn negative_learning_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{ "train": { "lr0": -1.0 } }"#).unwrap();
    let o = lpclip(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "all",
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("train.lr0"), "stderr: {err}");
    assert!(!dir.path().join("data").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{ \"seeds\": [1],\n  \"learning_rate\": 0.1 }").unwrap();
    let o = lpclip(&["--config", cfg.to_str().unwrap(), "config"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("learning_rate") && err.contains("line 2"),
        "stderr: {err}"
    );
}

#[test]
fn flags_override_the_config() {
    let o = lpclip(&[
        "--config",
        golden_config().to_str().unwrap(),
        "--seed",
        "9",
        "--views",
        "1",
        "--no-weighting",
        "--corrupt",
        "impulse_noise:5",
        "config",
    ]);
    assert!(o.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg["seeds"], serde_json::json!([9]));
    assert_eq!(cfg["train"]["views"], 1);
    assert_eq!(cfg["train"]["weighting"], false);
    assert_eq!(
        cfg["eval"]["corruptions"],
        serde_json::json!(["impulse_noise:5"])
    );
}

#[test]
fn stages_run_separately_match_all() {
    let whole = tempfile::tempdir().unwrap();
    run_golden(whole.path(), &[]);
    let staged = tempfile::tempdir().unwrap();
    for stage in [
        "synth",
        "zeroshot",
        "prompt-select",
        "train",
        "eval",
        "ood",
        "plot",
    ] {
        let o = lpclip(&[
            "--config",
            golden_config().to_str().unwrap(),
            "--out",
            staged.path().to_str().unwrap(),
            stage,
        ]);
        assert!(
            o.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert_eq!(digest_tree(whole.path()), digest_tree(staged.path()));
}
