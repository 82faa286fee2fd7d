//! End-to-end runs of the `mhlat` binary.

use std::path::Path;
use std::process::{Command, Output};

fn mhlat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhlat"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CONFIG: &str = r#"{"L": 8, "d_m": 8, "B": 1, "N": 2, "epochs": 2, "batch_size": 4, "lr": 0.01}"#;

#[test]
fn generate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = mhlat(&[
        "generate", "--docs", "30", "--labels", "5", "--max-len", "40", "--seed", "3", "--out", path(&data),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.jsonl", "dev.jsonl", "labels.txt"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let ckpt = dir.path().join("ckpt");
    let out = mhlat(&[
        "--sequential",
        "train",
        "--config",
        path(&cfg),
        "--train",
        path(&data.join("train.jsonl")),
        "--dev",
        path(&data.join("dev.jsonl")),
        "--out",
        path(&ckpt),
        "--quiet",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.mhlt", "config.json", "labels.txt", "vocab.txt", "history.json"] {
        assert!(ckpt.join(f).exists(), "{f}");
    }
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ckpt.join("config.json")).unwrap()).unwrap();
    assert_eq!(saved["C"], 5);

    let dev = data.join("dev.jsonl");
    let eval = |report: &Path, extra: &[&str]| {
        let mut args = vec!["eval", "--ckpt", path(&ckpt), "--data", path(&dev), "--report", path(report)];
        args.extend_from_slice(extra);
        mhlat(&args)
    };
    let r1 = dir.path().join("r1.json");
    let r2 = dir.path().join("r2.json");
    let preds = dir.path().join("preds.jsonl");
    let attn = dir.path().join("attn.csv");
    let out = eval(&r1, &["--predictions", path(&preds), "--attention", path(&attn), "--top", "3", "--ks", "1,3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("micro"));
    assert_eq!(code(&eval(&r2, &["--ks", "1,3"])), 0);
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&r1).unwrap()).unwrap();
    assert!(report["micro_f1"].is_number());
    assert!(report["p_at_k"]["3"].is_number() || report["p_at_k"]["3"].is_object());

    let lines: Vec<String> = std::fs::read_to_string(&preds).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 6);
    let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(first["scores"].as_array().unwrap().len(), 5);
    assert!(first["scores"].as_array().unwrap().iter().all(|s| (0.0..=1.0).contains(&s.as_f64().unwrap())));

    let csv = std::fs::read_to_string(&attn).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next().unwrap(), "doc_id,label,pos_1,weight_1,pos_2,weight_2,pos_3,weight_3");
    assert_eq!(rows.count(), 6 * 5);
}

#[test]
fn gradcheck_passes_and_catches_a_corrupted_gradient() {
    let out = mhlat(&["gradcheck", "--all-modes"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    for mode in ["[bitfit]", "[finetune]", "[freeze]"] {
        assert!(text.contains(mode));
    }

    let out = mhlat(&["gradcheck", "--corrupt", "mhlat.hop1.map.weight"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(code(&mhlat(&[])), 1);
    assert_eq!(code(&mhlat(&["train"])), 1);
    assert_eq!(code(&mhlat(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"d_m": 8, "N": -1}"#).unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = mhlat(&[
        "train", "--config", path(&cfg), "--train", path(&missing), "--dev", path(&missing), "--out", path(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let big = dir.path().join("big.json");
    std::fs::write(&big, r#"{"C": 9}"#).unwrap();
    assert_eq!(code(&mhlat(&["gradcheck", "--config", path(&big)])), 1);
    assert_eq!(code(&mhlat(&["eval", "--ckpt", path(dir.path()), "--data", "x", "--report", "y"])), 1);
}

#[test]
fn diverging_training_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = mhlat(&["generate", "--docs", "20", "--labels", "4", "--max-len", "40", "--out", path(&data)]);
    assert_eq!(code(&out), 0);
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"L": 8, "d_m": 8, "epochs": 3, "batch_size": 2, "lr": 1e300, "tuning_mode": "finetune"}"#,
    )
    .unwrap();
    let out = mhlat(&[
        "train",
        "--config",
        path(&cfg),
        "--train",
        path(&data.join("train.jsonl")),
        "--dev",
        path(&data.join("dev.jsonl")),
        "--out",
        path(&dir.path().join("ckpt")),
        "--quiet",
    ]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parameter norms"));
}
