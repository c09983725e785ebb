use std::path::Path;
use std::process::{Command, Output};

use bnf_core::bitplane::{Container, FixedTensor, Shape};

fn bnf(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bnf"))
        .args(args)
        .env("BNF_OUT_DIR", out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn bnf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "train",
    "--arch",
    "8-C3+MP2+FC8+Softmax",
    "--input-shape",
    "2x8x1",
    "--classes",
    "2",
    "--samples-per-class",
    "16",
    "--epochs",
    "3",
    "--lr",
    "3e-3",
    "--batch-size",
    "16",
];

fn small(extra: &[&str]) -> Vec<String> {
    SMALL.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(out: &Path, args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    bnf(out, &refs)
}

#[test]
fn pamap2_bil_run_writes_all_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let o = bnf(
        dir.path(),
        &[
            "train", "--preset", "pamap2", "--mode", "bil", "--K", "64", "--data", "synth:bit_parity", "--epochs", "20", "--seed", "1",
            "--samples-per-class", "4", "--run-name", "p",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("final validation error:") && text.contains("best validation error:"), "{text}");
    let metrics = bnf_core::train::read_metrics_csv(dir.path().join("p/metrics.csv")).unwrap();
    let epochs: std::collections::BTreeSet<usize> = metrics.iter().map(|m| m.epoch).collect();
    assert_eq!(epochs.len(), 20);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["model"]["bil_filters"], 64);
    assert!(manifest["wall_clock_secs"].as_f64().unwrap() > 0.0);
    assert!(manifest["version"].is_string());
}

#[test]
fn bil_without_k_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &small(&["--mode", "bil", "--data", "synth:bit_parity"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("K required for bil"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn same_flags_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let o = run(dir.path(), &small(&["--mode", "dbi", "--data", "synth:bit_separable", "--seed", "4", "--run-name", name]));
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a/metrics.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/metrics.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eval_on_training_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small(&["--mode", "bil", "--K", "4", "--data", "synth:bit_separable", "--seed", "2", "--run-name", "r", "--dropout", "0"]);
    if let Some(e) = args.iter_mut().find(|a| *a == "3") {
        *e = "15".into();
    }
    let o = run(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = dir.path().join("r/checkpoint");
    let ckpt = ckpt.to_str().unwrap();
    let o = bnf(dir.path(), &["eval", "--checkpoint", ckpt, "--data", "synth:bit_separable", "--samples-per-class", "16", "--seed", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let pct: f64 = text.trim_start_matches("error: ").split('%').next().unwrap().parse().unwrap();
    assert!((0.0..=5.0).contains(&pct), "{text}");

    let o = bnf(dir.path(), &["eval", "--checkpoint", ckpt, "--data", "synth:bit_separable", "--samples-per-class", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cost_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = bnf(dir.path(), &["cost", "--preset", "pamap2", "--K", "64", "--M", "8"]);
    assert!(o.status.success());
    let bil = stdout(&o).lines().find(|l| l.starts_with("bil")).unwrap().to_string();
    assert!(bil.ends_with("1.86%"), "{bil}");

    let o = bnf(dir.path(), &["cost", "--H", "1", "--W", "1", "--C", "1", "--F", "1", "--I", "1", "--M", "1", "--K", "1", "--format", "csv"]);
    assert!(o.status.success());
    let rows: Vec<Vec<String>> = stdout(&o).lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    // Unit dimensions: one multiplication per approach, two for the BIL
    // pointwise plus feature convolution.
    let counts: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[0].as_str(), r[1].as_str(), r[2].as_str())).collect();
    assert_eq!(counts, [("baseline", "1", "1"), ("fpid", "1", "1"), ("dbi", "1", "1"), ("bil", "2", "2")]);

    let o = bnf(dir.path(), &["cost", "--H", "1", "--W", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(bnf(dir.path(), &["cost"]).status.code(), Some(1));
}

#[test]
fn decompose_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.bnt");
    let values: Vec<u16> = (0..60u16).map(|v| (v * 37) % 1024).collect();
    Container::Fixed(FixedTensor::new(Shape::hwc(3, 5, 4).unwrap(), 10, values).unwrap()).write(&input).unwrap();
    let inp = input.to_str().unwrap();
    let o = bnf(dir.path(), &["decompose", "--input", inp, "--output", "planes/out.bnt", "--M", "10", "--roundtrip"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("planes: 40"), "{text}");
    assert!(text.contains("roundtrip: PASS"));
    assert!(matches!(Container::read(dir.path().join("planes/out.bnt")).unwrap(), Container::Bits(_)));

    let o = bnf(dir.path(), &["decompose", "--input", inp, "--output", "x.bnt", "--M", "8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not match"));
    let o = bnf(dir.path(), &["decompose", "--input", inp, "--output", "../escape.bnt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().parent().unwrap().join("escape.bnt").exists());
    let o = bnf(dir.path(), &["decompose", "--input", "/nonexistent.bnt", "--output", "y.bnt"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn csv_training_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for subject in 0..2 {
        let p = data.path().join(format!("s{subject}.dat"));
        let mut text = String::new();
        for t in 0..400 {
            let label = if (t / 40) % 2 == 0 { 1 } else { 2 };
            let v = if label == 1 { 0.2 } else { 0.8 } + 0.01 * ((t * 7 + subject) % 5) as f64;
            text.push_str(&format!("{t} {label} {v} {}\n", 1.0 - v));
        }
        std::fs::write(&p, text).unwrap();
        files.push(p.to_str().unwrap().to_string());
    }
    let cfg = data.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"delimiter":"whitespace","columns":[2,3],"label_column":1,"label_map":{"1":0,"2":1}}"#).unwrap();
    let spec = format!("csv:{}", files.join(","));
    let cfg = cfg.to_str().unwrap();
    let o = bnf(
        dir.path(),
        &[
            "train", "--arch", "8-C3+FC8+Softmax", "--mode", "fpid", "--data", &spec, "--csv-config", cfg, "--window", "10", "--epochs", "4",
            "--lr", "3e-3", "--val-subject", "1", "--run-name", "csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("csv/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["data"]["train_samples"], 40);
    assert_eq!(manifest["data"]["val_samples"], 40);
    assert_eq!(manifest["data"]["channel_ranges"].as_array().unwrap().len(), 2);
    let ckpt = dir.path().join("csv/checkpoint");
    let o = bnf(dir.path(), &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--data", &spec, "--csv-config", cfg, "--window", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("(80 samples"));
}

#[test]
fn help_and_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bnf(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(bnf(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(bnf(dir.path(), &["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(bnf(dir.path(), &[]).status.code(), Some(1));
    let o = run(dir.path(), &small(&["--data", "synth:nope"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(dir.path(), &small(&["--data", "synth:linear", "--run-name", "/abs"]));
    assert_eq!(o.status.code(), Some(1));
}
