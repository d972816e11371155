use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--set", "window=16", "--set", "stride=16", "--set", "seq_len=3", "--set", "max_epochs=2", "--set", "d=8",
    "--set", "hidden=8", "--set", "latent_dim=4",
];

fn bgn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgn")).args(args).env_remove("BGN_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = bgn(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("d.csv");
    ok(&["synth-data", "--out", s(&data), "--batteries", "5", "--steps", "400"]);
    data
}

fn train(data: &Path, out: &Path) {
    let mut args = vec!["train", "--data", s(data), "--out", s(out)];
    args.extend_from_slice(TINY);
    ok(&args);
}

#[test]
fn help_exits_zero() {
    let o = ok(&["--help"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("train"));
}

#[test]
fn missing_flag_is_usage_error() {
    let o = bgn(&["train", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--data"));
    assert_eq!(bgn(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn bad_config_key_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let o = bgn(&["train", "--data", s(&data), "--out", s(&dir.path().join("r")), "--set", "bogus=1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unreadable_data_is_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bgn(&["train", "--data", s(&dir.path().join("none.csv")), "--out", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "battery_id,cycle\nx,notanumber\n").unwrap();
    let o = bgn(&["train", "--data", s(&bad), "--out", s(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_predict_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let run = dir.path().join("run");
    train(&data, &run);
    for f in ["config.json", "checkpoint.bgn", "metrics.json", "curve.csv", "predictions.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let ckpt = run.join("checkpoint.bgn");
    let ev = dir.path().join("ev");
    ok(&["eval", "--data", s(&data), "--checkpoint", s(&ckpt), "--out", s(&ev), "--split", "test"]);
    let a: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("metrics.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&std::fs::read(ev.join("metrics.json")).unwrap()).unwrap();
    let (ra, rb) = (a["test"]["rmse"].as_f64().unwrap(), b["test"]["rmse"].as_f64().unwrap());
    assert!((ra - rb).abs() <= 1e-12, "{ra} vs {rb}");

    let preds = dir.path().join("p.csv");
    ok(&["predict", "--data", s(&data), "--checkpoint", s(&ckpt), "--out", s(&preds), "--jobs", "2"]);
    let svg = dir.path().join("p.svg");
    ok(&["plot", "--predictions", s(&preds), "--out", s(&svg)]);
    let text = std::fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("g")).count(), 5);

    let graph = dir.path().join("g.csv");
    ok(&["export-graph", "--data", s(&data), "--checkpoint", s(&ckpt), "--out", s(&graph), "--samples", "2"]);
    let rows = csv::Reader::from_path(&graph).unwrap().records().count();
    // 2 samples × 3 windows × 6 × 6 entries
    assert_eq!(rows, 2 * 3 * 36);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&data, &a);
    train(&data, &b);
    for f in ["metrics.json", "checkpoint.bgn", "predictions.csv", "curve.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_env_changes_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let a = dir.path().join("a");
    train(&data, &a);
    let b = dir.path().join("b");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&b)];
    args.extend_from_slice(TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_bgn")).args(&args).env("BGN_SEED", "7").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("checkpoint.bgn")).unwrap(), std::fs::read(b.join("checkpoint.bgn")).unwrap());
}

#[test]
fn impute_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("imp.csv");
    let mut args = vec!["impute-wgan", "--data", s(&data), "--out", s(&out), "--steps", "10"];
    args.extend_from_slice(TINY);
    ok(&args);
    let original = csv::Reader::from_path(&data).unwrap().records().count();
    assert_eq!(csv::Reader::from_path(&out).unwrap().records().count(), original);
    let mask = dir.path().join("imp.mask.csv");
    let mut rdr = csv::Reader::from_path(&mask).unwrap();
    let mut hidden = 0usize;
    let mut total = 0usize;
    for r in rdr.records() {
        let r = r.unwrap();
        for k in 3..r.len() {
            total += 1;
            hidden += (&r[k] == "0") as usize;
        }
    }
    let rate = hidden as f64 / total as f64;
    assert!((rate - 0.2).abs() < 0.03, "{rate}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("imp.report.json")).unwrap()).unwrap();
    assert_eq!(report["masked_entries"].as_u64().unwrap() as usize, hidden);
}

#[test]
fn augment_writes_generated_batteries() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let out = dir.path().join("syn.csv");
    let mut args = vec!["augment-vae", "--data", s(&data), "--out", s(&out), "--count", "3"];
    args.extend_from_slice(TINY);
    ok(&args);
    let mut ids: Vec<String> =
        csv::Reader::from_path(&out).unwrap().records().map(|r| r.unwrap()[0].to_string()).collect();
    ids.dedup();
    assert_eq!(ids, ["synthetic_00000", "synthetic_00001", "synthetic_00002"]);
}

#[test]
fn ensemble_and_ablate_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path());
    let ens = dir.path().join("ens");
    let mut args = vec!["ensemble", "--data", s(&data), "--out", s(&ens), "--runs", "2", "--jobs", "2"];
    args.extend_from_slice(TINY);
    ok(&args);
    assert!(ens.join("ensemble.json").exists());
    let abl = dir.path().join("abl");
    let mut args = vec!["ablate", "--data", s(&data), "--out", s(&abl), "--runs", "1"];
    args.extend_from_slice(TINY);
    ok(&args);
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(abl.join("ablations.json")).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 6);
}
