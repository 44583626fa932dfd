use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mtmv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtmv"))
        .args(args)
        .env("MTMV_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, value: Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    p
}

fn small_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "small.json",
        serde_json::json!({
            "synthetic": {"n": 40, "communities": 2, "views": 2, "p_in": 0.3, "p_out": 0.05, "rho": 0.5, "seed": 3},
            "hidden": 8,
            "heads": 2,
            "max_epochs": 15,
            "learning_rate": 0.01
        }),
    )
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_dataset_exits_2_and_names_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("no_such_dataset");
    let out = mtmv(&["train", "--dataset", path(&missing), "--out", path(&tmp.path().join("run"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no_such_dataset"), "{err}");
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", serde_json::json!({"hiden": 8}));
    let out = mtmv(&["train", "--config", path(&cfg), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden"));
}

#[test]
fn bad_mode_is_a_usage_error() {
    let out = mtmv(&["train", "--mode", "both"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(mtmv(&["train", "--config", path(&cfg), "--seed", "5", "--out", path(dir)]));
    }
    for f in ["report.json", "history.csv", "attention.csv", "checkpoint"] {
        assert!(fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let without_out = |dir: &Path| {
        let mut v = read_json(dir.join("config.resolved.json"));
        v.as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(without_out(&a), without_out(&b));
    for f in ["timing.csv", "timing.json"] {
        assert!(a.join(f).exists(), "{f}");
    }

    let resolved = read_json(a.join("config.resolved.json"));
    assert_eq!(resolved["seed"], 5);
    assert!(resolved["code_version"].as_str().unwrap().starts_with("mtmv-core"));

    let history = fs::read_to_string(a.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_loss,val_loss,link_loss,cls_loss,recon_loss\n"));
    let attention = fs::read_to_string(a.join("attention.csv")).unwrap();
    assert!(attention.starts_with("mechanism,head,view,weight\n"));
    assert!(attention.lines().count() > 1);

    // The resolved config reproduces the run on its own.
    let c = tmp.path().join("c");
    ok(mtmv(&["train", "--config", path(&a.join("config.resolved.json")), "--out", path(&c)]));
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());
}

#[test]
fn evaluate_matches_training_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    ok(mtmv(&[
        "train",
        "--config",
        path(&cfg),
        "--out",
        path(&run),
        "--micro",
    ]));
    let eval = tmp.path().join("eval");
    ok(mtmv(&["evaluate", "--checkpoint", path(&run.join("checkpoint")), "--out", path(&eval)]));
    let (t, e) = (read_json(run.join("report.json")), read_json(eval.join("report.json")));
    for (section, key) in [
        ("link", "ap"),
        ("link", "auc"),
        ("classification", "accuracy"),
        ("classification", "f1_macro"),
        ("classification", "f1_micro"),
    ] {
        let (a, b) = (t[section][key].as_f64().unwrap(), e[section][key].as_f64().unwrap());
        assert!((a - b).abs() <= 1e-9, "{section}.{key}: {a} vs {b}");
    }
    let (a, b) = (t["reconstruction_mse"].as_f64().unwrap(), e["reconstruction_mse"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-9);
}

#[test]
fn evaluate_rejects_mismatched_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    ok(mtmv(&["train", "--config", path(&cfg), "--out", path(&run)]));
    let out = mtmv(&[
        "evaluate",
        "--checkpoint",
        path(&run.join("checkpoint")),
        "--config",
        path(&run.join("config.resolved.json")),
        "--mode",
        "nva",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));

    fs::write(run.join("checkpoint"), b"MTMVCKPT\x02\x01\x09\x00\x00\x00").unwrap();
    let out = mtmv(&["evaluate", "--checkpoint", path(&run.join("checkpoint"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn ablate_single_variant_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("abl");
    ok(mtmv(&["ablate", "--config", path(&cfg), "--out", path(&run), "--variants", "nta"]));
    let csv = fs::read_to_string(run.join("ablation.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    assert!(lines[0].ends_with("mean_epoch_seconds,epochs"));
    assert!(lines[1].starts_with("nta,"));
}

#[test]
fn ablate_keeps_variant_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("abl");
    ok(mtmv(&["ablate", "--config", path(&cfg), "--out", path(&run), "--variants", "equ,full,single_each_task"]));
    let csv = fs::read_to_string(run.join("ablation.csv")).unwrap();
    let names: Vec<_> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["equ", "full", "single_each_task"]);
}

#[test]
fn generate_then_analyze_identical_views() {
    let tmp = TempDir::new().unwrap();
    let gen_cfg = write_config(
        tmp.path(),
        "gen.json",
        serde_json::json!({"n": 60, "communities": 3, "views": 3, "p_in": 0.3, "p_out": 0.02, "rho": 1.0}),
    );
    let data = tmp.path().join("data");
    ok(mtmv(&["generate", "--config", path(&gen_cfg), "--seed", "4", "--out", path(&data)]));
    for f in ["meta", "view_0.edges", "view_1.edges", "view_2.edges", "labels"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let out = tmp.path().join("analysis");
    ok(mtmv(&["analyze", "--dataset", path(&data), "--out", path(&out)]));
    let agreement = fs::read_to_string(out.join("agreement.csv")).unwrap();
    let rows: Vec<_> = agreement.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cols: Vec<_> = row.split(',').collect();
        assert_eq!((cols[2], cols[3]), ("1", "0"), "{row}");
    }
    let correlation = fs::read_to_string(out.join("correlation.csv")).unwrap();
    assert_eq!(correlation.lines().count(), 4);
}

#[test]
fn quickstart_reaches_high_link_auc() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quickstart.json");
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("qs");
    ok(mtmv(&["train", "--config", path(&cfg), "--out", path(&run)]));
    let auc = read_json(run.join("report.json"))["link"]["auc"].as_f64().unwrap();
    assert!(auc > 0.9, "quickstart link AUC {auc}");
}
