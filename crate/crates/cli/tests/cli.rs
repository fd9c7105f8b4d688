use std::path::Path;
use std::process::{Command, Output};

use srk_core::io::{load_pool, save_pool};
use srk_core::labels::ReconLabel;
use srk_core::latent::ModelPool;

fn srk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srk")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = srk(dir, args);
    assert!(out.status.success(), "srk {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path) {
    std::fs::write(dir.join("spec.toml"), "seed = 21\npoints_per_instance = 1500\n").unwrap();
    ok(dir, &["synth", "--spec", "spec.toml", "--out-dir", "s"]);
}

const RECON: [&str; 5] = ["reconstruct", "--scene", "s/scene.scene.bin", "--proposals", "s/scene.proposals.json"];

#[test]
fn synth_reconstruct_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let mut args = RECON.to_vec();
    args.extend(["--pool", "s/pool/pool.bin", "--mode", "retrieve", "--out-dir", "pred"]);
    ok(dir, &args);
    let report = json(&dir.join("pred/scene.report.json"));
    assert_eq!(report["failed"], 0);
    for metric in ["pcr", "iou"] {
        let thr = if metric == "pcr" { "0.5" } else { "0.25" };
        ok(dir, &["evaluate", "--gt-dir", "s/gt", "--pred-dir", "pred", "--metric", metric, "--threshold", thr, "--out", "e.json"]);
        assert_eq!(json(&dir.join("e.json"))["map"], 1.0, "{metric}");
    }
}

#[test]
fn missing_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = srk(tmp.path(), &["cluster", "--scene", "nope.scene.bin", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn bad_thread_count_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    for v in ["0", "many"] {
        let out = Command::new(env!("CARGO_BIN_EXE_srk"))
            .args(["cluster", "--scene", "s/scene.scene.bin", "--out", "p.json"])
            .env("SRK_THREADS", v)
            .current_dir(tmp.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "SRK_THREADS={v}");
    }
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    std::fs::write(tmp.path().join("c.toml"), "[reconstruct]\nconf_flor = 0.5\n").unwrap();
    let out = srk(tmp.path(), &["--config", "c.toml", "cluster", "--scene", "s/scene.scene.bin", "--out", "p.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_category_in_pool_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    let pool = load_pool(&dir.join("s/pool/pool.bin")).unwrap();
    let tables = pool.entries().iter().filter(|e| e.category == ReconLabel(0)).cloned().collect();
    save_pool(&ModelPool::new(pool.dim(), tables).unwrap(), &dir.join("s/pool/tables.bin")).unwrap();
    let mut args = RECON.to_vec();
    args.extend(["--pool", "s/pool/tables.bin", "--mode", "retrieve", "--out-dir", "pred"]);
    let out = srk(dir, &args);
    assert_eq!(out.status.code(), Some(3));
    let report = json(&dir.join("pred/scene.report.json"));
    assert!(report["failed"].as_u64().unwrap() > 0);
    assert!(report["reconstructed"].as_u64().unwrap() > 0);
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir);
    std::fs::write(dir.join("c.toml"), "[reconstruct]\nmin_points = 1000000\nmode = \"retrieve\"\n").unwrap();
    let mut args = vec!["--config", "c.toml"];
    args.extend(RECON);
    args.extend(["--pool", "s/pool/pool.bin", "--out-dir", "a"]);
    ok(dir, &args);
    let report = json(&dir.join("a/scene.report.json"));
    assert_eq!(report["mode"], "retrieve");
    assert_eq!(report["reconstructed"], 0);
    assert_eq!(report["skipped"], report["proposals"]);

    args.pop();
    args.pop();
    args.extend(["--min-points", "1", "--conf-floor", "0.0", "--out-dir", "b"]);
    ok(dir, &args);
    assert_eq!(json(&dir.join("b/scene.report.json"))["skipped"], 0);
}
