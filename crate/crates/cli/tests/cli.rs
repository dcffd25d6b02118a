use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn psm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psm"))
        .args(args)
        .current_dir(dir)
        .env_remove("PSM_OUTPUT_DIR")
        .env("PSM_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = psm(dir, args);
    assert!(
        out.status.success(),
        "psm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn output_digests(dir: &Path) -> Vec<String> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["sha256"].as_str().unwrap().to_string())
        .collect()
}

/// Small heated-channel dataset plus a short training config.
fn small_setup(dir: &Path, n_train: usize, epochs: usize) {
    ok(dir, &["write-preset", "--name", "heated-channel", "--out", "gen.toml"]);
    let text = fs::read_to_string(dir.join("gen.toml"))
        .unwrap()
        .replace("n_train = 16", &format!("n_train = {n_train}"))
        .replace("n_test = 4", "n_test = 1");
    fs::write(dir.join("gen.toml"), text).unwrap();
    ok(dir, &["gen-data", "--config", "gen.toml", "--seed", "3", "--out-dir", "data"]);
    fs::write(
        dir.join("train.toml"),
        format!("epochs = {epochs}\nbatch_size = 128\ncollocation_batch = 64\nwidths = [16, 8, 8]\nlearning_rate = 0.005\n"),
    )
    .unwrap();
}

#[test]
fn gen_data_is_reproducible_and_validates_config() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_setup(d, 2, 1);
    assert_eq!(fs::read_dir(d.join("data/train")).unwrap().count(), 2);
    assert_eq!(fs::read_dir(d.join("data/test")).unwrap().count(), 1);
    ok(d, &["gen-data", "--config", "gen.toml", "--seed", "3", "--out-dir", "again"]);
    assert_eq!(output_digests(&d.join("data")), output_digests(&d.join("again")));
    let m = manifest(&d.join("data"));
    assert_eq!(m["command"], "gen-data");
    assert_eq!(m["seed"], 3);

    fs::write(d.join("bad.toml"), "preset = \"no-such-rig\"\n").unwrap();
    let out = psm(d, &["gen-data", "--config", "bad.toml", "--out-dir", "bad"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-rig"));

    fs::write(d.join("neg.toml"), "preset = \"loop\"\nn_train = 1\n[degradation]\nsegment = 3\nmultiplier = -1.0\n").unwrap();
    assert_eq!(psm(d, &["gen-data", "--config", "neg.toml", "--out-dir", "neg"]).status.code(), Some(2));
}

#[test]
fn default_presets_describe_the_full_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["write-preset", "--name", "heated-channel", "--out", "gen.toml"]);
    let text = fs::read_to_string(d.join("gen.toml")).unwrap();
    assert!(text.contains("n_train = 16") && text.contains("n_test = 4"));
    for name in ["cooling-loop", "loop-fault", "train-desk", "train-full", "governor", "diagnose"] {
        ok(d, &["write-preset", "--name", name, "--out", &format!("{name}.toml")]);
    }
    let fault = fs::read_to_string(d.join("loop-fault.toml")).unwrap();
    assert!(fault.contains("multiplier = 10.0"));
}

#[test]
fn train_eval_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_setup(d, 4, 40);
    ok(d, &["train", "--data", "data", "--config", "train.toml", "--mode", "ann", "--out-dir", "ann"]);
    let meta: Value = serde_json::from_str(&fs::read_to_string(d.join("ann/model.json")).unwrap()).unwrap();
    assert_eq!(meta["train"]["beta"], 0.0);
    assert_eq!(meta["train"]["alpha"], 1.0);
    let metrics = fs::read_to_string(d.join("ann/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 40);
    assert!(metrics.starts_with("epoch,L_m,L_p,L_total,learning_rate"));

    fs::write(d.join("short.toml"), "epochs = 2\nbatch_size = 256\ncollocation_batch = 32\nwidths = [8, 4, 4]\n").unwrap();
    ok(d, &["train", "--data", "data", "--config", "short.toml", "--seed", "5", "--out-dir", "psm"]);
    assert_eq!(manifest(&d.join("psm"))["seed"], 5);

    ok(d, &["eval", "--model", "ann", "--data", "data", "--split", "train", "--out-dir", "ev_train"]);
    ok(d, &["eval", "--model", "ann", "--data", "data", "--out-dir", "ev_test"]);
    let mean_t = |p: &str| -> f64 {
        let text = fs::read_to_string(d.join(p).join("rmse.csv")).unwrap();
        let line = text.lines().find(|l| l.starts_with("mean,T,")).unwrap().to_string();
        line.split(',').nth(2).unwrap().parse().unwrap()
    };
    for split in ["ev_train", "ev_test"] {
        let rmse = mean_t(split);
        assert!(rmse.is_finite() && rmse > 0.0, "{split}: {rmse}");
    }
    assert_ne!(
        fs::read_to_string(d.join("ev_train/rmse.csv")).unwrap(),
        fs::read_to_string(d.join("ev_test/rmse.csv")).unwrap()
    );

    ok(d, &["eval", "--model", "psm", "--model", "ann", "--data", "data", "--out-dir", "ev2"]);
    let table = fs::read_to_string(d.join("ev2/rmse.csv")).unwrap();
    assert!(table.starts_with("statistic,field,psm,ann,ratio_percent"));
    assert_eq!(table.lines().filter(|l| l.starts_with("mean,")).count(), 3);
    assert_eq!(table.lines().filter(|l| l.starts_with("max,")).count(), 3);

    // a dataset with different scaling is rejected
    ok(d, &["gen-data", "--config", "gen.toml", "--seed", "9", "--out-dir", "other"]);
    let out = psm(d, &["eval", "--model", "ann", "--data", "other", "--out-dir", "ev3"]);
    assert_eq!(out.status.code(), Some(2));

    assert_eq!(psm(d, &["train", "--data", "missing", "--config", "short.toml", "--out-dir", "x"]).status.code(), Some(4));
    assert_eq!(
        psm(d, &["train", "--data", "data", "--config", "short.toml", "--noise", "pink:3", "--out-dir", "x"]).status.code(),
        Some(2)
    );
    assert_eq!(psm(d, &["train", "--data", "data", "--config", "short.toml"]).status.code(), Some(2));
    let with_env = Command::new(env!("CARGO_BIN_EXE_psm"))
        .args(["eval", "--model", "ann", "--data", "data"])
        .current_dir(d)
        .env("PSM_OUTPUT_DIR", d.join("from_env"))
        .output()
        .unwrap();
    assert!(with_env.status.success());
    assert!(d.join("from_env/rmse.csv").exists());
}

#[test]
fn control_without_schedule_is_transparent() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_setup(d, 1, 1);
    ok(d, &["train", "--data", "data", "--config", "train.toml", "--out-dir", "m"]);
    fs::write(d.join("ctl.toml"), "case = \"governor\"\n[schedule]\nentries = []\n").unwrap();
    ok(d, &["control", "--model", "m", "--config", "ctl.toml", "--out-dir", "c"]);
    let log = fs::read_to_string(d.join("c/ncg.csv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), 40);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(&f[2..4], &f[4..6], "{row}");
        assert_eq!(f[6], "transparent");
    }
    fs::write(d.join("bad.toml"), "case = \"governor\"\n[governor]\ngamma = 0\n").unwrap();
    assert_eq!(psm(d, &["control", "--model", "m", "--config", "bad.toml", "--out-dir", "c2"]).status.code(), Some(2));
}

#[test]
fn diagnose_reports_verdicts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["write-preset", "--name", "cooling-loop", "--out", "loop.toml"]);
    let shrink = |name: &str| {
        let text = fs::read_to_string(d.join(name))
            .unwrap()
            .replace("n_train = 16", "n_train = 2")
            .replace("n_test = 4", "n_test = 1");
        fs::write(d.join(name), text).unwrap();
    };
    shrink("loop.toml");
    ok(d, &["write-preset", "--name", "loop-fault", "--out", "fault.toml"]);
    shrink("fault.toml");
    ok(d, &["gen-data", "--config", "loop.toml", "--seed", "1", "--out-dir", "nominal"]);
    ok(d, &["gen-data", "--config", "loop.toml", "--seed", "2", "--out-dir", "fresh"]);
    ok(d, &["gen-data", "--config", "fault.toml", "--seed", "2", "--out-dir", "faulty"]);
    fs::write(d.join("train.toml"), "epochs = 30\nbatch_size = 128\nwidths = [16, 8, 8]\nlearning_rate = 0.005\nbeta = 0.0\nalpha = 1.0\n").unwrap();
    ok(d, &["train", "--data", "nominal", "--config", "train.toml", "--out-dir", "m"]);
    ok(d, &["write-preset", "--name", "diagnose", "--out", "diag.toml"]);

    let text = ok(d, &["diagnose", "--model", "m", "--nominal-data", "nominal", "--stream", "fresh", "--config", "diag.toml", "--out-dir", "v1"]);
    assert!(text.contains("no degradation detected"), "{text}");
    assert!(!d.join("v1/signature.csv").exists());

    let text = ok(d, &["diagnose", "--model", "m", "--nominal-data", "nominal", "--stream", "faulty", "--config", "diag.toml", "--out-dir", "v2"]);
    assert!(text.contains("degradation detected at window"), "{text}");
    let verdict: Value = serde_json::from_str(&fs::read_to_string(d.join("v2/verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["degraded"], true);
    assert_eq!(verdict["localization"].as_array().unwrap().len(), 6);
    assert!(verdict["localization"][3]["momentum_ratio"].as_f64().unwrap().is_finite());
    let sig = fs::read_to_string(d.join("v2/signature.csv")).unwrap();
    assert!(sig.starts_with("z,eq,r_nom,r_m,r,scaled_r"));
    assert_eq!(sig.lines().count(), 1 + 3 * 160);
}
