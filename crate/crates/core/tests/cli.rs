//! The `attentrack` binary, driven as a subprocess.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn attentrack(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attentrack"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn sha256(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

/// A small synthetic dataset written through `synth`.
fn synth(dir: &Path, config: &str) -> PathBuf {
    std::fs::write(dir.join("synth.toml"), config).unwrap();
    let o = attentrack(&["synth", "--config", "synth.toml", "--out", "syn"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    dir.join("syn")
}

fn small_config() -> String {
    let mut c = attentrack::synth::SynthConfig::default();
    c.n_users = 5;
    c.records_per_user = [90, 110];
    c.to_toml()
}

#[test]
fn validate_accepts_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &small_config());
    let o = attentrack(
        &["validate", "--data", "syn/records.csv", "--profiles", "syn/profiles.csv", "--out", "v"],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("valid: "));
    assert!(dir.path().join("v/validation.json").is_file());
}

#[test]
fn validate_rejects_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &small_config());
    let text = std::fs::read_to_string(dir.path().join("syn/records.csv")).unwrap();
    let broken = text.replacen(",click_to_view,", ",click_twice,", 1);
    assert_ne!(text, broken);
    std::fs::write(dir.path().join("broken.csv"), broken).unwrap();
    let o = attentrack(&["validate", "--data", "broken.csv"], dir.path());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("click_twice") && err.contains("click_to_view"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &small_config());
    let data = ["--data", "syn/records.csv"];
    for extra in [
        &["eval", "louo", "--scheme", "EVERYTHING"][..],
        &["eval", "louo", "--labeler", "ATTENTRACK_IV"],
        &["eval", "louo", "--model", "svm"],
        &["stats", "chi2", "--group-by", "colour"],
    ] {
        let args: Vec<&str> = extra.iter().chain(&data).copied().collect();
        let o = attentrack(&args, dir.path());
        assert_eq!(code(&o), 2, "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("allowed:"), "{args:?}");
    }
    assert_eq!(code(&attentrack(&["eval", "louo", "--data", "nope.csv"], dir.path())), 2);
    assert_eq!(code(&attentrack(&["eval", "crossval"], dir.path())), 2);
    assert_eq!(code(&attentrack(&["eval", "louo"], dir.path())), 2);
}

#[test]
fn louo_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &small_config());
    let run = |out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_attentrack"))
            .args(["eval", "louo", "--seed", "42", "--n-estimators", "20"])
            .args(["--data", "syn/records.csv", "--profiles", "syn/profiles.csv", "--out", out])
            .current_dir(dir.path())
            .env("RAYON_NUM_THREADS", "4")
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        ["louo.csv", "louo.md"].map(|f| std::fs::read(dir.path().join(out).join(f)).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn manifest_records_inputs_and_leaves_them_untouched() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &small_config());
    let data = dir.path().join("syn/records.csv");
    let before = sha256(&data);
    std::fs::write(dir.path().join("run.toml"), "model = \"gb\"\nn_estimators = 10\nseed = 3\n").unwrap();
    let o = attentrack(
        &["train", "--config", "run.toml", "--data", "syn/records.csv", "--seed", "5", "--out", "t"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sha256(&data), before);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"]["model"]["kind"], "gbm");
    assert_eq!(manifest["config"]["model"]["n_estimators"], 10);
    let inputs = manifest["inputs"].as_array().unwrap();
    let digest = |role: &str| inputs.iter().find(|i| i["role"] == role).unwrap()["sha256"].clone();
    assert_eq!(digest("data"), before.as_str());
    assert_eq!(digest("config"), sha256(&dir.path().join("run.toml")).as_str());
    assert_eq!(manifest["outputs"], serde_json::json!(["model.json"]));
    let model = attentrack::trees::EnsembleModel::load(&dir.path().join("t/model.json")).unwrap();
    assert_eq!(model.class_names, ["less_focused", "more_focused"]);
}

#[test]
fn synth_then_louo_recovers_planted_signal() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &attentrack::synth::SynthConfig::default().to_toml());
    let o = attentrack(
        &["eval", "louo", "--model", "gb", "--data", "syn/records.csv", "--profiles", "syn/profiles.csv", "--out", "l"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("l/louo.json")).unwrap()).unwrap();
    let auc = report["summary"]["auc"]["mean"].as_f64().unwrap();
    assert!(auc >= 0.65, "mean AUC {auc}");
}

#[test]
fn stats_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &small_config());
    let data = ["--data", "syn/records.csv", "--profiles", "syn/profiles.csv", "--out", "s"];
    for cmd in [&["stats", "chi2"][..], &["stats", "tables"], &["stats", "rtimes"], &["stats", "lmm", "--reml"]] {
        let args: Vec<&str> = cmd.iter().chain(&data).copied().collect();
        let o = attentrack(&args, dir.path());
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["chi2_activity.csv", "table_activity.md", "rtimes.csv", "lmm.json", "manifest.json"] {
        assert!(dir.path().join("s").join(f).is_file(), "{f}");
    }
    std::fs::write(dir.path().join("a.csv"), "item,label\n1,x\n2,y\n3,x\n4,y\n").unwrap();
    std::fs::write(dir.path().join("b.csv"), "item,label\n4,y\n3,x\n2,y\n1,x\n").unwrap();
    let o = attentrack(&["stats", "kappa", "--coder-a", "a.csv", "--coder-b", "b.csv", "--out", "k"], dir.path());
    assert_eq!(code(&o), 0);
    let k: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("k/kappa.json")).unwrap()).unwrap();
    assert_eq!(k["kappa"], 1.0);
}
