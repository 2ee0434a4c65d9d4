use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn armtail(args: &[&str], runs: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armtail"))
        .args(args)
        .env("ARMTAIL_RUNS_DIR", runs)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn stdout_path(out: &Output) -> PathBuf {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().lines().last().unwrap().trim())
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_then_eval_writes_the_requested_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let run = stdout_path(&armtail(&["train", "--config", &config("quick.toml"), "--baseline", "ppo", "--seed", "1"], tmp.path()));
    assert_eq!(run, tmp.path().join("quick/ppo/1"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["created"], "2023-11-14T22:13:20Z");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let ckpt = run.join("policy.ckpt").display().to_string();
    let out_dir = tmp.path().join("eval");
    let out = armtail(
        &["eval", "--checkpoint", &ckpt, "--trials", "10", "--force-range", "250:350", "--out", &out_dir.display().to_string()],
        tmp.path(),
    );
    let dir = stdout_path(&out);
    let rows = csv::Reader::from_path(dir.join("trials.csv")).unwrap().records().count();
    assert_eq!(rows, 10);
    assert!(String::from_utf8_lossy(&out.stdout).contains("250-350"));
}

#[test]
fn reruns_are_identical_and_never_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["run", "--config", &config("quick.toml"), "--methods", "staged", "--trials", "10"];
    let a = stdout_path(&armtail(&args, tmp.path()));
    let b = stdout_path(&armtail(&args, tmp.path()));
    assert_eq!(a, tmp.path().join("quick"));
    assert_eq!(b, tmp.path().join("quick-1"));
    for rel in ["staged/0/metrics.json", "staged/0/trials.csv", "staged/0/policy.ckpt", "locked/0/metrics.json", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    assert_eq!(std::fs::read(a.join("manifest.json")).unwrap(), std::fs::read(b.join("manifest.json")).unwrap());

    let summary = tmp.path().join("cmp.csv");
    let out = armtail(&["compare", &a.display().to_string(), "--out", &summary.display().to_string()], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(summary).unwrap();
    assert!(text.lines().any(|l| l.starts_with("staged")) && text.lines().any(|l| l.starts_with("locked")), "{text}");
}

#[test]
fn arm_mode_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let run = stdout_path(&armtail(&["train", "--config", &config("quick.toml"), "--baseline", "ppo"], tmp.path()));
    let ckpt = run.join("policy.ckpt").display().to_string();
    let out = armtail(&["eval", "--checkpoint", &ckpt, "--arm-mode", "locked", "--trials", "2"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("3 actions") && stderr(&out).contains("locked"), "{}", stderr(&out));
}

#[test]
fn corrupt_inputs_name_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("broken.ckpt");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = armtail(&["eval", "--checkpoint", &bad.display().to_string()], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("broken.ckpt"), "{}", stderr(&out));

    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "schema_version = 1\nexperiment = \"x\"\nscenario = \"stabilize\"\n[ppo]\nnum_envs = 0\n").unwrap();
    let out = armtail(&["train", "--config", &cfg.display().to_string()], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("bad.toml:5"), "{}", stderr(&out));
    assert!(!tmp.path().join("x").exists());
}

#[test]
fn stage_needs_its_teacher() {
    let tmp = tempfile::tempdir().unwrap();
    let out = armtail(&["train", "--config", &config("quick.toml"), "--stage", "2"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--teacher"), "{}", stderr(&out));
    assert!(!tmp.path().join("quick").exists());

    let s1 = stdout_path(&armtail(&["train", "--config", &config("quick.toml"), "--stage", "1", "--seed", "2"], tmp.path()));
    let teacher = s1.join("stage1_2.ckpt").display().to_string();
    let s2 = stdout_path(&armtail(
        &["train", "--config", &config("quick.toml"), "--stage", "2", "--seed", "2", "--teacher", &teacher],
        tmp.path(),
    ));
    assert_eq!(s2, tmp.path().join("quick/staged/2-1"));
    assert!(s2.join("stage2_2.ckpt").is_file());
}

#[test]
fn analyses_print_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = armtail(&["analyze", "--kind", "coupling"], tmp.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["ratio"].as_f64().unwrap() + 0.378).abs() < 1e-9);

    let csv = tmp.path().join("pairs.csv");
    std::fs::write(&csv, "arm_angle,base_yaw\n0,1\n1,3\n2,5\n3,7.5\n").unwrap();
    let out = armtail(&["analyze", "--kind", "correlation", "--input", &csv.display().to_string()], tmp.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["slope"].as_f64().unwrap() > 2.0 && v["r_squared"].as_f64().unwrap() > 0.99);

    let out = armtail(&["analyze", "--kind", "lag"], tmp.path());
    assert!(!out.status.success() && stderr(&out).contains("--input"));
}
