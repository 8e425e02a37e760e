use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ddjscc<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddjscc"))
        .args(args)
        .env_remove("DDJSCC_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const TINY: [&str; 6] = ["--widths", "4,4", "--data", "synth:10:8:1", "--batch-size", "5"];

/// One epoch unless `extra` says otherwise.
fn train_tiny(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend(TINY);
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs", "1"]);
    }
    args.extend(extra);
    ddjscc(&args)
}

#[test]
fn train_writes_manifest_stats_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = train_tiny(&run, &["--seed", "7", "--cr", "1/10:9/10", "--snr", "-3:20"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["manifest.json", "config.json", "stats.csv", "epoch_1.ckpt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let m = manifest(&run);
    assert_eq!(m["command"], "train");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outcome"], "ok");
    assert!(m["ended_at"].as_u64().unwrap() >= m["started_at"].as_u64().unwrap());
    assert_eq!(m["config"]["train"]["cr_range"], serde_json::json!([0.1, 0.9]));
    assert_eq!(m["config"]["train"]["snr_range"], serde_json::json!([-3.0, 20.0]));
    assert_eq!(m["config"]["data"], "synth:10:8:1");
}

#[test]
fn manifest_replays_the_run_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(code(&train_tiny(&a, &["--mode", "fixed", "--n", "4"])), 0);
    let b = dir.path().join("b");
    let replay = ddjscc(&[
        "train",
        "--config",
        a.join("manifest.json").to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code(&replay), 0, "{}", stderr(&replay));
    assert_eq!(std::fs::read(a.join("epoch_1.ckpt")).unwrap(), std::fs::read(b.join("epoch_1.ckpt")).unwrap());
    assert!(stderr(&replay).contains("Set12348"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, extra: &[&str]| {
        let out_dir = dir.path().join(sub);
        let mut args = vec!["train".to_string(), "--out".into(), out_dir.to_str().unwrap().into()];
        args.extend(TINY.iter().chain(&["--epochs", "1"]).chain(extra).map(|s| s.to_string()));
        let out = Command::new(env!("CARGO_BIN_EXE_ddjscc"))
            .args(&args)
            .env("DDJSCC_SEED", "5")
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        manifest(&out_dir)["seed"].as_u64().unwrap()
    };
    assert_eq!(run("env", &[]), 5);
    assert_eq!(run("flag", &["--seed", "9"]), 9);
}

#[test]
fn invalid_training_configs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = train_tiny(&dir.path().join("r"), &["--epochs", "0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epochs must be at least 1"), "{}", stderr(&out));
    assert!(!dir.path().join("r").join("manifest.json").exists());

    assert_eq!(code(&train_tiny(&dir.path().join("r"), &["--mode", "fixed"])), 2);
    assert_eq!(code(&train_tiny(&dir.path().join("r"), &["--mode", "fixed", "--n", "9"])), 2);
    assert_eq!(code(&train_tiny(&dir.path().join("r"), &["--cr", "0.5:0.2"])), 2);

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"train": {"epochz": 3}}"#).unwrap();
    let out = ddjscc(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epochz"));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("r");
    let out = train_tiny(&run, &["--lr", "1e300", "--epochs", "3"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged"));
    assert!(manifest(&run)["outcome"].as_str().unwrap().contains("diverged"));
}

#[test]
fn sweep_reports_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&train_tiny(&d.join("dyn"), &["--seed", "1"])), 0);
    assert_eq!(code(&train_tiny(&d.join("fx3"), &["--mode", "fixed", "--n", "3", "--seed", "2"])), 0);
    let sweep = |out: &str, extra: &[&str]| {
        let out_dir = d.join(out);
        let mut args: Vec<String> = vec![
            "sweep".into(),
            "--dynamic".into(),
            d.join("dyn/epoch_1.ckpt").to_str().unwrap().into(),
            "--fixed".into(),
            d.join("fx3/epoch_1.ckpt").to_str().unwrap().into(),
            "--snr=-6,-3,0,...,6".into(),
            "--cr".into(),
            "1/12,1/4".into(),
            "--n".into(),
            "2,3,5".into(),
            "--trials".into(),
            "2".into(),
            "--test".into(),
            "synth:3:8:4".into(),
            "--out".into(),
            out_dir.to_str().unwrap().into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        (ddjscc(&args), out_dir)
    };
    let (first, a) = sweep("s1", &[]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let (second, b) = sweep("s2", &["--jobs", "2"]);
    assert_eq!(code(&second), 0);
    let csv = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(csv.as_bytes(), std::fs::read(b.join("sweep.csv")).unwrap());
    // 3 depths x 2 CRs x 5 SNRs for the dynamic model, 2 x 5 for the baseline.
    assert_eq!(csv.lines().count(), 1 + 30 + 10);

    let report: Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    let ledger = &report["comparison"]["ledger"];
    assert_eq!(ledger["dynamic_epochs"], 1);
    assert_eq!(ledger["total_fixed_epochs"], 1);
    let stdout = String::from_utf8_lossy(&first.stdout);
    assert!(stdout.contains("epoch_ledger"));
    assert_eq!(manifest(&a)["config"]["cr_points"], serde_json::json!([1.0 / 12.0, 0.25]));

    // An unreachable margin makes the dynamic-vs-fixed check fail: reported
    // by default, enforced with --assert.
    let cfg = d.join("strict.json");
    std::fs::write(
        &cfg,
        r#"{"thresholds": {"depth_slack_db": 0.3, "fixed_margin_db": -100.0, "snr_stderr_slack": 1.0}}"#,
    )
    .unwrap();
    let (lenient, _) = sweep("s3", &["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&lenient), 0);
    assert!(String::from_utf8_lossy(&lenient.stdout).contains("FAIL dynamic_vs_fixed"));
    let (strict, _) = sweep("s4", &["--config", cfg.to_str().unwrap(), "--assert"]);
    assert_eq!(code(&strict), 4, "{}", stderr(&strict));
}

#[test]
fn sweep_rejects_missing_or_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ddjscc(&["sweep", "--dynamic", "nope.ckpt", "--out", d.join("s").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not exist"));
    let out = ddjscc(&["sweep", "--out", d.join("s").to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    assert_eq!(code(&train_tiny(&d.join("fx"), &["--mode", "fixed", "--n", "3"])), 0);
    let ckpt = d.join("fx/epoch_1.ckpt");
    let out = ddjscc(&["sweep", "--dynamic", ckpt.to_str().unwrap(), "--out", d.join("s").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("not a dynamic"));
}

#[test]
fn gradcheck_passes_filters_and_catches_faults() {
    let dir = tempfile::tempdir().unwrap();
    let out = ddjscc(&["gradcheck", "--op", "conv2d", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("conv2d")).count() == 3);
    assert!(stdout.contains("3/3 cases passed"));
    assert!(dir.path().join("gradcheck.json").exists());
    assert_eq!(manifest(dir.path())["command"], "gradcheck");

    let out = ddjscc(&["gradcheck", "--op", "conv2d", "--inject-fault", "conv2d"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
    // Without an output directory the manifest goes to stderr.
    assert!(stderr(&out).lines().next().unwrap().contains("\"command\":\"gradcheck\""));

    assert_eq!(code(&ddjscc(&["gradcheck", "--op", "conv3d"])), 2);
}

#[test]
fn synth_data_is_deterministic_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let write = |sub: &str| {
        let out = dir.path().join(sub);
        let o = ddjscc(&["synth-data", "--count", "4", "--size", "8", "--seed", "11", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b) = (write("a"), write("b"));
    for i in 0..4 {
        let name = format!("img_{i:05}.ppm");
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
    }
    assert_eq!(manifest(&a)["config"]["data"], "synth:4:8:11");

    // The written files load back as a training set.
    let run = dir.path().join("run");
    let out = ddjscc(&[
        "train",
        "--data",
        a.to_str().unwrap(),
        "--widths",
        "4,4",
        "--epochs",
        "1",
        "--batch-size",
        "2",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let o = ddjscc(&["synth-data", "--count", "0", "--out", dir.path().join("c").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let o = ddjscc(&["synth-data", "--count", "2", "--size", "8", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
