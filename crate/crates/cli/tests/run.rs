use std::fs;
use std::path::Path;
use std::process::Command;

fn danyra() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_danyra"));
    cmd.env_remove("DANYRA_THREADS");
    cmd
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn preset_run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let status = danyra()
        .args(["run", "--preset", "fig2", "--iters", "600", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = read(dir.path(), "trace.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("k,gap,violation_l1,slack_0,slack_1"));
    assert_eq!(lines.count(), 600);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "report.json")).unwrap();
    assert_eq!(report["recovery_from"], 500);
    assert!(report["final_gap"].as_f64().unwrap().is_finite());
    assert!(report["conditions"]["checks"].is_array());
    let bounds: serde_json::Value = serde_json::from_str(&read(dir.path(), "bounds.json")).unwrap();
    assert_eq!(bounds["violation_at"], 500);
    assert!(bounds["accuracy_bound"].is_number());
}

#[test]
fn sweep_writes_one_directory_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let status = danyra()
        .args(["run", "--preset", "buffer-sweep", "--iters", "50", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    for v in ["omega-0.01", "omega-0.1", "omega-1", "omega-5-over-k"] {
        assert!(dir.path().join(v).join("trace.csv").is_file(), "{v}");
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{
            "instance": {"generate": {"seed": 3, "n": 4, "r_max": 8.0, "extra_edges": 1}},
            "hyper": {"alpha": 0.01, "beta": 0.02, "eta": 0.1, "gamma": 0.2},
            "mode": "ineq",
            "iters": 1000,
            "record_every": 10
        }"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let status = danyra()
        .args(["run", "--iters", "30", "--seed", "5", "--mode", "eq", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = read(&out, "trace.csv");
    let ks: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ks, ["10", "20", "30"]);
    let report: serde_json::Value = serde_json::from_str(&read(&out, "report.json")).unwrap();
    assert_eq!(report["mode"], "eq");
}

#[test]
fn threaded_run_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (out, threads) in [(&a, "0"), (&b, "3")] {
        let status = danyra()
            .env("DANYRA_THREADS", threads)
            .args(["run", "--preset", "fig3", "--iters", "700", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(read(&a, "trace.csv"), read(&b, "trace.csv"));
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"instance": {"generate": {"seed": 1, "n": 3, "r_max": 3.0, "extra_edges": 0}},
        "hyper": {"alpha": 0.01, "beta": 0.02, "eta": 0.1, "gamma": 0.2}, "iters": 5}"#)
        .unwrap();
    let out = danyra().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mode"));

    let out = danyra().args(["run"]).output().unwrap();
    assert!(!out.status.success());

    let out = danyra()
        .env("DANYRA_THREADS", "many")
        .args(["run", "--preset", "fig2", "--iters", "1"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("DANYRA_THREADS"));
}
