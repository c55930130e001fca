//! End-to-end tests of the `netadmm` binary.

use std::path::Path;
use std::process::Command;

fn netadmm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_netadmm"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const QUADRATIC_CFG: &str = r#"{
    "topology": {"kind": "cycle", "n": 6},
    "problem": {"kind": "quadratic", "p": 2, "data_seed": 5},
    "solvers": [{"algorithm": "dladmm", "rho": 1, "c": 30, "max_iters": 1500}],
    "rel_err_target": 1e-6
}"#;

/// Trace text with the wall-clock column stripped.
fn strip_wall(text: &str) -> String {
    text.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            fields.pop();
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", QUADRATIC_CFG);

    for out in ["a", "b"] {
        let status = netadmm()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in [
        "reference.json",
        "plot.csv",
        "summary.json",
        "dladmm/trace.csv",
    ] {
        assert!(dir.path().join("a").join(name).exists(), "missing {name}");
    }
    let a = std::fs::read_to_string(dir.path().join("a/dladmm/trace.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/dladmm/trace.csv")).unwrap();
    assert_eq!(strip_wall(&a), strip_wall(&b));

    // the persisted reference round-trips exactly
    let ra = std::fs::read_to_string(dir.path().join("a/reference.json")).unwrap();
    let rb = std::fs::read_to_string(dir.path().join("b/reference.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn certify_reports_a_contraction_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", QUADRATIC_CFG);
    let out = dir.path().join("run");
    assert!(netadmm()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());

    let output = netadmm()
        .args(["certify", "--trace"])
        .arg(out.join("dladmm/trace.csv"))
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(output.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(
        parsed["report"]["regime"].as_str().unwrap(),
        "contraction-certified"
    );
    assert_eq!(parsed["report"]["descent_fraction"].as_f64().unwrap(), 1.0);
    assert!(parsed["certificate"]["best_delta"].as_f64().unwrap() > 0.0);
}

#[test]
fn strict_mode_flags_divergence_via_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // too-small linearization weight on the logistic fixture diverges
    let cfg = write_config(
        dir.path(),
        "cfg.json",
        r#"{
            "topology": {"kind": "small_world", "n": 20, "extra_links": 20},
            "problem": {"kind": "logistic", "p": 2, "q": 50},
            "solvers": [{"algorithm": "dladmm", "rho": 20, "c": 1, "max_iters": 3000}],
            "run_seed": 0
        }"#,
    );
    let out = dir.path().join("run");

    // without --strict divergence is recorded but the exit code stays 0
    let status = netadmm()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"][0]["status"].as_str().unwrap(), "diverged");

    let status = netadmm()
        .args(["run", "--strict", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("run_strict"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn sweep_results_are_worker_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", QUADRATIC_CFG);

    for (out, threads) in [("t1", "1"), ("t4", "4")] {
        let status = netadmm()
            .env("NETADMM_THREADS", threads)
            .args(["sweep", "--config"])
            .arg(&cfg)
            .args(["--param", "c", "--values", "30,60,120"])
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for value in ["c=30", "c=60", "c=120"] {
        let a = std::fs::read_to_string(dir.path().join("t1").join(value).join("dladmm/trace.csv"))
            .unwrap();
        let b = std::fs::read_to_string(dir.path().join("t4").join(value).join("dladmm/trace.csv"))
            .unwrap();
        assert_eq!(strip_wall(&a), strip_wall(&b), "trace differs for {value}");
    }
}

#[test]
fn bad_config_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "cfg.json", r#"{"not": "a config"}"#);
    let output = netadmm()
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}
