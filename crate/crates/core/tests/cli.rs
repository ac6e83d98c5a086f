use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn aronsson(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_aronsson"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_config(dir: &Path, config: &str) -> (i32, Option<Value>) {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let (code, _, _) = aronsson(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let report = fs::read_to_string(out.join("report.json"))
        .ok()
        .map(|t| serde_json::from_str(&t).unwrap());
    (code, report)
}

#[test]
fn counterexample_preset_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ce");
    let (code, _, _) = aronsson(&["run", "--preset", "counterexample-infinity", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let exp = &report["experiments"][0];
    assert_eq!(exp["experiment"], "counterexample");
    assert_eq!(exp["empirical"], true);
    for f in exp["files"].as_array().unwrap() {
        assert!(out.join(f.as_str().unwrap()).is_file());
    }
    assert!(out.join("resolved-config.json").is_file());
    assert!(out.join("timing.json").is_file());
}

#[test]
fn resolved_config_reruns_to_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"system": {"kind": "hormander", "m": 2}, "candidate": {"kind": "gauge", "m": 2},
                     "experiment": ["check-aronsson", "excond"], "params": {"sample_count": 20, "seed": 3}}"#;
    let (code, first) = run_config(dir.path(), config);
    assert_eq!(code, 0);
    let resolved = fs::read_to_string(dir.path().join("out/resolved-config.json")).unwrap();
    let again = tempfile::tempdir().unwrap();
    let (code2, second) = run_config(again.path(), &resolved);
    assert_eq!(code2, 0);
    assert_eq!(first, second);
}

#[test]
fn failed_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"system": {"kind": "isotropic", "n": 2},
                     "candidate": {"kind": "quadratic", "q": [[1.0, 0.0], [0.0, 1.0]]},
                     "experiment": "check-aronsson", "params": {"sample_count": 10}}"#;
    let (code, report) = run_config(dir.path(), config);
    assert_eq!(code, 2);
    let report = report.unwrap();
    assert_eq!(report["pass"], false);
    let checks = report["experiments"][0]["checks"].as_array().unwrap();
    assert!(checks.iter().any(|c| c["name"] == "max |residual|" && c["pass"] == false));
}

#[test]
fn numerical_errors_are_reported_as_failures() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1},
                     "experiment": "representation",
                     "params": {"starts": [[1.0, 0.3]], "integrate": {"horizon": 0.01}}}"#;
    let (code, report) = run_config(dir.path(), config);
    assert_eq!(code, 2);
    let exp = &report.unwrap()["experiments"][0];
    assert!(exp["error"].as_str().unwrap().contains("did not leave the box"));
}

#[test]
fn config_errors_exit_with_one() {
    let cases = [
        r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 2}, "experiment": "excond"}"#,
        r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1}, "experiment": "excond", "typo": 1}"#,
        r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1}, "experiment": "nope"}"#,
        "not json",
    ];
    for config in cases {
        let dir = tempfile::tempdir().unwrap();
        let (code, report) = run_config(dir.path(), config);
        assert_eq!(code, 1, "{config}");
        assert!(report.is_none());
    }
}

#[test]
fn malformed_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"system": {"kind": "grushin", "m": 1}, "candidate": {"kind": "gauge", "m": 1},
            "experiment": "excond", "params": {"sedd": 4}}"#,
    )
    .unwrap();
    let (code, _, err) = aronsson(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("sedd"), "{err}");
}

#[test]
fn grushin_regularity_preset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reg");
    let (code, _, _) = aronsson(&["run", "--preset", "grushin-regularity", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let kinds: Vec<&str> = report["experiments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["experiment"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, ["mintime-grid", "modulus", "bound-compare"]);
    assert!(out.join("grid.csv").is_file());
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(aronsson(&["run", "--bogus"]).0, 1);
    assert_eq!(aronsson(&["run"]).0, 1);
    assert_eq!(aronsson(&["run", "--preset", "missing"]).0, 1);
    assert_eq!(aronsson(&["run", "--config", "/nonexistent/config.json"]).0, 1);
    assert_eq!(aronsson(&["--help"]).0, 0);
    assert_eq!(aronsson(&["--version"]).0, 0);
}

#[test]
fn presets_listing() {
    let (code, text, _) = aronsson(&["presets"]);
    assert_eq!(code, 0);
    assert_eq!(text.lines().count(), 5);
    let (code, json, _) = aronsson(&["presets", "--json"]);
    assert_eq!(code, 0);
    let all: Value = serde_json::from_str(&json).unwrap();
    let all = all.as_array().unwrap();
    assert_eq!(all.len(), 5);
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    for (entry, name) in all.iter().zip(names) {
        assert_eq!(entry["name"], name);
    }
    assert_eq!(all[4]["config"]["params"]["start_count"], 50);
}

#[test]
fn thread_count_does_not_change_results() {
    let config = r#"{"system": {"kind": "hormander", "m": 2}, "candidate": {"kind": "gauge", "m": 2},
                     "experiment": ["certify", "amf-test"],
                     "params": {"starts": [[1.0, 0.2, 0.1]], "amf_box": {"lo": [0.5, -0.5, -0.5], "hi": [1.5, 0.5, 0.5]},
                                "amf": {"per_axis": 12, "trials": 20}}}"#;
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, config).unwrap();
        let out = dir.path().join("out");
        let (code, _, _) = aronsson(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code, 0);
        reports.push(fs::read_to_string(out.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}
