use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_indlim");

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn indlim(args: &[&str], out: &Path) -> (i32, String) {
    let o = Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("INDLIM_OUT_DIR")
        .output()
        .unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

const TWO_POINT: &str = r#"[{"atom": {"at": "-1", "mass": "1/2"}}, {"atom": {"at": "1", "mass": "1/2"}}]"#;

#[test]
fn validate_accepts_toy_and_rejects_bad_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = data("toy.json");
    assert_eq!(indlim(&["validate", toy.to_str().unwrap()], tmp.path()).0, 0);

    let eps = write_config(tmp.path(), r#"{"targets": [], "eps": 1.5}"#);
    assert_eq!(indlim(&["validate", eps.to_str().unwrap()], tmp.path()).0, 2);

    let mean = write_config(tmp.path(), r#"{"targets": [[{"atom": {"at": "0.3", "mass": "1"}}]], "eps": "0.5"}"#);
    assert_eq!(indlim(&["run", mean.to_str().unwrap()], tmp.path()).0, 2);

    let missing = tmp.path().join("absent.json");
    assert_eq!(indlim(&["validate", missing.to_str().unwrap()], tmp.path()).0, 2);
}

#[test]
fn dry_run_matches_golden_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, stdout) = indlim(&["dry-run", data("toy.json").to_str().unwrap()], tmp.path());
    assert_eq!(code, 0);
    let got = fs::read_to_string(tmp.path().join("schedule.json")).unwrap();
    let want = fs::read_to_string(data("toy_schedule.golden.json")).unwrap();
    assert_eq!(got, want);
    assert_eq!(stdout.trim_end(), want.trim_end());
}

#[test]
fn dry_run_with_zero_targets_is_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"targets": [], "eps": "1/2"}"#);
    let (code, _) = indlim(&["dry-run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code, 0);
    let s: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("schedule.json")).unwrap()).unwrap();
    assert_eq!(s["schedule"]["stages"].as_array().unwrap().len(), 0);
}

#[test]
fn dry_run_over_budget_exits_3_and_still_prints() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"targets": [{TWO_POINT}], "eps": "1/2", "budgets": {{"n_max": 300}}}}"#);
    let cfg = write_config(tmp.path(), &body);
    let (code, stdout) = indlim(&["dry-run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code, 3);
    assert!(stdout.contains("\"over_budget\""));
    assert!(tmp.path().join("schedule.json").exists());
}

#[test]
fn run_over_budget_writes_partial_report() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"targets": [{TWO_POINT}], "eps": "1/2", "budgets": {{"n_max": 300}}}}"#);
    let cfg = write_config(tmp.path(), &body);
    assert_eq!(indlim(&["run", cfg.to_str().unwrap()], tmp.path()).0, 3);
    let r = report(tmp.path());
    assert_eq!(r["partial"], Value::Bool(true));
    assert_eq!(r["exit_code"], 3);
    assert!(r["schedule"].is_object());
}

#[test]
fn run_toy_passes_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let toy = data("toy.json");
    let toy = toy.to_str().unwrap();
    assert_eq!(indlim(&["run", toy], a.path()).0, 0);
    assert_eq!(indlim(&["run", toy], b.path()).0, 0);
    for f in ["report.json", "cdf_1.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let r = report(a.path());
    assert_eq!(r["partial"], Value::Bool(false));
    assert_eq!(r["status"], "pass");
    let law = r["checks"][0]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "stage1.law")
        .unwrap();
    assert_eq!(law["pass"], true);
    assert!(!a.path().join("castles.json").exists());
    let csv = fs::read_to_string(a.path().join("cdf_1.csv")).unwrap();
    assert!(csv.starts_with("t,F_exact,F_target,F_empirical\n"));
}

#[test]
fn seed_flag_changes_only_sampling() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let toy = data("toy.json");
    let toy = toy.to_str().unwrap();
    assert_eq!(indlim(&["run", toy, "--seed", "1"], a.path()).0, 0);
    assert_eq!(indlim(&["run", toy, "--seed", "2"], b.path()).0, 0);
    let (ra, rb) = (report(a.path()), report(b.path()));
    assert_eq!(ra["construction"], rb["construction"]);
    assert_ne!(ra["monte_carlo"], rb["monte_carlo"]);
}

#[test]
fn env_var_sets_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from-env");
    let st = Command::new(BIN)
        .args(["dry-run", data("toy.json").to_str().unwrap()])
        .env("INDLIM_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(out.join("schedule.json").exists());
}

#[test]
fn nonergodic_preset_reports_components() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"targets": [{TWO_POINT}], "eps": "1/2", "alpha_overrides": {{"1": "1/4", "2": "1/8"}},
            "preset": "nonergodic_pair", "monte_carlo": {{"samples": 4096}}}}"#
    );
    let cfg = write_config(tmp.path(), &body);
    assert_eq!(indlim(&["run", cfg.to_str().unwrap(), "--dump-castles"], tmp.path()).0, 0);
    let r = report(tmp.path());
    let sections: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["section"].as_str().unwrap())
        .collect();
    assert!(sections.contains(&"components"), "{sections:?}");
    assert!(sections.contains(&"unbalanced_demo"));
    let dump: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("castles.json")).unwrap()).unwrap();
    assert!(dump.is_object());
}

#[test]
fn battery_reports_per_cycle_distances() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"targets": [], "eps": "1/2", "alpha_overrides": {"1": "1/16", "2": "1/64"},
            "monte_carlo": {"seeds": 0}, "battery": {"family": "two_point", "cycles": 3}}"#,
    );
    assert_eq!(indlim(&["run", cfg.to_str().unwrap()], tmp.path()).0, 0);
    let r = report(tmp.path());
    let cycles = r["battery"].as_array().unwrap();
    assert_eq!(cycles.len(), 3);
    for (i, c) in cycles.iter().enumerate() {
        assert_eq!(c["cycle"], i + 1);
        let d: f64 = c["distance"].as_str().unwrap().parse().unwrap();
        assert!(d <= 0.25, "{c}");
    }
}
