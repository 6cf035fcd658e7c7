use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const STABLE_1: &str = r#"{"variant":"stable","alpha":1.0,"d":1}"#;
const STABLE_15: &str = r#"{"variant":"stable","alpha":1.5,"d":1}"#;
const WELL: &str = r#"{"shape":"gaussian_well","depth":1.0,"width":1.0,"d":1}"#;

fn nht(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nht"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("NHT_THREADS", n),
        None => cmd.env_remove("NHT_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn header(text: &str) -> Vec<String> {
    text.lines()
        .find(|l| !l.starts_with('#'))
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect()
}

#[test]
fn kernel_cauchy_value_and_sorted_radii() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", STABLE_1);
    let out = nht(&["kernel", "--spec", s(&spec), "--t", "1", "--r", "1,0,0.5"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(header(&text), ["t", "r", "density", "method"]);
    let rows = data_rows(&text);
    let radii: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(radii, [0.0, 0.5, 1.0]);
    let p0: f64 = rows[0][2].parse().unwrap();
    assert!((p0 - 0.3183099).abs() < 1e-7);
}

#[test]
fn kernel_usage_and_spec_errors() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", STABLE_1);
    assert_eq!(nht(&["kernel", "--spec", s(&spec), "--r", "0"], None).status.code(), Some(2));
    let bad = write(dir.path(), "bad.json", r#"{"variant":"stable","alpha":3.5,"d":1}"#);
    let out = nht(&["kernel", "--spec", s(&bad), "--t", "1"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let torn = write(dir.path(), "torn.json", r#"{"variant":"#);
    assert_eq!(nht(&["kernel", "--spec", s(&torn), "--t", "1"], None).status.code(), Some(2));
    assert_eq!(nht(&["kernel", "--spec", s(&spec), "--t", "1"], Some("zero")).status.code(), Some(2));
}

#[test]
fn zero_potential_gives_zero_traces() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", STABLE_15);
    let zero = write(dir.path(), "zero.json", r#"{"shape":"sum","components":[],"d":1}"#);
    let out = nht(
        &["trace", "--spec", s(&spec), "--potential", s(&zero), "--t-grid", "0.05:0.2:log3", "--n-paths", "2", "--n-x", "100"],
        None,
    );
    assert!(out.status.success());
    let rows = data_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn trace_rows_sorted_with_config_and_agreement() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", STABLE_15);
    let well = write(dir.path(), "well.json", WELL);
    let out_path = dir.path().join("traces.csv");
    let out = nht(
        &[
            "trace", "--spec", s(&spec), "--potential", s(&well), "--t-grid", "0.05:0.2:log3", "--methods",
            "spectral,mc,duhamel", "--seed", "42", "--n-paths", "10", "--n-x", "300", "--out", s(&out_path),
        ],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    for key in ["\"spec\"", "\"potential\"", "\"cfg\"", "\"seed\": 42", "\"version\""] {
        assert!(text.contains(key), "header lacks {key}");
    }
    let cols = header(&text);
    assert_eq!(&cols[..8], ["t", "method", "value", "error", "k", "n", "spec_hash", "potential_hash"]);
    let rows = data_rows(&text);
    let keys: Vec<(f64, String)> = rows.iter().map(|r| (r[0].parse().unwrap(), r[1].clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    assert_eq!(keys, sorted);
    let agree = cols.iter().position(|c| c == "agreement").unwrap();
    for r in rows.iter().filter(|r| r[1] != "spectral") {
        let a: f64 = r[agree].parse().unwrap();
        assert!(a <= 1.0, "{r:?}");
    }
    assert!(rows.iter().all(|r| r[6].len() == 16 && r[7].len() == 16));
}

#[test]
fn mc_rows_reproducible_across_reruns_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", STABLE_15);
    let well = write(dir.path(), "well.json", WELL);
    let run = |threads: Option<&str>| {
        let out = nht(
            &[
                "trace", "--spec", s(&spec), "--potential", s(&well), "--t-grid", "0.05,0.1,0.2", "--methods", "mc",
                "--seed", "7", "--n-paths", "10", "--n-x", "200",
            ],
            threads,
        );
        assert!(out.status.success());
        out.stdout
    };
    let a = run(Some("1"));
    assert_eq!(a, run(Some("1")));
    assert_eq!(a, run(Some("3")));
    assert_eq!(a, run(None));
}

#[test]
fn spectral_precondition_failures_are_reported_per_row() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", r#"{"variant":"stable","alpha":1.0,"d":2}"#);
    let well = write(dir.path(), "well.json", r#"{"shape":"gaussian_well","depth":1.0,"width":1.0,"d":2}"#);
    let out = nht(
        &["trace", "--spec", s(&spec), "--potential", s(&well), "--t-grid", "0.1", "--methods", "spectral,duhamel"],
        None,
    );
    assert!(out.status.success());
    let rows = data_rows(&String::from_utf8(out.stdout).unwrap());
    let spectral = rows.iter().find(|r| r[1] == "spectral").unwrap();
    assert!(spectral[2].is_empty() && spectral.last().unwrap().contains("unsupported"));
    let duhamel = rows.iter().find(|r| r[1] == "duhamel").unwrap();
    assert!(duhamel[2].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn fit_recovers_coefficients_from_spectral_traces() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", STABLE_15);
    let well = write(dir.path(), "well.json", WELL);
    let traces = dir.path().join("traces.csv");
    let out = nht(
        &[
            "trace", "--spec", s(&spec), "--potential", s(&well), "--t-grid", "0.02:0.4:log8", "--methods", "spectral",
            "--out", s(&traces),
        ],
        None,
    );
    assert!(out.status.success());
    let out = nht(&["fit", "--spec", s(&spec), "--potential", s(&well), "--input", s(&traces)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["relative_error_c1"].as_f64().unwrap() < 0.02);
    assert!(report["relative_error_c2"].as_f64().unwrap() < 0.10);
    assert!(report["remainder"]["exponent"].as_f64().unwrap() > 2.467);
    assert_eq!(report["config"]["method"], "spectral");

    let short = dir.path().join("short.csv");
    let out = nht(
        &[
            "trace", "--spec", s(&spec), "--potential", s(&well), "--t-grid", "0.1:0.2:log5", "--methods", "spectral",
            "--out", s(&short),
        ],
        None,
    );
    assert!(out.status.success());
    let out = nht(&["fit", "--spec", s(&spec), "--potential", s(&well), "--input", s(&short)], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_subset_writes_report() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let out = nht(&["verify", "--only", "5p,scalar", "--report", s(&report)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["all_passed"], true);
    let records = r["records"].as_array().unwrap();
    assert!(records.iter().all(|x| x["check"] == "5p" || x["check"] == "scalar"));
    assert!(records.iter().any(|x| x["check"] == "5p"));

    let bad = write(dir.path(), "bad.json", "not json");
    assert_eq!(nht(&["verify", "--spec", s(&bad), "--report", s(&report)], None).status.code(), Some(2));
    assert_eq!(nht(&["verify", "--only", "7p", "--report", s(&report)], None).status.code(), Some(2));
}

#[test]
fn verify_with_user_spec() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.json", r#"{"variant":"relativistic","alpha":1.2,"m":0.5,"d":1}"#);
    let report = dir.path().join("report.json");
    let out = nht(&["verify", "--only", "3p,sup_monotone", "--spec", s(&spec), "--report", s(&report)], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["config"]["spec"]["variant"], "relativistic");
}
