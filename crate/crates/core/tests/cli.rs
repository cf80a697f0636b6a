use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pointer-measure"));
    cmd.env("RUST_LOG", "error");
    cmd
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn minimal() -> Value {
    json!({
        "system": {
            "dimension": 2,
            "psi": [[1, 0], [1, 0]],
            "operator": {"projector_basis": [[[1, 0], [0, 0]]]}
        },
        "sweep": {"gammas": [0.5]}
    })
}

fn with_post_selection(psi_f: Value) -> Value {
    let mut v = minimal();
    v["system"]["psi_f"] = psi_f;
    v
}

/// Data rows of a CSV, metadata and header stripped.
fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn manifest(out: &Path, cmd: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{cmd}_manifest.json"))).unwrap()).unwrap()
}

#[test]
fn minimal_ps_writes_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &minimal());
    let out = dir.path().join("out");
    let o = run("ps", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out, "ps");
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    assert_eq!(files, ["ps_profile_000.csv", "ps_means.csv"]);
    for f in &files {
        assert!(out.join(f).exists());
    }
    let (header, rows) = csv_rows(&out.join("ps_means.csv"));
    assert_eq!(header, ["gamma", "mean_q", "mean_p", "var_q"]);
    let mean_q: f64 = rows[0][1].parse().unwrap();
    assert!((mean_q - 0.25).abs() < 1e-9);
    let (_, profile) = csv_rows(&out.join("ps_profile_000.csv"));
    assert_eq!(profile.len(), 1024);
}

#[test]
fn manifest_hash_matches_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &minimal());
    let out = dir.path().join("out");
    assert_eq!(run("ps", &cfg, &out, &["--seed", "99"]).status.code(), Some(0));
    let m = manifest(&out, "ps");
    let expected = hex::encode(Sha256::digest(fs::read(&cfg).unwrap()));
    assert_eq!(m["config_sha256"], json!(expected));
    assert_eq!(m["seed"], json!(99));
    let mut listed: Vec<String> = m["outputs"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_string()).collect();
    let n = listed.len();
    listed.dedup();
    assert_eq!(listed.len(), n);
    // Nothing but outputs and the manifest in the directory.
    assert_eq!(fs::read_dir(&out).unwrap().count(), n + 1);
}

#[test]
fn invalid_projector_basis_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["system"]["operator"]["projector_basis"] = json!([[[1, 0], [0, 0]], [[-2, 0], [0, 0]]]);
    let cfg = write_config(dir.path(), "c.json", &v);
    let o = run("ps", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.operator.projector_basis"));
}

#[test]
fn missing_config_is_config_error() {
    let o = bin().arg("ps").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_of_thirty_couplings_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["sweep"] = json!({"range": [0.1, 3.0], "steps": 30});
    v["pointer"] = json!({"n_points": 1024});
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    let start = Instant::now();
    assert_eq!(run("ps", &cfg, &out, &[]).status.code(), Some(0));
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let (_, rows) = csv_rows(&out.join("ps_means.csv"));
    assert_eq!(rows.len(), 30);
}

#[test]
fn pps_unit_weak_value_means() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = with_post_selection(json!([[1, 0], [0, 0]]));
    v["sweep"] = json!({"gammas": [0.1, 0.5, 1.0, 2.0, 3.0]});
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    assert_eq!(run("pps", &cfg, &out, &[]).status.code(), Some(0));
    let (_, rows) = csv_rows(&out.join("pps_means.csv"));
    for r in rows {
        let gamma: f64 = r[0].parse().unwrap();
        let mean_q: f64 = r[1].parse().unwrap();
        assert!((mean_q - gamma).abs() < 1e-9, "{gamma}: {mean_q}");
    }
}

#[test]
fn pps_summary_reports_weak_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &with_post_selection(json!([[1, 0], [0, 1]])));
    let out = dir.path().join("out");
    assert_eq!(run("pps", &cfg, &out, &[]).status.code(), Some(0));
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("pps_summary.json")).unwrap()).unwrap();
    assert!((s["a_w"]["re"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((s["a_w"]["im"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let row = &s["rows"][0];
    assert!(row["n"].as_f64().unwrap() > 0.0);
    assert!((row["chi"].as_f64().unwrap() + std::f64::consts::FRAC_PI_4).abs() < 1e-12);
}

#[test]
fn orthogonal_post_selection_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &with_post_selection(json!([[1, 0], [-1, 0]])));
    let o = run("pps", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("orthogonal"));
}

#[test]
fn pps_requires_final_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &minimal());
    let o = run("pps", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.psi_f"));
}

#[test]
fn non_projector_runs_through_evolution() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = with_post_selection(json!([[1, 0], [0.2, 0.3]]));
    v["system"]["operator"] = json!({"hermitian_matrix": [[[0.5, 0], [0.2, -0.1]], [[0.2, 0.1], [-0.4, 0]]]});
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    assert_eq!(run("ps", &cfg, &out, &[]).status.code(), Some(0));
    let (_, rows) = csv_rows(&out.join("ps_means.csv"));
    // <q> shifts by gamma <A>; <A> = (0.5 + 2*0.2 - 0.4) / 2 = 0.25 for |+>.
    let mean_q: f64 = rows[0][1].parse().unwrap();
    assert!((mean_q - 0.5 * 0.25).abs() < 1e-9, "{mean_q}");
    assert_eq!(run("pps", &cfg, &out, &[]).status.code(), Some(0));
}

#[test]
fn verify_default_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &with_post_selection(json!([[1, 0], [0, 1]])));
    let out = dir.path().join("out");
    let o = run("verify", &cfg, &out, &[]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(r["passed"], json!(true));
    for c in r["checks"].as_array().unwrap() {
        let name = c["name"].as_str().unwrap();
        if !name.contains("convergence") {
            assert!(c["max_residual"].as_f64().unwrap() < 1e-8, "{name}");
        }
    }
    assert!(stdout.contains("PASS random.convergence_slope"));
    assert!(stdout.contains("slope 2.0"));
}

#[test]
fn verify_reports_corrupted_projector() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["system"]["operator"] = json!({"hermitian_matrix": [[[0.9, 0], [0, 0]], [[0, 0], [0.1, 0]]], "projector": true});
    v["verify"] = json!({"random_instances": 10});
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    let o = run("verify", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL configured.projector"), "{stdout}");
    assert!(stdout.contains("not idempotent"));
    // The report and manifest are still written.
    assert!(out.join("verify_report.json").exists());
    assert!(out.join("verify_manifest.json").exists());

    // The same operator is a configuration error for the exact commands.
    assert_eq!(run("ps", &cfg, &out, &[]).status.code(), Some(1));
}

#[test]
fn sensitivity_rows_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["sweep"] = json!({"gammas": [0.1]});
    v["monte_carlo"] = json!({"samples": 2000});
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    assert_eq!(run("sensitivity", &cfg, &out, &[]).status.code(), Some(0));
    let (header, rows) = csv_rows(&out.join("sensitivity.csv"));
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let q = rows.iter().find(|r| r[col("observable")] == "q").unwrap();
    let delta: f64 = q[col("delta_mean_a")].parse().unwrap();
    assert!((delta - 10.0).abs() < 1e-8);
    assert_eq!(q[col("status")], "ok");
    let p = rows.iter().find(|r| r[col("observable")] == "p").unwrap();
    assert_eq!(p[col("status")], "undefined_sensitivity");

    let mc: Value = serde_json::from_str(&fs::read_to_string(out.join("sensitivity_monte_carlo.json")).unwrap()).unwrap();
    let checks = mc["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 2);
    assert!(checks.iter().all(|c| c["within_tolerance"] == json!(true)));
}

#[test]
fn sensitivity_reports_sign_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = with_post_selection(json!([[1, 0], [0, -1]]));
    v["pointer"] = json!({"cubic": 0.15});
    v["sweep"] = json!({"gammas": [0.05]});
    let cfg = write_config(dir.path(), "c.json", &v);
    let out = dir.path().join("out");
    assert_eq!(run("sensitivity", &cfg, &out, &[]).status.code(), Some(0));
    let mc: Value = serde_json::from_str(&fs::read_to_string(out.join("sensitivity_monte_carlo.json")).unwrap()).unwrap();
    let im = &mc["im_accuracy"][0];
    assert!(im["term"].as_f64().unwrap() < 0.0);
    assert_eq!(im["improves_accuracy"], json!(true));
    assert_eq!(mc["checks"][0]["within_tolerance"], json!(true));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = with_post_selection(json!([[1, 0], [0, 1]]));
    v["sweep"] = json!({"gammas": [0.02, 0.05, 0.1]});
    v["observables"] = json!(["q^2", "qp"]);
    v["monte_carlo"] = json!({"samples": 3000});
    let cfg = write_config(dir.path(), "c.json", &v);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["pps", "sensitivity"] {
            assert_eq!(run(cmd, &cfg, out, &["--seed", "5"]).status.code(), Some(0));
        }
    }
    let mut compared = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with("manifest.json") {
            continue;
        }
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
        compared += 1;
    }
    assert!(compared >= 7);
}

#[test]
fn json_format_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &minimal());
    let out = dir.path().join("out");
    assert_eq!(run("ps", &cfg, &out, &["--format", "json"]).status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(out.join("ps.json")).unwrap()).unwrap();
    assert_eq!(doc["points"][0]["profile"].as_array().unwrap().len(), 1024);
    assert!(!out.join("ps_means.csv").exists());
}

#[test]
fn grid_containment_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = minimal();
    v["sweep"] = json!({"gammas": [30.0]});
    let cfg = write_config(dir.path(), "c.json", &v);
    let o = run("ps", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
}
