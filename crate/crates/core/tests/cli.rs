use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn manifest(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests").join(name)
}

fn hesse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hesse"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_on_the_cone_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("cone_verify.toml");
    let mut hashes = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = hesse(&["verify", m.to_str().unwrap(), "--json", name, "--quiet"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
        assert!(out.stdout.is_empty());
        let report = read_json(&dir.path().join(name));
        assert_eq!(report["schema_version"], 1);
        assert_eq!(report["seed"], 7);
        for r in report["records"].as_array().unwrap() {
            assert_eq!(r["pass"], r["residual"].as_f64().unwrap() < r["tolerance"].as_f64().unwrap());
            assert!(!r["anchor"].as_str().unwrap().is_empty());
        }
        hashes.push(report["determinism_hash"].as_str().unwrap().to_string());
    }
    assert_eq!(hashes[0], hashes[1]);

    let out = hesse(&["verify", m.to_str().unwrap(), "--json", "c.json", "--seed", "8", "--points", "10"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_ne!(read_json(&dir.path().join("c.json"))["determinism_hash"], hashes[0].as_str());
}

#[test]
fn non_soliton_exits_one_with_unit_residual() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("quadratic_soliton.toml");
    let out = hesse(&["soliton", m.to_str().unwrap(), "--json", "r.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL soliton_residual"));
    let report = read_json(&dir.path().join("r.json"));
    let rec = report["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == "soliton_residual")
        .unwrap();
    assert_eq!(rec["residual"], 1.0);
    assert_eq!(report["pass"], false);
}

#[test]
fn einstein_patch_writes_csv_with_expected_factor() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("einstein_patch.toml");
    let out = hesse(&["flow", m.to_str().unwrap(), "--csv", "flow.csv", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let csv = std::fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "c_hat").unwrap();
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    let t: f64 = last[0].parse().unwrap();
    let c: f64 = last[col].parse().unwrap();
    assert!((t - 0.1).abs() < 1e-12);
    assert!((c - 1.2).abs() < 1e-6, "ĉ = {c}");
}

#[test]
fn tolerance_override_can_fail_a_passing_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("trinomial.toml");
    assert_eq!(hesse(&["infogeo", m.to_str().unwrap(), "--quiet"], dir.path()).status.code(), Some(0));
    let out = hesse(&["infogeo", m.to_str().unwrap(), "--tolerance", "0"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[potential]\ndim = 2\nexpr = \n").unwrap();
    let out = hesse(&["verify", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let outside = dir.path().join("outside.toml");
    std::fs::write(&outside, "[potential]\nfamily = \"log_cone\"\ndim = 2\n[samples]\npoints = [[0.0, 1.0], [2.0, 1.0]]\n")
        .unwrap();
    let out = hesse(&["analyze", outside.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sample 1"));

    let out = hesse(&["analyze", "missing.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = hesse(&["soliton", manifest("cone_verify.toml").to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_dumps_structure_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("cone_verify.toml");
    let out = hesse(&["analyze", m.to_str().unwrap(), "--points", "0", "--json", "a.json", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("a.json"));
    let sp = &report["dumps"]["structure"][0];
    assert_eq!(sp["point"], serde_json::json!([0.0, 1.0]));
    assert_eq!(report["dumps"]["properness"]["proper"], true);
}
