use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn adhesion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adhesion"))
        .args(args)
        .env_remove("ADHESION_THREADS")
        .output()
        .expect("binary runs")
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

/// Bundled scenario with a smaller particle count.
fn shrunk(dir: &Path, name: &str, n: usize) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(bundled(name)).unwrap()).unwrap();
    v["model"]["n"] = n.into();
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    path
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = r#"{
    "model": {
        "distribution": {"kind": "lebesgue", "lo": -1, "hi": 1},
        "velocity": {"kind": "step", "at": 0, "left": 1, "right": 0},
        "n": 200
    },
    "run": {"grid": [0, 0.25, 0.5], "horizon": 0.5}
}"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn schema_lists_the_top_level_keys() {
    let out = adhesion(&["schema"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["model", "run", "checks", "sweep", "output"] {
        assert!(v["properties"].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn verify_passes_on_the_single_shock() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shrunk(tmp.path(), "example1.json", 1000);
    let out_dir = tmp.path().join("out");
    let out = adhesion(&["verify", "--scenario", s(&scenario), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn injected_bias_breaks_the_martingale_check() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shrunk(tmp.path(), "example1.json", 500);
    let out_dir = tmp.path().join("out");
    let out = adhesion(&[
        "verify",
        "--scenario",
        s(&scenario),
        "--out",
        s(&out_dir),
        "--enable-fault-injection",
        "--inject-velocity-bias",
        "1e-3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL martingale_x")), "{stdout}");
}

#[test]
fn bias_needs_the_fault_injection_switch() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "s.json", SMALL);
    let out = adhesion(&["verify", "--scenario", s(&scenario), "--out", s(tmp.path()), "--inject-velocity-bias", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_keys_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "s.json", &SMALL.replace("\"n\": 200", "\"n\": 200, \"count\": 1"));
    let out = adhesion(&["simulate", "--scenario", s(&scenario), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("count") && err.contains("line"), "{err}");
}

#[test]
fn window_errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("\"n\": 200", "\"n\": 200, \"window\": [-3, 1]");
    let scenario = write(tmp.path(), "s.json", &text);
    let out = adhesion(&["simulate", "--scenario", s(&scenario), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window"));
}

#[test]
fn no_checks_gives_an_empty_passing_report() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write(tmp.path(), "s.json", SMALL);
    let out_dir = tmp.path().join("out");
    let out = adhesion(&["verify", "--scenario", s(&scenario), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 0);
}

#[test]
fn empty_grid_writes_only_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace("[0, 0.25, 0.5]", "[]");
    let scenario = write(tmp.path(), "s.json", &text);
    let out_dir = tmp.path().join("out");
    let out = adhesion(&["simulate", "--scenario", s(&scenario), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["files"].as_array().unwrap().len(), 0);
}

#[test]
fn random_samples_need_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL.replace(r#""horizon": 0.5"#, r#""horizon": 0.5, "samples": {"count": 5}"#);
    let scenario = write(tmp.path(), "s.json", &text);
    let out = adhesion(&["simulate", "--scenario", s(&scenario), "--out", s(&tmp.path().join("a"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = adhesion(&["simulate", "--scenario", s(&scenario), "--out", s(&tmp.path().join("b")), "--seed", "9"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("b/bundles/sample0004.csv").exists());
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shrunk(tmp.path(), "example2.json", 800);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = adhesion(&["simulate", "--scenario", s(&scenario), "--out", s(dir), "--threads", threads]);
        assert!(out.status.success());
    }
    let ma = fs::read(a.join("manifest.json")).unwrap();
    let mb = fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let text = String::from_utf8(ma).unwrap();
    assert!(text.contains("turbulence.json") && text.contains("geometry.json"));
}

#[test]
fn simulate_exports_the_shock_line() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = shrunk(tmp.path(), "example1.json", 2000);
    let out_dir = tmp.path().join("out");
    assert!(adhesion(&["simulate", "--scenario", s(&scenario), "--out", s(&out_dir)]).status.success());
    // Last grid time is t = 2: one nontrivial block at 1.
    let csv = fs::read_to_string(out_dir.join("states/t0099.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let position: f64 = rows[0].split(',').nth(5).unwrap().parse().unwrap();
    assert!((position - 1.0).abs() < 1e-3, "{position}");
}

#[test]
fn sweep_of_constant_velocity_has_zero_widths() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = adhesion(&["sweep", "--scenario", s(&bundled("constant.json")), "--out", s(&out_dir)]);
    assert!(out.status.success());
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    for row in csv.lines().skip(1) {
        let w: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(w, 0.0);
    }
}

#[test]
fn sweep_widths_shrink_for_a_smooth_compression() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = adhesion(&["sweep", "--scenario", s(&bundled("smooth.json")), "--out", s(&out_dir)]);
    assert!(out.status.success());
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let widths: Vec<f64> = csv.lines().skip(1).map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
}
