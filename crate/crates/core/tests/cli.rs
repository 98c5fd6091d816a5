use std::path::{Path, PathBuf};
use std::process::Command;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn lab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .env("LAB_THREADS", "2")
        .output()
        .expect("lab runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn shipped_configs_run() {
    for sub in [
        "validate",
        "flow",
        "jacobi",
        "riccati",
        "pestov",
        "identity",
        "xray",
        "invert",
        "anosov",
        "cohomology",
    ] {
        let cfg = configs().join(format!("{sub}.json"));
        let (code, stdout, stderr) = lab(&[sub, "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 0, "{sub}: {stderr}");
        let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
        assert_eq!(v["subcommand"], sub);
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_json = write(dir.path(), "bad.json", "{not json");
    assert_eq!(lab(&["validate", "--config", &bad_json]).0, 1);
    let bad_expr = write(
        dir.path(),
        "expr.json",
        r#"{"schema": 1, "experiment": "e", "surface": {"kind": "flat_torus"}, "lambda": "siin(x)"}"#,
    );
    let (code, _, err) = lab(&["validate", "--config", &bad_expr]);
    assert_eq!(code, 1);
    assert!(err.contains("siin"), "{err}");
    assert_eq!(lab(&["validate", "--config", "/nonexistent/config.json"]).0, 1);
    // a short boundary arc leaves the operator without a usable spectrum
    let arc = write(
        dir.path(),
        "arc.json",
        r#"{"schema": 1, "experiment": "arc", "surface": {"kind": "flat_disk"},
            "params": {"degree": 6, "n_boundary": 10, "n_angles": 10, "arc": [0.0, 0.05]}}"#,
    );
    let (code, _, err) = lab(&["xray", "--config", &arc]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn trapped_disk_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "trap.json",
        r#"{"schema": 1, "experiment": "trap", "surface": {"kind": "flat_disk"}, "lambda": "5",
            "params": {"degree": 4, "n_boundary": 8, "n_angles": 8}}"#,
    );
    let (code, stdout, stderr) = lab(&["xray", "--config", &cfg]);
    assert_eq!(code, 0, "{stderr}");
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert!(!v["warnings"].as_array().unwrap().is_empty());
    assert!(v["summary"]["trapped_states"].as_u64().unwrap() > 0);
}

#[test]
fn csv_output_is_deterministic() {
    let cfg = configs().join("xray.json");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let (code, _, err) = lab(&[
            "xray",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--format",
            "csv",
        ]);
        assert_eq!(code, 0, "{err}");
    }
    let spectrum = std::fs::read_to_string(a.path().join("disk_xray_xray_spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("index,sigma\n"));
    for name in ["disk_xray_xray_spectrum.csv", "disk_xray_xray_summary.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}
