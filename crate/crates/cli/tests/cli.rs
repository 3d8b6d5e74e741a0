//! End-to-end tests of the `kccjet` binary: every subcommand, the exit-code
//! contract (0 pass, 1 check failed, 2 runtime error, 3 usage/parse error),
//! determinism under a fixed seed, and environment-variable overrides.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kccjet"))
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn rheonomic(dir: &Path) -> PathBuf {
    write(dir, "rheo.json", r#"{"dim": 1, "h11": "1", "X": ["x1"]}"#)
}

fn free(dir: &Path) -> PathBuf {
    write(dir, "free.json", r#"{"dim": 1, "h11": "1", "F": ["0"]}"#)
}

fn sphere(dir: &Path) -> PathBuf {
    write(
        dir,
        "sphere.json",
        r#"{"dim": 2, "h11": "1", "phi": [["1", "0"], ["0", "sin(x1)^2"]],
            "domain": {"t": [0.5, 1.5], "x": [[0.5, 2.0], [0.5, 2.0]]}}"#,
    )
}

fn polar(dir: &Path) -> PathBuf {
    write(
        dir,
        "polar.json",
        r#"{"dim": 2, "h11": "1", "phi": [["1", "0"], ["0", "x1^2"]],
            "domain": {"t": [0.5, 1.5], "x": [[0.5, 2.0], [0.5, 2.0]]}}"#,
    )
}

#[test]
fn invariants_of_the_rheonomic_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = rheonomic(dir.path());
    let out = bin()
        .args(["invariants", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[1], y=[2]"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"epsilon\": [1.0000000000000000e0]"), "{text}");
    assert!(text.contains("\"P\": [[2.5000000000000000e-1]]"), "{text}");
}

#[test]
fn invariants_of_the_free_model_are_zero_in_csv() {
    let dir = tempfile::tempdir().unwrap();
    let model = free(dir.path());
    let out = bin()
        .args(["invariants", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[3], y=[4]", "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "invariant,indices,value");
    for line in text.lines().skip(1) {
        assert!(line.ends_with("0.00000000000e0"), "{line}");
    }
    // 1 epsilon + 1 P + 1 R3 + 1 B4 + 1 D5 for n=1
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn invariants_on_the_flat_polar_model_vanish() {
    let dir = tempfile::tempdir().unwrap();
    let model = polar(dir.path());
    let out = bin()
        .args(["invariants", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[1.5, 0.3], y=[0.2, 1]", "--format", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    for line in stdout(&out).lines().skip(1) {
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(value.abs() < 1e-9, "{line}");
    }
}

#[test]
fn symbolic_output_is_parseable_expressions() {
    let dir = tempfile::tempdir().unwrap();
    let model = rheonomic(dir.path());
    let out = bin()
        .args(["invariants", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[0], y=[1]", "--symbolic"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"symbolic\""), "{text}");
}

#[test]
fn trajectory_writes_expected_csv() {
    let dir = tempfile::tempdir().unwrap();
    let model = free(dir.path());
    let csv_path = dir.path().join("traj.csv");
    let out = bin()
        .args(["trajectory", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[0], y=[1]", "--t1", "1", "--steps", "10", "--out"])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x1,y1");
    assert_eq!(lines.len(), 12); // header + 11 samples
    let last: Vec<f64> = lines[11].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[1] - 1.0).abs() < 1e-11, "final x1 = {}", last[1]);
}

#[test]
fn deviation_reports_jacobi_field_and_residual() {
    let dir = tempfile::tempdir().unwrap();
    let model = sphere(dir.path());
    let csv_path = dir.path().join("dev.csv");
    let out = bin()
        .args(["deviation", "--model"])
        .arg(&model)
        .args([
            "--at",
            "t=0, x=[1.5707963267948966, 0], y=[0, 1]",
            "--xi",
            "[0, 0]",
            "--xidot",
            "[1, 0]",
            "--t1",
            "3.141592653589793",
            "--steps",
            "2000",
            "--out",
        ])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"deviation_residual\""), "{text}");

    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,y1,y2,xi1,xi2,xidot1,xidot2");
    // final ξ¹ ≈ sin(π) = 0
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(last[5].abs() < 1e-5, "final xi1 = {}", last[5]);
}

#[test]
fn rheonomic_trajectory_reaches_e() {
    let dir = tempfile::tempdir().unwrap();
    let model = rheonomic(dir.path());
    let csv_path = dir.path().join("traj.csv");
    let out = bin()
        .args(["trajectory", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[1], y=[1]", "--t1", "1", "--steps", "1000", "--out"])
        .arg(&csv_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let last: Vec<f64> = csv.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[2] - std::f64::consts::E).abs() < 1e-5, "final y1 = {}", last[2]);
}

#[test]
fn covariance_passes_under_scaling_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "cubic.json",
        r#"{"dim": 1, "h11": "1", "F": ["y1^3 + x1*y1^2"]}"#,
    );
    let change = write(
        dir.path(),
        "scale.json",
        r#"{"t_fwd": "t", "t_inv": "t", "x_fwd": ["2*x1"], "x_inv": ["x1/2"]}"#,
    );
    let run = || {
        bin()
            .args(["covariance", "--model"])
            .arg(&model)
            .arg("--change")
            .arg(&change)
            .args(["--points", "8", "--seed", "42"])
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert!(a.status.success());
    assert!(stdout(&a).contains("\"pass\": true"), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout, "identical invocations must be byte-identical");
}

#[test]
fn covariance_on_identity_change_has_zero_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let model = rheonomic(dir.path());
    let change = write(
        dir.path(),
        "id.json",
        r#"{"t_fwd": "t", "t_inv": "t", "x_fwd": ["x1"], "x_inv": ["x1"]}"#,
    );
    let out = bin()
        .args(["covariance", "--model"])
        .arg(&model)
        .arg("--change")
        .arg(&change)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"epsilon\": 0.0000000000000000e0"), "{text}");
}

#[test]
fn covariance_time_reparametrization_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = rheonomic(dir.path());
    let change = write(
        dir.path(),
        "time2.json",
        r#"{"t_fwd": "2*t", "t_inv": "t/2", "x_fwd": ["x1"], "x_inv": ["x1"]}"#,
    );
    let out = bin()
        .args(["covariance", "--model"])
        .arg(&model)
        .arg("--change")
        .arg(&change)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stdout(&out));
}

#[test]
fn flatness_verdicts() {
    let dir = tempfile::tempdir().unwrap();

    let out = bin()
        .args(["flatness", "--model"])
        .arg(polar(dir.path()))
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"verdict\": \"FLAT\""), "{text}");
    assert!(text.contains("\"gamma\": ["), "reconstructed connection missing: {text}");

    let out = bin()
        .args(["flatness", "--model"])
        .arg(sphere(dir.path()))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("\"verdict\": \"NOT FLAT\""));

    let out = bin()
        .args(["flatness", "--model"])
        .arg(rheonomic(dir.path()))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("\"verdict\": \"NOT FLAT\""));
}

#[test]
fn exit_code_2_on_integration_abort() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "log.json",
        r#"{"dim": 1, "h11": "1", "F": ["log(x1)"]}"#,
    );
    let out = bin()
        .args(["trajectory", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[0.0001], y=[-10]", "--t1", "1", "--steps", "100", "--out"])
        .arg(dir.path().join("t.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_code_3_on_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();

    // unknown flag
    let out = bin().args(["invariants", "--nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    // model with two kinds present
    let model = write(
        dir.path(),
        "two.json",
        r#"{"dim": 1, "h11": "1", "F": ["0"], "X": ["x1"]}"#,
    );
    let out = bin()
        .args(["invariants", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[0], y=[0]"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // expression referencing an out-of-range variable
    let model = write(dir.path(), "oor.json", r#"{"dim": 1, "h11": "1", "F": ["y2"]}"#);
    let out = bin()
        .args(["invariants", "--model"])
        .arg(&model)
        .args(["--at", "t=0, x=[0], y=[0]"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // malformed --at
    let model = free(dir.path());
    let out = bin()
        .args(["invariants", "--model"])
        .arg(&model)
        .args(["--at", "x=[0], y=[0]"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn environment_variables_supply_flags() {
    let dir = tempfile::tempdir().unwrap();
    let model = rheonomic(dir.path());
    let out = bin()
        .arg("invariants")
        .env("KCCJET_MODEL", &model)
        .env("KCCJET_AT", "t=0, x=[1], y=[2]")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("\"epsilon\": [1.0000000000000000e0]"));
}

#[test]
fn connection_model_kind_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    // n=1, Γ¹₁₁ = 1 → F = y1², all invariants vanish (flat connection).
    let model = write(
        dir.path(),
        "conn.json",
        r#"{"dim": 1, "h11": "1", "gamma": [[["1"]]]}"#,
    );
    let out = bin()
        .args(["flatness", "--model"])
        .arg(&model)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stdout(&out).contains("\"verdict\": \"FLAT\""));
}
