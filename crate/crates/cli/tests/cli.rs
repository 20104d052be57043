//! End-to-end tests of the `eqlab` binary: exit codes, report files, and
//! byte-level determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_eqlab")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eqlab-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, contents: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, contents).unwrap();
    path
}

fn run(subcommand: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let status = Command::new(binary())
        .arg(subcommand)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env("EQLAB_LOG", "error")
        .status()
        .unwrap();
    status.code().unwrap()
}

const MONOPOLE_IDENTITIES: &str = r#"{
  "field": {"type": "ensemble", "charges": [{"position": [0.0, 0.0, 0.0], "strength": 12.566370614359172}]},
  "levels": {"list": [0.25, 0.5]},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.5, 20.0]}
}"#;

const DIPOLE_SWEEP: &str = r#"{
  "field": {"type": "dipole", "c00": 1.0, "c10": 0.2},
  "kind": "exterior",
  "levels": {"list": [0.05, 0.08, 0.11, 0.14, 0.17, 0.2]},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.5, 500.0]}
}"#;

#[test]
fn identities_pass_on_the_monopole() {
    let dir = temp_dir("identities");
    let config = write_config(&dir, MONOPOLE_IDENTITIES);
    let code = run("identities", &config, &dir, &[]);
    assert_eq!(code, 0);
    let report = std::fs::read_to_string(dir.join("identities.json")).unwrap();
    assert!(report.contains("\"pass\": true"));
    assert!(report.contains("\"conventions\""));
}

#[test]
fn identities_pass_on_the_dipole_at_default_tolerances() {
    let dir = temp_dir("identities-dipole");
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "dipole", "c00": 1.0, "c10": 0.2},
  "levels": {"list": [0.05, 0.1]},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.5, 500.0]}
}"#,
    );
    assert_eq!(run("identities", &config, &dir, &[]), 0);
}

#[test]
fn sweep_writes_reports_and_passes() {
    let dir = temp_dir("sweep");
    let config = write_config(&dir, DIPOLE_SWEEP);
    let code = run("sweep", &config, &dir, &[]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("level,flux,gauss_bonnet,W,F,beta,dW_fd,rhs,convex\n"));
    assert_eq!(csv.lines().count(), 7);
    assert!(dir.join("sweep.json").exists());
}

#[test]
fn sweep_reports_are_byte_identical_across_runs() {
    let dir = temp_dir("determinism");
    let config = write_config(&dir, DIPOLE_SWEEP);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    assert_eq!(run("sweep", &config, &out_a, &["--seed", "7"]), 0);
    assert_eq!(run("sweep", &config, &out_b, &["--seed", "7"]), 0);
    let a = std::fs::read(out_a.join("sweep.json")).unwrap();
    let b = std::fs::read(out_b.join("sweep.json")).unwrap();
    assert_eq!(a, b, "sweep.json must be byte-identical for identical runs");
    let a = std::fs::read(out_a.join("sweep.csv")).unwrap();
    let b = std::fs::read(out_b.join("sweep.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identities_reports_are_byte_identical_across_runs() {
    // the random test points are seeded, so the whole report must reproduce
    let dir = temp_dir("determinism-identities");
    let config = write_config(&dir, MONOPOLE_IDENTITIES);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    assert_eq!(run("identities", &config, &out_a, &["--seed", "11"]), 0);
    assert_eq!(run("identities", &config, &out_b, &["--seed", "11"]), 0);
    let a = std::fs::read(out_a.join("identities.json")).unwrap();
    let b = std::fs::read(out_b.join("identities.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn centered_sphere_passes_under_both_declared_kinds() {
    let dir = temp_dir("both-kinds");
    for kind in ["exterior", "interior"] {
        let config = write_config(
            &dir,
            &format!(
                r#"{{
  "field": {{"type": "ensemble", "charges": [{{"position": [0.0, 0.0, 0.0], "strength": 1.0}}]}},
  "kind": "{kind}",
  "levels": {{"list": [0.01, 0.02, 0.03, 0.04, 0.05]}},
  "grid": {{"n_theta": 16, "n_phi": 32, "bracket": [0.05, 20.0]}}
}}"#
            ),
        );
        let code = run("sweep", &config, &dir.join(kind), &[]);
        assert_eq!(code, 0, "sphere rigidity must pass as {kind}");
    }
}

#[test]
fn nonpositive_levels_exit_with_config_error() {
    let dir = temp_dir("bad-levels");
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "dipole", "c00": 1.0, "c10": 0.1},
  "levels": {"list": [-0.1, 0.05]},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.5, 500.0]}
}"#,
    );
    assert_eq!(run("identities", &config, &dir, &[]), 2);
}

#[test]
fn invalid_field_construction_exits_three() {
    let dir = temp_dir("bad-field");
    // cavity center outside the sphere radius
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "cavity_green", "center": [0.0, 0.0, 1.5], "radius": 1.0},
  "levels": {"list": [0.1, 0.2]},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.001, 0.69]}
}"#,
    );
    assert_eq!(run("identities", &config, &dir, &[]), 3);
}

#[test]
fn missing_config_flag_exits_two() {
    let status = Command::new(binary())
        .arg("sweep")
        .env("EQLAB_LOG", "error")
        .status()
        .unwrap();
    assert_eq!(status.code().unwrap(), 2);
}

#[test]
fn unknown_tolerance_key_exits_two() {
    let dir = temp_dir("bad-tol");
    let config = write_config(&dir, DIPOLE_SWEEP);
    assert_eq!(run("sweep", &config, &dir, &["--tol-no-such-key=1.0"]), 2);
}

#[test]
fn impossible_tolerance_exits_one() {
    let dir = temp_dir("tight-tol");
    let config = write_config(
        &dir,
        r#"{
  "planar_field": {"type": "ellipse_exterior", "semi_axes": [2.0, 1.0], "flux": 6.283185307179586},
  "levels": {"list": [-0.6, -0.35, -0.1]},
  "curve": {"n_nodes": 256, "bracket": [0.5, 200.0]}
}"#,
    );
    assert_eq!(
        run("planar", &config, &dir, &["--tol-planar-conserved=1e-30"]),
        1
    );
    // the report is still written, with the failure recorded
    let report = std::fs::read_to_string(dir.join("planar.json")).unwrap();
    assert!(report.contains("\"pass\": false"));
}

#[test]
fn nonconvex_sweep_exits_four_but_writes_reports() {
    let dir = temp_dir("nonconvex");
    // two equal charges produce peanut-shaped (hyperbolic) levels below the
    // saddle value 1/(2π) ≈ 0.159
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "ensemble", "charges": [
    {"position": [0.0, 0.0, 1.0], "strength": 1.0},
    {"position": [0.0, 0.0, -1.0], "strength": 1.0}
  ]},
  "kind": "exterior",
  "levels": {"list": [0.125, 0.13, 0.135, 0.14, 0.145]},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.25, 6.0]}
}"#,
    );
    assert_eq!(run("sweep", &config, &dir, &[]), 4);
    let report = std::fs::read_to_string(dir.join("sweep.json")).unwrap();
    assert!(report.contains("\"all_convex\": false"));
    assert!(dir.join("sweep.csv").exists());
}

#[test]
fn flow_trace_passes_on_the_monopole() {
    let dir = temp_dir("flow");
    // 1/(4π·2) -> 1/(4π): radius 2 to radius 1
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "ensemble", "charges": [{"position": [0.0, 0.0, 0.0], "strength": 1.0}]},
  "flow": {"start": [0.0, 0.0, 2.0], "target_level": 0.07957747154594767, "steps": 100}
}"#,
    );
    assert_eq!(run("flow", &config, &dir, &[]), 0);
    let report = std::fs::read_to_string(dir.join("flow.json")).unwrap();
    assert!(report.contains("\"terminal_defect\""));
    let csv = std::fs::read_to_string(dir.join("flow.csv")).unwrap();
    assert!(csv.starts_with("phi,x,y,z\n"));
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn mfs_sphere_fit_and_sweep_pass() {
    let dir = temp_dir("mfs");
    let config = write_config(
        &dir,
        r#"{
  "shape": {"kind": "ellipsoid", "semi_axes": [1.0, 1.0, 1.0]},
  "mfs": {"problem": "exterior", "flux": 12.566370614359172, "n_sources": 64, "inflation": 0.04},
  "levels": {"list": [0.1, 0.2, 0.3, 0.4, 0.5]},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [1.05, 150.0]}
}"#,
    );
    assert_eq!(run("mfs", &config, &dir, &[]), 0);
    let report = std::fs::read_to_string(dir.join("mfs.json")).unwrap();
    assert!(report.contains("\"boundary_residual_max\""));
    let sweep = std::fs::read_to_string(dir.join("sweep.json")).unwrap();
    assert!(sweep.contains("\"fit\""));
}

#[test]
fn asymptotics_detects_the_quadratic_decay() {
    let dir = temp_dir("asymptotics");
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "dipole", "c00": 1.0, "c10": 0.1},
  "kind": "exterior",
  "levels": {"geometric": {"first": 0.005, "last": 0.2, "count": 8}},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.3, 500.0]}
}"#,
    );
    assert_eq!(run("asymptotics", &config, &dir, &[]), 0);
    let report = std::fs::read_to_string(dir.join("asymptotics.json")).unwrap();
    assert!(report.contains("\"slope\""));
}

#[test]
fn asymptotics_with_a_quadrupole_perturbation_stays_quadratic() {
    // the slowest-decaying deviation (the dipole mode) sets the slope
    let dir = temp_dir("asymptotics-quad");
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "multipole", "l_max": 2, "coefficients": [
    {"l": 0, "m": 0, "value": 1.0},
    {"l": 1, "m": 0, "value": 0.1},
    {"l": 2, "m": 0, "value": 0.05}
  ]},
  "kind": "exterior",
  "levels": {"geometric": {"first": 0.005, "last": 0.2, "count": 8}},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.5, 500.0]}
}"#,
    );
    assert_eq!(run("asymptotics", &config, &dir, &[]), 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("asymptotics.json")).unwrap())
            .unwrap();
    let slope = report["slope"].as_f64().unwrap();
    assert!(
        slope >= 1.9,
        "slope {slope} below the quadratic lower bound"
    );
}

#[test]
fn asymptotics_on_a_monopole_reports_identically_zero() {
    let dir = temp_dir("asymptotics-zero");
    let config = write_config(
        &dir,
        r#"{
  "field": {"type": "ensemble", "charges": [{"position": [0.0, 0.0, 0.0], "strength": 1.0}]},
  "levels": {"geometric": {"first": 0.002, "last": 0.08, "count": 6}},
  "grid": {"n_theta": 16, "n_phi": 32, "bracket": [0.05, 100.0]}
}"#,
    );
    assert_eq!(run("asymptotics", &config, &dir, &[]), 0);
    let report = std::fs::read_to_string(dir.join("asymptotics.json")).unwrap();
    assert!(report.contains("\"identically_zero\": true"));
}

#[test]
fn planar_ellipse_conservation_passes() {
    let dir = temp_dir("planar");
    let config = write_config(
        &dir,
        r#"{
  "planar_field": {"type": "ellipse_exterior", "semi_axes": [2.0, 1.0], "flux": 6.283185307179586},
  "levels": {"list": [-1.6, -1.1, -0.6, -0.35, -0.1]},
  "curve": {"n_nodes": 512, "bracket": [0.5, 200.0]}
}"#,
    );
    assert_eq!(run("planar", &config, &dir, &[]), 0);
    assert!(dir.join("planar.json").exists());
    let csv = std::fs::read_to_string(dir.join("planar.csv")).unwrap();
    assert!(
        csv.starts_with("level,flux,conserved,grad_product,variance_lhs,variance_rhs,turning\n")
    );
    // per-level curve exports with the 2D node columns
    let curve = std::fs::read_to_string(dir.join("curve_00.csv")).unwrap();
    assert!(curve.starts_with("theta,x,y,E,kappa,ds\n"));
}
