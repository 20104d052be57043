//! The six subcommands: thin orchestration of the library operations plus
//! report writing and the exit-code contract.
//!
//! Exit codes: 0 all assertions pass; 1 tolerance/assertion failure;
//! 2 configuration error; 3 field or fit construction error; 4 a sweep level
//! is non-convex (assertions suppressed, reports still written).

use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use eqlab_core::error::Error as CoreError;
use eqlab_core::fields::Field;
use eqlab_core::functionals::{identity_suite, sweep_with_slack, IdentityReport, SweepReport};
use eqlab_core::geometry;
use eqlab_core::levelset::{flow_trace_with_tolerance, radial_solve, sample_surface, GridSpec};
use eqlab_core::mfs::{solve_cavity, solve_exterior, FitReport};
use eqlab_core::planar::{planar_sweep, sample_curve, PlanarSweepReport};

use crate::config::{MfsProblem, ProblemKind, RunConfig};
use crate::logging::{log_debug, log_error, log_info};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TOLERANCE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;
pub const EXIT_NONCONVEX: i32 = 4;

/// Unit and sign conventions, stated in every report header.
pub const CONVENTIONS: &str = "point-charge potentials carry 1/(4*pi); multipole \
    coefficients absorb it (U = c00/r + ...); cavity Green's functions fix a unit \
    source at the origin, so level-surface flux is 1; outward normals give spheres \
    H = -1/R";

const RANDOM_POINTS: usize = 1000;

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    conventions: &'a str,
    config: &'a RunConfig,
    pass: bool,
    failures: &'a [String],
    #[serde(flatten)]
    payload: T,
}

fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<(), i32> {
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        log_error!("cannot create output directory {}: {e}", out_dir.display());
        return Err(EXIT_CONFIG);
    }
    let path = out_dir.join(name);
    if let Err(e) = std::fs::write(&path, contents) {
        log_error!("cannot write {}: {e}", path.display());
        return Err(EXIT_CONFIG);
    }
    log_debug!("wrote {}", path.display());
    Ok(())
}

fn write_report<T: Serialize>(
    out_dir: &Path,
    name: &str,
    command: &str,
    config: &RunConfig,
    pass: bool,
    failures: &[String],
    payload: T,
) -> Result<(), i32> {
    let report = Report {
        command,
        seed: config.seed,
        conventions: CONVENTIONS,
        config,
        pass,
        failures,
        payload,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(out_dir, name, &json)
}

fn config_error(message: &str) -> i32 {
    log_error!("configuration: {message}");
    EXIT_CONFIG
}

fn construction_error(err: &CoreError) -> i32 {
    log_error!("{err}");
    match err {
        CoreError::InvalidConfig(_) => EXIT_CONFIG,
        _ => EXIT_CONSTRUCTION,
    }
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, i32> {
    section
        .as_ref()
        .ok_or_else(|| config_error(&format!("missing required section '{name}'")))
}

struct FieldSetup {
    field: Box<dyn Field>,
    levels: Vec<f64>,
    spec: GridSpec,
}

fn field_setup(config: &RunConfig) -> Result<FieldSetup, i32> {
    let field_config = require(&config.field, "field")?;
    let levels_config = require(&config.levels, "levels")?;
    let grid = require(&config.grid, "grid")?;
    let levels = levels_config
        .resolve_positive()
        .map_err(|e| config_error(&e))?;
    let spec = grid.to_spec();
    if let Err(e) = spec.validate() {
        return Err(config_error(&e.to_string()));
    }
    let field = field_config.build().map_err(|e| construction_error(&e))?;
    Ok(FieldSetup {
        field,
        levels,
        spec,
    })
}

// ---------------------------------------------------------------- identities

#[derive(Serialize)]
struct RandomPointResiduals {
    count: usize,
    normal_log_e_max: f64,
    laplacian_log_e_max: f64,
}

#[derive(Serialize)]
struct IdentitiesPayload {
    random_points: RandomPointResiduals,
    levels: Vec<IdentityReport>,
}

pub fn cmd_identities(config: &RunConfig, out_dir: &Path) -> i32 {
    let setup = match field_setup(config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let field = setup.field.as_ref();
    let tol = &config.tolerances;

    // closed-form residuals at seeded random points on random levels
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = (setup.levels[0], *setup.levels.last().unwrap());
    let mut worst_a: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    let mut sampled = 0;
    let mut attempts = 0;
    while sampled < RANDOM_POINTS {
        attempts += 1;
        if attempts > 20 * RANDOM_POINTS {
            log_error!("random surface sampling keeps leaving the bracket");
            return EXIT_CONSTRUCTION;
        }
        let dir = random_unit(&mut rng);
        let level = rng.random_range(lo..=hi);
        let root = match radial_solve(field, level, dir, &setup.spec) {
            Ok(root) => root,
            Err(CoreError::Bracket { .. }) => continue,
            Err(e) => return construction_error(&e),
        };
        let position = setup.spec.center + root.radius * dir;
        let jet = match field.jet(position) {
            Ok(jet) => jet,
            Err(e) => return construction_error(&e),
        };
        let frame = match geometry::frame(position, &jet) {
            Ok(frame) => frame,
            Err(e) => return construction_error(&e),
        };
        worst_a = worst_a.max(geometry::normal_log_e_residual(&frame, &jet));
        match geometry::laplacian_log_e(&jet) {
            Ok(lap) => worst_b = worst_b.max((lap + 2.0 * frame.gauss_curvature).abs()),
            Err(e) => return construction_error(&e),
        }
        sampled += 1;
    }

    // full suite per level
    let options = config.identity_options.unwrap_or_default();
    let mut reports = Vec::new();
    for &level in &setup.levels {
        let grid = match sample_surface(field, level, &setup.spec) {
            Ok(grid) => grid,
            Err(e) => return construction_error(&e),
        };
        match identity_suite(field, &grid, options) {
            Ok(report) => reports.push(report),
            Err(e) => return construction_error(&e),
        }
    }

    let mut failures = Vec::new();
    let mut check = |name: &str, value: f64, cap: f64| {
        if value > cap {
            failures.push(format!("{name}: {value:.3e} > {cap:.3e}"));
        }
    };
    check("random-point n·∇logE-2H", worst_a, tol.identity_a);
    check("random-point ΔlogE+2K", worst_b, tol.identity_b);
    for report in &reports {
        let level = report.level;
        check(
            &format!("level {level} (a)"),
            report.normal_log_e.max,
            tol.identity_a,
        );
        check(
            &format!("level {level} (b)"),
            report.laplacian_log_e.max,
            tol.identity_b,
        );
        check(
            &format!("level {level} (c)"),
            report.laplacian_normal.map_or(0.0, |s| s.max),
            tol.identity_c,
        );
        check(
            &format!("level {level} (d)"),
            report.weatherburn.map_or(0.0, |s| s.max),
            tol.identity_d,
        );
        check(
            &format!("level {level} (e)"),
            report.mean_curvature_evolution.map_or(0.0, |s| s.max),
            tol.identity_e,
        );
        check(
            &format!("level {level} (f)"),
            report.laplacian_normal_over_e.map_or(0.0, |s| s.max),
            tol.identity_f,
        );
    }

    let pass = failures.is_empty();
    let payload = IdentitiesPayload {
        random_points: RandomPointResiduals {
            count: RANDOM_POINTS,
            normal_log_e_max: worst_a,
            laplacian_log_e_max: worst_b,
        },
        levels: reports,
    };
    if let Err(code) = write_report(
        out_dir,
        "identities.json",
        "identities",
        config,
        pass,
        &failures,
        payload,
    ) {
        return code;
    }
    finish("identities", pass, &failures)
}

// --------------------------------------------------------------------- sweep

#[derive(Serialize)]
struct SweepPayload {
    kind: ProblemKind,
    report: SweepReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<FitReport>,
}

pub fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> i32 {
    let setup = match field_setup(config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let report = match sweep_with_slack(
        setup.field.as_ref(),
        &setup.levels,
        &setup.spec,
        config.tolerances.monotone_slack,
    ) {
        Ok(report) => report,
        Err(e) => return construction_error(&e),
    };
    write_sweep_outputs(config, out_dir, report, None)
}

fn write_sweep_outputs(
    config: &RunConfig,
    out_dir: &Path,
    report: SweepReport,
    fit: Option<FitReport>,
) -> i32 {
    let kind = config.problem_kind();
    let (pass, failures) = sweep_assertions(&report, kind, &config.tolerances);
    if let Err(code) = write_file(out_dir, "sweep.csv", &report.to_csv()) {
        return code;
    }
    let all_convex = report.all_convex;
    let payload = SweepPayload { kind, report, fit };
    if let Err(code) = write_report(
        out_dir,
        "sweep.json",
        "sweep",
        config,
        pass,
        &failures,
        payload,
    ) {
        return code;
    }
    if !all_convex {
        log_error!("non-convex level encountered; sign assertions suppressed");
        return EXIT_NONCONVEX;
    }
    finish("sweep", pass, &failures)
}

fn sweep_assertions(
    report: &SweepReport,
    kind: ProblemKind,
    tol: &crate::config::Tolerances,
) -> (bool, Vec<String>) {
    let mut failures = Vec::new();
    if !report.all_convex {
        // suppressed: the caller maps this to exit code 4
        return (false, vec!["non-convex level".into()]);
    }
    for r in &report.reports {
        match kind {
            ProblemKind::Exterior => {
                if r.f_value < -tol.sign {
                    failures.push(format!("F({}) = {:.3e} < 0", r.level, r.f_value));
                }
            }
            ProblemKind::Interior => {
                if r.f_value > tol.sign {
                    failures.push(format!("F({}) = {:.3e} > 0", r.level, r.f_value));
                }
                if r.beta_integral > tol.sign {
                    failures.push(format!("beta({}) = {:.3e} > 0", r.level, r.beta_integral));
                }
            }
        }
    }
    if !report.monotone {
        failures.push("W not nondecreasing across levels".into());
    }
    (failures.is_empty(), failures)
}

// --------------------------------------------------------------- asymptotics

#[derive(Serialize)]
struct AsymptoticsPayload {
    slope: Option<f64>,
    slope_window: (f64, f64),
    identically_zero: bool,
    levels: Vec<f64>,
    w_values: Vec<f64>,
}

pub fn cmd_asymptotics(config: &RunConfig, out_dir: &Path) -> i32 {
    if config.problem_kind() != ProblemKind::Exterior {
        return config_error("asymptotics requires an exterior field");
    }
    let setup = match field_setup(config) {
        Ok(s) => s,
        Err(code) => return code,
    };
    if setup.levels.len() < 6 {
        return config_error("asymptotics needs at least 6 levels");
    }
    let decades = (setup.levels.last().unwrap() / setup.levels[0]).log10();
    if decades < 1.5 {
        return config_error(&format!(
            "levels span only {decades:.2} decades; at least 1.5 required"
        ));
    }
    let report = match sweep_with_slack(
        setup.field.as_ref(),
        &setup.levels,
        &setup.spec,
        config.tolerances.monotone_slack,
    ) {
        Ok(report) => report,
        Err(e) => return construction_error(&e),
    };

    let w_values: Vec<f64> = report.reports.iter().map(|r| r.w_value).collect();
    let identically_zero = w_values.iter().all(|w| w.abs() <= 1e-12);
    let slope = if identically_zero {
        log_info!("W vanishes identically; slope undefined");
        None
    } else {
        report.w_decay_slope()
    };
    let window = (1.9, 2.1);
    let mut failures = Vec::new();
    if !identically_zero {
        match slope {
            Some(s) if s >= window.0 && s <= window.1 => {}
            Some(s) => failures.push(format!("slope {s:.4} outside [{}, {}]", window.0, window.1)),
            None => failures.push("W changes sign; slope undefined".into()),
        }
    }
    let pass = failures.is_empty();
    let payload = AsymptoticsPayload {
        slope,
        slope_window: window,
        identically_zero,
        levels: report.levels.clone(),
        w_values,
    };
    if let Err(code) = write_report(
        out_dir,
        "asymptotics.json",
        "asymptotics",
        config,
        pass,
        &failures,
        payload,
    ) {
        return code;
    }
    finish("asymptotics", pass, &failures)
}

// ---------------------------------------------------------------------- flow

#[derive(Serialize)]
struct FlowPayload {
    start_level: f64,
    target_level: f64,
    steps: usize,
    terminal_defect: f64,
    max_sample_defect: f64,
    end_position: [f64; 3],
}

pub fn cmd_flow(config: &RunConfig, out_dir: &Path) -> i32 {
    let field_config = match require(&config.field, "field") {
        Ok(c) => c,
        Err(code) => return code,
    };
    let flow = match require(&config.flow, "flow") {
        Ok(f) => f,
        Err(code) => return code,
    };
    let field = match field_config.build() {
        Ok(f) => f,
        Err(e) => return construction_error(&e),
    };
    let trace = match flow_trace_with_tolerance(
        field.as_ref(),
        Vector3::from(flow.start),
        flow.target_level,
        flow.steps,
        config.tolerances.flow_defect,
    ) {
        Ok(trace) => trace,
        Err(CoreError::NonMonotone {
            residual,
            tolerance,
        }) => {
            log_error!("flow defect {residual:.3e} exceeds {tolerance:.3e}");
            return EXIT_TOLERANCE;
        }
        Err(e) => return construction_error(&e),
    };

    let mut csv = String::from("phi,x,y,z\n");
    for (phi, p) in &trace.samples {
        csv.push_str(&format!(
            "{:.17e},{:.17e},{:.17e},{:.17e}\n",
            phi, p.x, p.y, p.z
        ));
    }
    if let Err(code) = write_file(out_dir, "flow.csv", &csv) {
        return code;
    }

    let mut failures = Vec::new();
    if trace.terminal_defect > config.tolerances.flow_defect * flow.target_level.abs().max(1.0) {
        failures.push(format!(
            "terminal defect {:.3e} above tolerance",
            trace.terminal_defect
        ));
    }
    let pass = failures.is_empty();
    let end = trace.end_position();
    let payload = FlowPayload {
        start_level: trace.start_level,
        target_level: trace.target_level,
        steps: flow.steps,
        terminal_defect: trace.terminal_defect,
        max_sample_defect: trace.max_sample_defect,
        end_position: [end.x, end.y, end.z],
    };
    if let Err(code) = write_report(
        out_dir,
        "flow.json",
        "flow",
        config,
        pass,
        &failures,
        payload,
    ) {
        return code;
    }
    finish("flow", pass, &failures)
}

// ----------------------------------------------------------------------- mfs

#[derive(Serialize)]
struct MfsPayload {
    fit: FitReport,
    n_charges: usize,
    total_flux: f64,
}

pub fn cmd_mfs(config: &RunConfig, out_dir: &Path) -> i32 {
    let shape = match require(&config.shape, "shape") {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mfs = match require(&config.mfs, "mfs") {
        Ok(m) => m,
        Err(code) => return code,
    };
    let options = mfs.fit_options(config.seed);
    let solved = match mfs.problem {
        MfsProblem::Exterior => solve_exterior(shape, mfs.flux, &options),
        MfsProblem::Cavity => solve_cavity(shape, &options),
    };
    let (field, fit) = match solved {
        Ok(pair) => pair,
        Err(e) => return construction_error(&e),
    };
    log_info!(
        "fit: residual max {:.3e}, condition {:.3e}",
        fit.boundary_residual_max,
        fit.condition_estimate
    );

    let payload = MfsPayload {
        fit,
        n_charges: field.charges.len(),
        total_flux: field.total_flux(),
    };
    if let Err(code) = write_report(out_dir, "mfs.json", "mfs", config, true, &[], payload) {
        return code;
    }

    // optional sweep of the fitted field
    if let (Some(levels_config), Some(grid)) = (&config.levels, &config.grid) {
        let levels = match levels_config.resolve_positive() {
            Ok(levels) => levels,
            Err(e) => return config_error(&e),
        };
        let spec = grid.to_spec();
        let report =
            match sweep_with_slack(&field, &levels, &spec, config.tolerances.monotone_slack) {
                Ok(report) => report,
                Err(e) => return construction_error(&e),
            };
        let mut kinded = config.clone();
        kinded.kind = Some(match mfs.problem {
            MfsProblem::Exterior => ProblemKind::Exterior,
            MfsProblem::Cavity => ProblemKind::Interior,
        });
        return write_sweep_outputs(&kinded, out_dir, report, Some(fit));
    }
    finish("mfs", true, &[])
}

// -------------------------------------------------------------------- planar

#[derive(Serialize)]
struct PlanarPayload {
    report: PlanarSweepReport,
    conserved_spread: f64,
    flux_spread: f64,
}

pub fn cmd_planar(config: &RunConfig, out_dir: &Path) -> i32 {
    let field = match require(&config.planar_field, "planar_field") {
        Ok(f) => f,
        Err(code) => return code,
    };
    let curve = match require(&config.curve, "curve") {
        Ok(c) => c,
        Err(code) => return code,
    };
    let levels_config = match require(&config.levels, "levels") {
        Ok(l) => l,
        Err(code) => return code,
    };
    // planar levels may legitimately be negative (logarithmic potentials)
    let levels = match levels_config.resolve() {
        Ok(levels) => levels,
        Err(e) => return config_error(&e),
    };
    let spec = curve.to_spec(field);

    let report = match planar_sweep(field, &levels, &spec) {
        Ok(report) => report,
        Err(e) => return construction_error(&e),
    };
    // per-level curve exports with the 2D column set
    for (i, &level) in levels.iter().enumerate() {
        let grid = match sample_curve(field, level, &spec) {
            Ok(grid) => grid,
            Err(e) => return construction_error(&e),
        };
        if let Err(code) = write_file(out_dir, &format!("curve_{i:02}.csv"), &grid.to_csv()) {
            return code;
        }
    }

    let tol = &config.tolerances;
    let mut failures = Vec::new();
    let spread = report.conserved_spread();
    if spread > tol.planar_conserved {
        failures.push(format!("conserved integral spread {spread:.3e}"));
    }
    for (lhs, rhs) in report.variance_lhs.iter().zip(&report.variance_rhs) {
        let mismatch = (lhs - rhs).abs() / rhs.abs().max(1e-300);
        if mismatch > tol.planar_variance {
            failures.push(format!("variance identity mismatch {mismatch:.3e}"));
        }
    }
    for (level, g) in levels.iter().zip(&report.grad_product) {
        if *g > tol.planar_grad_product {
            failures.push(format!("grad-product {g:.3e} > 0 at level {level}"));
        }
    }
    if let Err(code) = write_file(out_dir, "planar.csv", &report.to_csv()) {
        return code;
    }
    let pass = failures.is_empty();
    let payload = PlanarPayload {
        conserved_spread: spread,
        flux_spread: report.flux_spread(),
        report,
    };
    if let Err(code) = write_report(
        out_dir,
        "planar.json",
        "planar",
        config,
        pass,
        &failures,
        payload,
    ) {
        return code;
    }
    finish("planar", pass, &failures)
}

fn finish(command: &str, pass: bool, failures: &[String]) -> i32 {
    if pass {
        log_info!("{command}: all assertions passed");
        EXIT_OK
    } else {
        for failure in failures {
            log_error!("{command}: {failure}");
        }
        EXIT_TOLERANCE
    }
}

fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}
