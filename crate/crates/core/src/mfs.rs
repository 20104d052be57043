//! Method of fundamental solutions: approximate harmonic fields for smooth
//! convex boundaries beyond the closed-form catalog.
//!
//! Point sources are placed on a shrunken (exterior problem) or inflated
//! (cavity problem) copy of the boundary; their strengths solve an
//! overdetermined collocation system by column-scaled SVD least squares.
//! The fitted field is a [`ChargeEnsemble`], hence exactly harmonic away
//! from its sources: every geometric identity downstream applies unchanged,
//! only the boundary condition carries the fit error.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{ChargeEnsemble, Field, PointCharge};

/// A smooth convex boundary with a star-shaped radial description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexShape {
    #[serde(flatten)]
    pub kind: ShapeKind,
    /// Translation of the shape; the potential's singular point stays at the
    /// coordinate origin.
    #[serde(default = "zero_center")]
    pub center: [f64; 3],
}

fn zero_center() -> [f64; 3] {
    [0.0; 3]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Ellipsoid {
        semi_axes: [f64; 3],
    },
    /// `|x/a|^p + |y/b|^p + |z/c|^p = 1` with `p >= 2` (convex, C²).
    Superellipsoid {
        semi_axes: [f64; 3],
        exponent: f64,
    },
}

impl ConvexShape {
    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::validated(
            ShapeKind::Ellipsoid {
                semi_axes: [a, b, c],
            },
            [0.0; 3],
        )
    }

    pub fn superellipsoid(a: f64, b: f64, c: f64, p: f64) -> Result<Self> {
        Self::validated(
            ShapeKind::Superellipsoid {
                semi_axes: [a, b, c],
                exponent: p,
            },
            [0.0; 3],
        )
    }

    pub fn with_center(mut self, center: Vector3<f64>) -> Self {
        self.center = [center.x, center.y, center.z];
        self
    }

    pub fn validated(kind: ShapeKind, center: [f64; 3]) -> Result<Self> {
        let (axes, exponent) = match kind {
            ShapeKind::Ellipsoid { semi_axes } => (semi_axes, 2.0),
            ShapeKind::Superellipsoid {
                semi_axes,
                exponent,
            } => (semi_axes, exponent),
        };
        if axes.iter().any(|&a| a <= 0.0) {
            return Err(Error::Geometry("shape semi-axes must be positive".into()));
        }
        if exponent < 2.0 {
            return Err(Error::Geometry(
                "superellipsoid exponent must be >= 2 for convexity".into(),
            ));
        }
        Ok(Self { kind, center })
    }

    pub fn center_vec(&self) -> Vector3<f64> {
        Vector3::from(self.center)
    }

    /// Boundary radius along the unit direction `dir` from the shape center.
    pub fn radius(&self, dir: Vector3<f64>) -> f64 {
        match self.kind {
            ShapeKind::Ellipsoid { semi_axes } => {
                let s = (dir.x / semi_axes[0]).powi(2)
                    + (dir.y / semi_axes[1]).powi(2)
                    + (dir.z / semi_axes[2]).powi(2);
                1.0 / s.sqrt()
            }
            ShapeKind::Superellipsoid {
                semi_axes,
                exponent,
            } => {
                let s = (dir.x / semi_axes[0]).abs().powf(exponent)
                    + (dir.y / semi_axes[1]).abs().powf(exponent)
                    + (dir.z / semi_axes[2]).abs().powf(exponent);
                s.powf(-1.0 / exponent)
            }
        }
    }

    /// Boundary point along `dir`.
    pub fn boundary_point(&self, dir: Vector3<f64>) -> Vector3<f64> {
        self.center_vec() + self.radius(dir) * dir
    }

    /// Outward unit normal at the boundary point along `dir`.
    pub fn outward_normal(&self, dir: Vector3<f64>) -> Vector3<f64> {
        let p = self.boundary_point(dir) - self.center_vec();
        let grad = match self.kind {
            ShapeKind::Ellipsoid { semi_axes } => Vector3::new(
                2.0 * p.x / (semi_axes[0] * semi_axes[0]),
                2.0 * p.y / (semi_axes[1] * semi_axes[1]),
                2.0 * p.z / (semi_axes[2] * semi_axes[2]),
            ),
            ShapeKind::Superellipsoid {
                semi_axes,
                exponent,
            } => {
                let component =
                    |v: f64, a: f64| exponent * (v / a).abs().powf(exponent - 1.0) * v.signum() / a;
                Vector3::new(
                    component(p.x, semi_axes[0]),
                    component(p.y, semi_axes[1]),
                    component(p.z, semi_axes[2]),
                )
            }
        };
        grad.normalize()
    }

    /// Evenly distributed boundary nodes from the Fibonacci sphere mapping.
    pub fn fibonacci_nodes(&self, n: usize) -> Vec<Vector3<f64>> {
        fibonacci_directions(n)
            .into_iter()
            .map(|dir| self.boundary_point(dir))
            .collect()
    }
}

/// Deterministic, nearly uniform unit directions.
pub fn fibonacci_directions(n: usize) -> Vec<Vector3<f64>> {
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let radial = (1.0 - z * z).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (k as f64 / golden).fract();
            Vector3::new(radial * phi.cos(), radial * phi.sin(), z)
        })
        .collect()
}

/// Quality summary of one least-squares fit, measured on a fresh random
/// check set (never the collocation nodes).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitReport {
    /// Worst deviation of the fitted potential from its boundary condition.
    pub boundary_residual_max: f64,
    pub boundary_residual_rms: f64,
    /// `σ_max/σ_min` of the column-scaled collocation matrix.
    pub condition_estimate: f64,
    pub n_sources: usize,
    pub n_collocation: usize,
    pub n_check: usize,
    pub seed: u64,
}

/// Tunables of one fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_sources: usize,
    pub n_collocation: usize,
    /// Source-depth factor: sources sit on `inflation × boundary` about the
    /// shape center; `< 1` for exterior fits, `> 1` for cavity fits.
    pub inflation: f64,
    pub n_check: usize,
    pub seed: u64,
    pub residual_cap: f64,
    pub condition_cap: f64,
}

impl FitOptions {
    pub fn exterior() -> Self {
        Self {
            n_sources: 256,
            n_collocation: 1024,
            inflation: 0.6,
            n_check: 10_000,
            seed: 0,
            residual_cap: 1e-5,
            condition_cap: 1e14,
        }
    }

    pub fn cavity() -> Self {
        Self {
            inflation: 1.7,
            ..Self::exterior()
        }
    }
}

/// Fit the exterior Dirichlet field of `shape` carrying total flux `flux`.
///
/// Sources on the shrunken boundary copy solve `U = 1` on the collocation
/// nodes; the ensemble is then rescaled so its net charge equals `flux`.
pub fn solve_exterior(
    shape: &ConvexShape,
    flux: f64,
    options: &FitOptions,
) -> Result<(ChargeEnsemble, FitReport)> {
    if !(options.inflation > 0.0 && options.inflation < 1.0) {
        return Err(Error::InvalidConfig(
            "exterior fit needs inflation in (0, 1)".into(),
        ));
    }
    validate_counts(options)?;
    let sources = placed_copies(shape, options.n_sources, options.inflation);
    let collocation = shape.fibonacci_nodes(options.n_collocation);
    let target = DVector::from_element(options.n_collocation, 1.0);

    let (strengths, condition_estimate) =
        scaled_least_squares(&collocation, &sources, &target, options.condition_cap)?;

    let mut ensemble = ChargeEnsemble::new(
        sources
            .iter()
            .zip(strengths.iter())
            .map(|(&p, &q)| PointCharge::new(p, q))
            .collect(),
    );

    // residual of the normalized problem (U = 1) on a fresh check set
    let check = random_boundary_points(shape, options.n_check, options.seed);
    let (boundary_residual_max, boundary_residual_rms) =
        boundary_residual(&ensemble, &check, |_| 1.0)?;
    if boundary_residual_max > options.residual_cap {
        return Err(Error::ResidualTooLarge {
            max: boundary_residual_max,
            cap: options.residual_cap,
        });
    }

    ensemble.rescale_flux(flux)?;
    Ok((
        ensemble,
        FitReport {
            boundary_residual_max,
            boundary_residual_rms,
            condition_estimate,
            n_sources: options.n_sources,
            n_collocation: options.n_collocation,
            n_check: options.n_check,
            seed: options.seed,
        },
    ))
}

/// Fit the cavity Green's function of `shape`: a fixed unit charge at the
/// origin plus exterior correction sources solving `G = 0` on the boundary.
pub fn solve_cavity(
    shape: &ConvexShape,
    options: &FitOptions,
) -> Result<(ChargeEnsemble, FitReport)> {
    if options.inflation <= 1.0 {
        return Err(Error::InvalidConfig(
            "cavity fit needs inflation > 1 (sources outside the shape)".into(),
        ));
    }
    validate_counts(options)?;
    // the origin must lie strictly inside the cavity
    let offset = -shape.center_vec();
    let inside_margin = if offset.norm() == 0.0 {
        1.0
    } else {
        1.0 - offset.norm() / shape.radius(offset.normalize())
    };
    if inside_margin <= 1e-6 {
        return Err(Error::OriginOutside);
    }

    let sources = placed_copies(shape, options.n_sources, options.inflation);
    let collocation = shape.fibonacci_nodes(options.n_collocation);
    let monopole = ChargeEnsemble::monopole(Vector3::zeros(), 1.0);
    let mut target = DVector::zeros(options.n_collocation);
    for (i, &x) in collocation.iter().enumerate() {
        target[i] = -monopole.jet(x)?.value;
    }

    let (strengths, condition_estimate) =
        scaled_least_squares(&collocation, &sources, &target, options.condition_cap)?;

    let mut charges = vec![PointCharge::new(Vector3::zeros(), 1.0)];
    charges.extend(
        sources
            .iter()
            .zip(strengths.iter())
            .map(|(&p, &q)| PointCharge::new(p, q)),
    );
    let ensemble = ChargeEnsemble::new(charges);

    let check = random_boundary_points(shape, options.n_check, options.seed);
    let (boundary_residual_max, boundary_residual_rms) =
        boundary_residual(&ensemble, &check, |_| 0.0)?;
    if boundary_residual_max > options.residual_cap {
        return Err(Error::ResidualTooLarge {
            max: boundary_residual_max,
            cap: options.residual_cap,
        });
    }

    Ok((
        ensemble,
        FitReport {
            boundary_residual_max,
            boundary_residual_rms,
            condition_estimate,
            n_sources: options.n_sources,
            n_collocation: options.n_collocation,
            n_check: options.n_check,
            seed: options.seed,
        },
    ))
}

fn validate_counts(options: &FitOptions) -> Result<()> {
    if options.n_sources == 0 {
        return Err(Error::InvalidConfig("fit needs at least one source".into()));
    }
    if options.n_collocation < 2 * options.n_sources {
        return Err(Error::InvalidConfig(format!(
            "collocation count {} must be at least twice the source count {}",
            options.n_collocation, options.n_sources
        )));
    }
    Ok(())
}

fn placed_copies(shape: &ConvexShape, n: usize, inflation: f64) -> Vec<Vector3<f64>> {
    let center = shape.center_vec();
    shape
        .fibonacci_nodes(n)
        .into_iter()
        .map(|p| center + inflation * (p - center))
        .collect()
}

/// Column-scaled SVD least squares for the collocation system
/// `Σ_j q_j / (4π|x_i - s_j|) = b_i`.
fn scaled_least_squares(
    collocation: &[Vector3<f64>],
    sources: &[Vector3<f64>],
    target: &DVector<f64>,
    condition_cap: f64,
) -> Result<(Vec<f64>, f64)> {
    let rows = collocation.len();
    let cols = sources.len();
    let four_pi = 4.0 * std::f64::consts::PI;
    let entries: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|flat| {
            let i = flat % rows; // column-major order of DMatrix
            let j = flat / rows;
            1.0 / (four_pi * (collocation[i] - sources[j]).norm())
        })
        .collect();
    let mut a = DMatrix::from_vec(rows, cols, entries);

    let mut scales = vec![0.0; cols];
    #[allow(clippy::needless_range_loop)] // j indexes both the matrix and the scales
    for j in 0..cols {
        let norm = a.column(j).norm();
        scales[j] = norm;
        if norm > 0.0 {
            a.column_mut(j).scale_mut(1.0 / norm);
        }
    }

    let svd = a.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    let condition = sigma_max / sigma_min;
    if !condition.is_finite() || condition > condition_cap {
        return Err(Error::IllConditioned {
            estimate: condition,
            cap: condition_cap,
        });
    }
    let solution = svd
        .solve(target, 0.0)
        .map_err(|e| Error::Geometry(format!("SVD solve failed: {e}")))?;
    Ok((
        solution.iter().zip(&scales).map(|(y, s)| y / s).collect(),
        condition,
    ))
}

/// Uniform random boundary points from a seeded generator.
pub fn random_boundary_points(shape: &ConvexShape, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let norm = v.norm();
        if !(1e-3..=1.0).contains(&norm) {
            continue;
        }
        points.push(shape.boundary_point(v / norm));
    }
    points
}

fn boundary_residual(
    field: &ChargeEnsemble,
    check: &[Vector3<f64>],
    expected: impl Fn(Vector3<f64>) -> f64 + Sync,
) -> Result<(f64, f64)> {
    let deviations: Vec<f64> = check
        .par_iter()
        .map(|&x| field.jet(x).map(|j| (j.value - expected(x)).abs()))
        .collect::<Result<_>>()?;
    let max = deviations.iter().cloned().fold(0.0, f64::max);
    let rms = (deviations.iter().map(|d| d * d).sum::<f64>() / deviations.len() as f64).sqrt();
    Ok((max, rms))
}

#[cfg(test)]
pub(crate) fn random_in_ball<R: Rng>(rng: &mut R, radius: f64) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm() <= 1.0 {
            return v * radius;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{level_report, sweep};
    use crate::levelset::{sample_surface, GridSpec};
    use approx::assert_relative_eq;

    #[test]
    fn shape_radius_and_normal_are_consistent() {
        let shape = ConvexShape::ellipsoid(1.0, 0.8, 0.7).unwrap();
        for dir in fibonacci_directions(50) {
            let p = shape.boundary_point(dir);
            let implicit = (p.x / 1.0).powi(2) + (p.y / 0.8).powi(2) + (p.z / 0.7).powi(2);
            assert_relative_eq!(implicit, 1.0, epsilon = 1e-12);
            // normal must point outward: positive component along the radius
            assert!(shape.outward_normal(dir).dot(&dir) > 0.0);
        }
        let se = ConvexShape::superellipsoid(1.0, 0.9, 0.8, 4.0).unwrap();
        for dir in fibonacci_directions(20) {
            let p = se.boundary_point(dir);
            let implicit = (p.x / 1.0).abs().powf(4.0)
                + (p.y / 0.9).abs().powf(4.0)
                + (p.z / 0.8).abs().powf(4.0);
            assert_relative_eq!(implicit, 1.0, epsilon = 1e-12);
        }
        assert!(ConvexShape::superellipsoid(1.0, 1.0, 1.0, 1.5).is_err());
        assert!(ConvexShape::ellipsoid(1.0, -0.2, 0.5).is_err());
    }

    #[test]
    fn collocation_must_dominate_sources() {
        let shape = ConvexShape::ellipsoid(1.0, 1.0, 1.0).unwrap();
        let options = FitOptions {
            n_sources: 64,
            n_collocation: 100,
            ..FitOptions::exterior()
        };
        assert!(matches!(
            solve_exterior(&shape, 1.0, &options).unwrap_err(),
            Error::InvalidConfig(_)
        ));
    }

    #[test]
    fn sphere_fit_collapses_to_a_monopole() {
        // deep sources: 64 charges resolve harmonics up to degree 7 exactly,
        // leaving a residual of order inflation^8
        let shape = ConvexShape::ellipsoid(1.0, 1.0, 1.0).unwrap();
        let options = FitOptions {
            n_sources: 64,
            n_collocation: 256,
            inflation: 0.04,
            ..FitOptions::exterior()
        };
        let (field, report) = solve_exterior(&shape, 4.0 * std::f64::consts::PI, &options).unwrap();
        assert!(
            report.boundary_residual_max <= 1e-12,
            "sphere residual {:.3e}",
            report.boundary_residual_max
        );
        assert_relative_eq!(
            field.total_flux(),
            4.0 * std::f64::consts::PI,
            epsilon = 1e-12
        );
        // any level of the fitted field behaves like a monopole sphere
        let spec = GridSpec::new(16, 32, Vector3::zeros(), (1.05, 100.0));
        let grid = sample_surface(&field, 0.25, &spec).unwrap();
        let report = level_report(&grid).unwrap();
        assert!(report.w_value.abs() <= 1e-10, "W = {:.3e}", report.w_value);
    }

    #[test]
    fn ellipsoid_fit_reaches_the_target_residual() {
        // boundary error decays like exp(-c sqrt(n_sources)); this density
        // is what the 1e-6 target costs on a fresh 10^4-point check set
        let shape = ConvexShape::ellipsoid(1.0, 0.8, 0.7).unwrap();
        let options = FitOptions {
            n_sources: 1280,
            n_collocation: 5120,
            inflation: 0.7,
            ..FitOptions::exterior()
        };
        let (field, report) = solve_exterior(&shape, 4.0 * std::f64::consts::PI, &options).unwrap();
        assert!(
            report.boundary_residual_max <= 1e-6,
            "ellipsoid residual {:.3e}",
            report.boundary_residual_max
        );
        assert!(report.condition_estimate < 1e14);
        assert_relative_eq!(
            field.total_flux(),
            4.0 * std::f64::consts::PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn default_density_trips_the_residual_cap_on_the_ellipsoid() {
        // at the documented default density the fit is honest about not
        // reaching the cap instead of silently degrading
        let shape = ConvexShape::ellipsoid(1.0, 0.8, 0.7).unwrap();
        assert!(matches!(
            solve_exterior(&shape, 1.0, &FitOptions::exterior()).unwrap_err(),
            Error::ResidualTooLarge { .. }
        ));
    }

    #[test]
    fn doubling_sources_gains_an_order_of_magnitude() {
        let shape = ConvexShape::ellipsoid(1.0, 0.8, 0.7).unwrap();
        let run = |n: usize| {
            let options = FitOptions {
                n_sources: n,
                n_collocation: 4 * n,
                inflation: 0.7,
                n_check: 2000,
                residual_cap: 1.0,
                ..FitOptions::exterior()
            };
            solve_exterior(&shape, 1.0, &options)
                .unwrap()
                .1
                .boundary_residual_max
        };
        let coarse = run(256);
        let fine = run(512);
        assert!(
            fine * 10.0 <= coarse,
            "refinement: {coarse:.3e} -> {fine:.3e}"
        );
    }

    #[test]
    fn ellipsoid_sweep_respects_the_exterior_inequality() {
        // the fitted field is exactly harmonic, so its own level surfaces
        // satisfy the exterior inequality regardless of boundary-fit error;
        // a moderate fit suffices here
        let shape = ConvexShape::ellipsoid(1.0, 0.8, 0.7).unwrap();
        let options = FitOptions {
            n_sources: 512,
            n_collocation: 2048,
            inflation: 0.7,
            n_check: 2000,
            residual_cap: 1e-3,
            ..FitOptions::exterior()
        };
        let (field, _) = solve_exterior(&shape, 4.0 * std::f64::consts::PI, &options).unwrap();
        let spec = GridSpec::new(16, 32, Vector3::zeros(), (1.05, 100.0));
        let levels = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
        let report = sweep(&field, &levels, &spec).unwrap();
        assert!(report.all_convex);
        for r in &report.reports {
            assert!(r.f_value >= -1e-8, "F = {:.3e}", r.f_value);
        }
        assert!(report.monotone);
        // the fitted field is a genuine harmonic field, so the conservation
        // and closed-form identity checks hold at full precision
        assert!(report.gauss_bonnet_deviation() <= 1e-5);
        assert!(report.flux_spread() <= 1e-7);
        for residuals in &report.closed_form_residuals {
            assert!(residuals.normal_log_e_max <= 1e-10);
            assert!(residuals.laplacian_log_e_max <= 1e-10);
        }
    }

    #[test]
    fn centered_cavity_fit_matches_the_monopole_field() {
        let shape = ConvexShape::ellipsoid(1.0, 1.0, 1.0).unwrap();
        let options = FitOptions {
            n_sources: 128,
            n_collocation: 512,
            inflation: 8.0,
            n_check: 2000,
            ..FitOptions::cavity()
        };
        let (field, report) = solve_cavity(&shape, &options).unwrap();
        assert!(report.boundary_residual_max <= 1e-10);
        // against the image construction (bare monopole), comparing
        // gradients and value differences: the boundary constant -1/(4π) is
        // carried by the fit but dropped by the image convention
        let oracle = ChargeEnsemble::cavity_green(Vector3::zeros(), 1.0).unwrap();
        let reference = Vector3::new(0.3, 0.1, -0.2);
        let offset = field.jet(reference).unwrap().value - oracle.jet(reference).unwrap().value;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let r = random_in_ball(&mut rng, 0.9);
            if r.norm() < 0.05 {
                continue;
            }
            let fit = field.jet(r).unwrap();
            let exact = oracle.jet(r).unwrap();
            assert!(
                ((fit.value - exact.value) - offset).abs() <= 1e-10,
                "value difference drift"
            );
            assert!((fit.gradient - exact.gradient).norm() <= 1e-10);
        }
    }

    #[test]
    fn offset_cavity_fit_matches_the_image_charge_field() {
        let center = Vector3::new(0.0, 0.0, 0.3);
        let shape = ConvexShape::ellipsoid(1.0, 1.0, 1.0)
            .unwrap()
            .with_center(center);
        let options = FitOptions {
            n_sources: 256,
            n_collocation: 1024,
            inflation: 4.0,
            n_check: 2000,
            ..FitOptions::cavity()
        };
        let (field, report) = solve_cavity(&shape, &options).unwrap();
        assert!(report.boundary_residual_max <= 1e-8);
        let oracle = ChargeEnsemble::cavity_green(center, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let r = center + random_in_ball(&mut rng, 0.9);
            if r.norm() < 0.05 {
                continue;
            }
            let fit = field.jet(r).unwrap();
            let exact = oracle.jet(r).unwrap();
            assert!(
                (fit.value - exact.value).abs() <= 1e-8,
                "G mismatch {:.3e} at {r:?}",
                (fit.value - exact.value).abs()
            );
        }
    }

    #[test]
    fn ellipsoid_cavity_sweep_respects_the_interior_inequality() {
        let shape = ConvexShape::ellipsoid(1.0, 0.9, 0.8).unwrap();
        let options = FitOptions {
            n_sources: 256,
            n_collocation: 1024,
            inflation: 2.5,
            n_check: 2000,
            ..FitOptions::cavity()
        };
        let (field, _) = solve_cavity(&shape, &options).unwrap();
        let spec = GridSpec::new(16, 32, Vector3::zeros(), (1e-3, 0.7));
        for level in [0.1, 0.2, 0.4] {
            let grid = sample_surface(&field, level, &spec).unwrap();
            assert!(grid.is_convex());
            let report = level_report(&grid).unwrap();
            assert!(report.w_value <= 1e-10, "cavity W = {:.3e}", report.w_value);
        }
    }

    #[test]
    fn superellipsoid_fit_records_convexity_margins() {
        // p = 4 flattens the boundary; the fit must still converge and the
        // sampled levels report their convexity margins rather than assume
        // them
        let shape = ConvexShape::superellipsoid(1.0, 0.9, 0.8, 4.0).unwrap();
        let options = FitOptions {
            n_sources: 512,
            n_collocation: 2048,
            inflation: 0.8,
            n_check: 2000,
            residual_cap: 5e-2,
            ..FitOptions::exterior()
        };
        let (field, report) =
            solve_exterior(&shape, 4.0 * std::f64::consts::PI, &options).unwrap();
        // the flattened geometry converges markedly slower than the
        // ellipsoid; the fitted field is still exactly harmonic, which is
        // all the level geometry below needs
        assert!(
            report.boundary_residual_max <= 1e-2,
            "superellipsoid residual {:.3e}",
            report.boundary_residual_max
        );
        let spec = GridSpec::new(16, 32, Vector3::zeros(), (1.05, 100.0));
        for level in [0.1, 0.3] {
            let grid = sample_surface(&field, level, &spec).unwrap();
            let lr = level_report(&grid).unwrap();
            assert!(lr.max_mean_curvature.is_finite());
            assert!(lr.min_gauss_curvature.is_finite());
            // levels away from the boundary relax toward spheres
            assert!(lr.convex, "level {level} margins: H {:.3e}, K {:.3e}",
                lr.max_mean_curvature, lr.min_gauss_curvature);
            assert!(lr.f_value >= -1e-8);
        }
    }

    #[test]
    fn origin_outside_is_rejected() {
        let shape = ConvexShape::ellipsoid(0.5, 0.5, 0.5)
            .unwrap()
            .with_center(Vector3::new(1.0, 0.0, 0.0));
        assert!(matches!(
            solve_cavity(&shape, &FitOptions::cavity()).unwrap_err(),
            Error::OriginOutside
        ));
    }

    #[test]
    fn condition_cap_is_enforced() {
        let shape = ConvexShape::ellipsoid(1.0, 0.8, 0.7).unwrap();
        let options = FitOptions {
            n_sources: 32,
            n_collocation: 128,
            n_check: 100,
            condition_cap: 10.0,
            ..FitOptions::exterior()
        };
        assert!(matches!(
            solve_exterior(&shape, 1.0, &options).unwrap_err(),
            Error::IllConditioned { .. }
        ));
    }

    #[test]
    fn fits_are_deterministic_for_a_fixed_seed() {
        let shape = ConvexShape::ellipsoid(1.0, 0.8, 0.7).unwrap();
        let options = FitOptions {
            n_sources: 32,
            n_collocation: 128,
            n_check: 500,
            residual_cap: 1.0,
            ..FitOptions::exterior()
        };
        let (a, ra) = solve_exterior(&shape, 1.0, &options).unwrap();
        let (b, rb) = solve_exterior(&shape, 1.0, &options).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.boundary_residual_max, rb.boundary_residual_max);
    }
}
