//! Two-dimensional analog: equipotential curves of planar harmonic
//! potentials, their conserved integral, and the circle-rigidity integrals.
//!
//! Every field is realized through an explicit complex potential `w(z)`
//! with `U = Re w + C`, so the jet follows from `w'` and `w''`:
//! `∇U = (Re w', -Im w')` and `Hess = [[Re w'', -Im w''], [-Im w'', -Re w'']]`,
//! exactly harmonic by construction.
//!
//! Sign conventions: the outward normal is `n = -∇U/E` (potentials decay
//! outward, levels decrease with distance) and the curvature `κ = ∇·n =
//! -n·(Hess ∇U)/E²` makes the unit circle have `κ = +1`.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{apply_matrix, fourier_diff_matrix, weighted_sum, NeumaierSum};

/// Critical-point threshold on `|∇U|` for curve extraction.
pub const EPS_INTENSITY: f64 = 1e-10;
/// Relative defect tolerance of radial roots.
pub const RADIAL_TOL: f64 = 1e-13;

/// Value, gradient, and Hessian of a planar harmonic potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarJet {
    pub value: f64,
    pub gradient: Vector2<f64>,
    pub hessian: Matrix2<f64>,
}

impl PlanarJet {
    pub fn intensity(&self) -> f64 {
        self.gradient.norm()
    }
}

/// Catalog of exact planar fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlanarField {
    /// `U = -(Φ/2π) ln|r - center|`.
    LogMonopole { flux: f64, center: [f64; 2] },
    /// `U = -(Φ/2π) ln|r| + d·r/|r|²`.
    LogDipole { flux: f64, dipole: [f64; 2] },
    /// Exterior of the ellipse with the given semi-axes, via the conformal
    /// map `z = ζ + m/ζ`; the boundary sits at level 0 and levels decrease
    /// outward.
    EllipseExterior { semi_axes: [f64; 2], flux: f64 },
}

impl PlanarField {
    pub fn jet(&self, r: Vector2<f64>) -> Result<PlanarJet> {
        let z = Complex64::new(r.x, r.y);
        match *self {
            PlanarField::LogMonopole { flux, center } => {
                let dz = z - Complex64::new(center[0], center[1]);
                if dz.norm() <= 1e-12 {
                    return Err(Error::SingularPoint(nalgebra::Vector3::new(r.x, r.y, 0.0)));
                }
                let k = flux / (2.0 * std::f64::consts::PI);
                jet_from_w(-k * dz.norm().ln(), -k / dz, k / (dz * dz))
            }
            PlanarField::LogDipole { flux, dipole } => {
                if z.norm() <= 1e-12 {
                    return Err(Error::SingularPoint(nalgebra::Vector3::new(r.x, r.y, 0.0)));
                }
                let k = flux / (2.0 * std::f64::consts::PI);
                let q = Complex64::new(dipole[0], dipole[1]);
                jet_from_w(
                    -k * z.norm().ln() + (q / z).re,
                    -k / z - q / (z * z),
                    k / (z * z) + 2.0 * q / (z * z * z),
                )
            }
            PlanarField::EllipseExterior { semi_axes, flux } => {
                let (a, b) = (semi_axes[0], semi_axes[1]);
                if !(a >= b && b > 0.0) {
                    return Err(Error::InvalidConfig(
                        "ellipse semi-axes must satisfy a >= b > 0".into(),
                    ));
                }
                let r0 = 0.5 * (a + b);
                let m = 0.25 * (a * a - b * b);
                // branch with s ~ z at infinity; the cut is the focal segment
                let s = z * (Complex64::new(1.0, 0.0) - 4.0 * m / (z * z)).sqrt();
                if s.norm() <= 1e-12 {
                    return Err(Error::SingularPoint(nalgebra::Vector3::new(r.x, r.y, 0.0)));
                }
                let zeta = 0.5 * (z + s);
                let k = flux / (2.0 * std::f64::consts::PI);
                let zeta_prime = 0.5 * (Complex64::new(1.0, 0.0) + z / s);
                let zeta_second = -2.0 * m / (s * s * s);
                jet_from_w(
                    -k * (zeta.norm() / r0).ln(),
                    -k * zeta_prime / zeta,
                    -k * (zeta_second * zeta - zeta_prime * zeta_prime) / (zeta * zeta),
                )
            }
        }
    }

    /// Exact flux carried by the logarithmic monopole term.
    pub fn total_flux(&self) -> f64 {
        match *self {
            PlanarField::LogMonopole { flux, .. } => flux,
            PlanarField::LogDipole { flux, .. } => flux,
            PlanarField::EllipseExterior { flux, .. } => flux,
        }
    }

    /// Natural star center for level-curve extraction.
    pub fn star_center(&self) -> Vector2<f64> {
        match *self {
            PlanarField::LogMonopole { center, .. } => Vector2::new(center[0], center[1]),
            _ => Vector2::zeros(),
        }
    }
}

fn jet_from_w(u: f64, w1: Complex64, w2: Complex64) -> Result<PlanarJet> {
    Ok(PlanarJet {
        value: u,
        gradient: Vector2::new(w1.re, -w1.im),
        hessian: Matrix2::new(w2.re, -w2.im, -w2.im, -w2.re),
    })
}

/// Residual of the planar reduction of the log-intensity identity: in two
/// dimensions `Δ log E = 0`, equivalently `‖Hess‖²_F E² = 2 |Hess ∇U|²`.
pub fn planar_log_e_identity_residual(jet: &PlanarJet) -> f64 {
    let e_sq = jet.gradient.norm_squared();
    let lhs = jet.hessian.norm_squared() * e_sq;
    let rhs = 2.0 * (jet.hessian * jet.gradient).norm_squared();
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
}

/// Extraction parameters of one level curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub n_nodes: usize,
    pub center: Vector2<f64>,
    pub bracket: (f64, f64),
}

impl CurveSpec {
    pub fn new(n_nodes: usize, center: Vector2<f64>, bracket: (f64, f64)) -> Self {
        Self {
            n_nodes,
            center,
            bracket,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_nodes < 16 {
            return Err(Error::InvalidConfig("curve needs at least 16 nodes".into()));
        }
        if !(self.bracket.0 > 0.0 && self.bracket.1 > self.bracket.0) {
            return Err(Error::InvalidConfig(
                "bracket must satisfy 0 < r_min < r_max".into(),
            ));
        }
        Ok(())
    }
}

/// One closed equipotential curve sampled at uniform parameter angles.
#[derive(Debug, Clone)]
pub struct LevelCurveGrid {
    pub level: f64,
    pub spec: CurveSpec,
    /// Uniform parameter angles about the star center.
    pub params: Vec<f64>,
    pub positions: Vec<Vector2<f64>>,
    /// Unit tangents `dr/dparam / |dr/dparam|`.
    pub tangents: Vec<Vector2<f64>>,
    /// Outward unit normals `-∇U/E`.
    pub normals: Vec<Vector2<f64>>,
    pub intensities: Vec<f64>,
    /// Curve curvature κ (unit circle: +1).
    pub curvatures: Vec<f64>,
    /// Tangential derivative of `log E` along the curve.
    pub dlog_e_tangential: Vec<f64>,
    /// Arc-length weights ds per node (trapezoidal = spectral on periodic data).
    pub arc_weights: Vec<f64>,
    /// `|dr/dparam|` per node.
    pub speeds: Vec<f64>,
    pub max_level_defect: f64,
}

impl LevelCurveGrid {
    /// Measured flux `-∮ n·∇U ds = ∮ E ds`.
    pub fn flux(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for (e, w) in self.intensities.iter().zip(&self.arc_weights) {
            acc.add(e * w);
        }
        acc.value()
    }

    /// Total turning `∮ κ ds`; 2π for every simple closed curve.
    pub fn turning(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for (k, w) in self.curvatures.iter().zip(&self.arc_weights) {
            acc.add(k * w);
        }
        acc.value()
    }

    pub fn perimeter(&self) -> f64 {
        self.arc_weights.iter().sum()
    }

    /// CSV export: one row per node with columns `theta,x,y,E,kappa,ds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,x,y,E,kappa,ds\n");
        for i in 0..self.spec.n_nodes {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.params[i],
                self.positions[i].x,
                self.positions[i].y,
                self.intensities[i],
                self.curvatures[i],
                self.arc_weights[i],
            ));
        }
        out
    }
}

/// Extract the level curve `U = level`, star-shaped about `spec.center`.
pub fn sample_curve(field: &PlanarField, level: f64, spec: &CurveSpec) -> Result<LevelCurveGrid> {
    spec.validate()?;
    let n = spec.n_nodes;
    let params: Vec<f64> = (0..n)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64)
        .collect();
    let d_param = 2.0 * std::f64::consts::PI / n as f64;

    let mut positions = Vec::with_capacity(n);
    let mut tangents = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut intensities = Vec::with_capacity(n);
    let mut curvatures = Vec::with_capacity(n);
    let mut dlog_e_tangential = Vec::with_capacity(n);
    let mut arc_weights = Vec::with_capacity(n);
    let mut speeds = Vec::with_capacity(n);
    let mut max_level_defect: f64 = 0.0;

    for &t in &params {
        let omega = Vector2::new(t.cos(), t.sin());
        let omega_t = Vector2::new(-t.sin(), t.cos());
        let rho = radial_root(field, level, spec, omega)?;
        let position = spec.center + rho * omega;
        let jet = field.jet(position)?;
        max_level_defect = max_level_defect.max((jet.value - level).abs());

        let e = jet.intensity();
        if e <= EPS_INTENSITY {
            return Err(Error::CriticalPoint {
                position: nalgebra::Vector3::new(position.x, position.y, 0.0),
                gradient_norm: e,
                threshold: EPS_INTENSITY,
            });
        }
        let normal = -jet.gradient / e;
        let rho_t = -rho * jet.gradient.dot(&omega_t) / jet.gradient.dot(&omega);
        let velocity = rho_t * omega + rho * omega_t;
        let speed = velocity.norm();
        let tangent = velocity / speed;
        let hess_grad = jet.hessian * jet.gradient;
        let curvature = -normal.dot(&hess_grad) / (e * e);
        let dlog_e_t = tangent.dot(&hess_grad) / (e * e);

        positions.push(position);
        tangents.push(tangent);
        normals.push(normal);
        intensities.push(e);
        curvatures.push(curvature);
        dlog_e_tangential.push(dlog_e_t);
        arc_weights.push(speed * d_param);
        speeds.push(speed);
    }

    Ok(LevelCurveGrid {
        level,
        spec: *spec,
        params,
        positions,
        tangents,
        normals,
        intensities,
        curvatures,
        dlog_e_tangential,
        arc_weights,
        speeds,
        max_level_defect,
    })
}

fn radial_root(
    field: &PlanarField,
    level: f64,
    spec: &CurveSpec,
    omega: Vector2<f64>,
) -> Result<f64> {
    let eval = |rho: f64| -> Result<(f64, f64)> {
        let jet = field.jet(spec.center + rho * omega)?;
        Ok((jet.value - level, jet.gradient.dot(&omega)))
    };
    let (mut lo, mut hi) = spec.bracket;
    let (f_lo, _) = eval(lo)?;
    let (f_hi, _) = eval(hi)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Bracket {
            level,
            r_min: lo,
            r_max: hi,
            u_min: f_lo + level,
            u_max: f_hi + level,
        });
    }
    let defect_tol = RADIAL_TOL * level.abs().max(1.0);
    let mut rho = 0.5 * (lo + hi);
    while hi - lo > 1e-6 * hi.abs().max(1.0) {
        rho = 0.5 * (lo + hi);
        let (f, _) = eval(rho)?;
        if f.abs() <= defect_tol {
            return Ok(rho);
        }
        if f > 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
    }
    for _ in 0..60 {
        let (f, df) = eval(rho)?;
        if f.abs() <= defect_tol {
            return Ok(rho);
        }
        if f > 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        let newton = rho - f / df;
        rho = if df != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let (f, _) = eval(rho)?;
    if f.abs() <= defect_tol {
        Ok(rho)
    } else {
        Err(Error::NonMonotone {
            residual: f.abs(),
            tolerance: defect_tol,
        })
    }
}

/// The conserved curve integral `∮ [κ² - |n×∇log E|²] / E ds`, constant
/// across levels of one planar field.
pub fn conserved_integral(grid: &LevelCurveGrid) -> Result<f64> {
    let integrand: Vec<f64> = (0..grid.spec.n_nodes)
        .map(|i| {
            let k = grid.curvatures[i];
            let dle = grid.dlog_e_tangential[i];
            (k * k - dle * dle) / grid.intensities[i]
        })
        .collect();
    weighted_sum(&integrand, &grid.arc_weights, "conserved curve integral")
}

/// The circle-rigidity integral `∮ [n×∇(κ/E)]·[n×∇(1/E)] ds`, evaluated via
/// periodic spectral differentiation along the curve; nonpositive on every
/// convex exterior level, zero exactly on circles.
pub fn grad_product_integral(grid: &LevelCurveGrid) -> Result<f64> {
    let n = grid.spec.n_nodes;
    let d = fourier_diff_matrix(n);
    let kappa_over_e: Vec<f64> = (0..n)
        .map(|i| grid.curvatures[i] / grid.intensities[i])
        .collect();
    let inv_e: Vec<f64> = grid.intensities.iter().map(|e| 1.0 / e).collect();
    let dk = apply_matrix(&d, &kappa_over_e);
    let de = apply_matrix(&d, &inv_e);
    let integrand: Vec<f64> = (0..n)
        .map(|i| {
            let speed = grid.speeds[i];
            (dk[i] / speed) * (de[i] / speed)
        })
        .collect();
    weighted_sum(&integrand, &grid.arc_weights, "gradient product integral")
}

/// Both sides of the variance identity: against the probability measure
/// `dμ = E ds / Φ`, the variance of `κ/E` equals `∮ |D(1/E)|² dμ`.
pub fn variance_identity(grid: &LevelCurveGrid) -> Result<(f64, f64)> {
    let n = grid.spec.n_nodes;
    let flux = grid.flux();
    let mu: Vec<f64> = (0..n)
        .map(|i| grid.intensities[i] * grid.arc_weights[i] / flux)
        .collect();
    let kappa_over_e: Vec<f64> = (0..n)
        .map(|i| grid.curvatures[i] / grid.intensities[i])
        .collect();
    let ones = vec![1.0; n];
    let mean = weighted_sum(&kappa_over_e, &mu, "variance mean")?
        / weighted_sum(&ones, &mu, "measure normalization")?;
    let centered_sq: Vec<f64> = kappa_over_e
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .collect();
    let lhs = weighted_sum(&centered_sq, &mu, "variance lhs")?;
    // D(1/E) = -t·∇log E / E along the curve
    let d_inv_e_sq: Vec<f64> = (0..n)
        .map(|i| {
            let d = grid.dlog_e_tangential[i] / grid.intensities[i];
            d * d
        })
        .collect();
    let rhs = weighted_sum(&d_inv_e_sq, &mu, "variance rhs")?;
    Ok((lhs, rhs))
}

/// Per-level planar sweep summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanarSweepReport {
    pub levels: Vec<f64>,
    pub flux: Vec<f64>,
    pub conserved: Vec<f64>,
    pub grad_product: Vec<f64>,
    pub variance_lhs: Vec<f64>,
    pub variance_rhs: Vec<f64>,
    pub turning: Vec<f64>,
}

impl PlanarSweepReport {
    /// Relative spread of the conserved integral across levels.
    pub fn conserved_spread(&self) -> f64 {
        let max = self
            .conserved
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let min = self.conserved.iter().cloned().fold(f64::INFINITY, f64::min);
        (max - min) / max.abs().max(min.abs())
    }

    pub fn flux_spread(&self) -> f64 {
        let max = self.flux.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.flux.iter().cloned().fold(f64::INFINITY, f64::min);
        (max - min) / max.abs().max(min.abs())
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("level,flux,conserved,grad_product,variance_lhs,variance_rhs,turning\n");
        for i in 0..self.levels.len() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.levels[i],
                self.flux[i],
                self.conserved[i],
                self.grad_product[i],
                self.variance_lhs[i],
                self.variance_rhs[i],
                self.turning[i],
            ));
        }
        out
    }
}

/// Evaluate the conserved and rigidity integrals across levels.
pub fn planar_sweep(
    field: &PlanarField,
    levels: &[f64],
    spec: &CurveSpec,
) -> Result<PlanarSweepReport> {
    let mut report = PlanarSweepReport {
        levels: levels.to_vec(),
        flux: Vec::new(),
        conserved: Vec::new(),
        grad_product: Vec::new(),
        variance_lhs: Vec::new(),
        variance_rhs: Vec::new(),
        turning: Vec::new(),
    };
    for &level in levels {
        let grid = sample_curve(field, level, spec)?;
        report.flux.push(grid.flux());
        report.conserved.push(conserved_integral(&grid)?);
        report.grad_product.push(grad_product_integral(&grid)?);
        let (lhs, rhs) = variance_identity(&grid)?;
        report.variance_lhs.push(lhs);
        report.variance_rhs.push(rhs);
        report.turning.push(grid.turning());
    }
    Ok(report)
}
