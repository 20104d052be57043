//! Quadrature-ready sampling of equipotential surfaces and transport of
//! points between levels along field lines.
//!
//! Surfaces are extracted by ray shooting from a star center: a
//! Gauss–Legendre × uniform-φ tensor grid of directions, one radial root per
//! direction. This keeps spectral quadrature accuracy on the smooth convex
//! level sets in scope (a triangulation would destroy it) and avoids the
//! θ = 0, π coordinate poles since neither family of nodes touches them.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Field;
use crate::geometry::{self, SurfaceFrame};
use crate::numerics::{
    apply_matrix, barycentric_diff_matrix, fourier_diff_matrix, gauss_legendre_on,
};

/// Relative defect tolerance of radial roots: `|U(ρω) - φ₀| <= RADIAL_TOL·max(1, φ₀)`.
pub const RADIAL_TOL: f64 = 1e-13;
/// Bisection refinement before Newton polishing takes over.
pub const BISECTION_TOL: f64 = 1e-6;
/// Terminal defect tolerance of a flow trace, relative to `max(1, |target|)`.
pub const FLOW_TERMINAL_TOL: f64 = 1e-10;
/// Per-sample defect tolerance along a flow trace.
pub const FLOW_SAMPLE_TOL: f64 = 1e-6;

/// Tensor-grid specification for one star-shaped surface extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Gauss–Legendre node count in θ (>= 8).
    pub n_theta: usize,
    /// Uniform node count in φ (>= 16).
    pub n_phi: usize,
    /// Center about which the surface is star-shaped.
    pub center: Vector3<f64>,
    /// Radial search interval `(r_min, r_max)`, `0 < r_min < r_max`.
    pub bracket: (f64, f64),
    /// Root defect tolerance, relative to `max(1, level)`.
    #[serde(default = "default_radial_tol")]
    pub radial_tol: f64,
}

fn default_radial_tol() -> f64 {
    RADIAL_TOL
}

impl GridSpec {
    pub fn new(n_theta: usize, n_phi: usize, center: Vector3<f64>, bracket: (f64, f64)) -> Self {
        Self {
            n_theta,
            n_phi,
            center,
            bracket,
            radial_tol: RADIAL_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 8 {
            return Err(Error::InvalidConfig("n_theta must be at least 8".into()));
        }
        if self.n_phi < 16 {
            return Err(Error::InvalidConfig("n_phi must be at least 16".into()));
        }
        if self.bracket.0 <= 0.0 || self.bracket.1 <= self.bracket.0 {
            return Err(Error::InvalidConfig(
                "bracket must satisfy 0 < r_min < r_max".into(),
            ));
        }
        if !self.radial_tol.is_finite() || self.radial_tol <= 0.0 {
            return Err(Error::InvalidConfig("radial_tol must be positive".into()));
        }
        Ok(())
    }

    /// Same grid with both node counts scaled by `factor` (for refinement
    /// studies and quadrature-noise estimates).
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            n_theta: ((self.n_theta as f64 * factor).round() as usize).max(8),
            n_phi: ((self.n_phi as f64 * factor).round() as usize).max(16),
            ..*self
        }
    }
}

/// Result of a radial root solve.
#[derive(Debug, Clone, Copy)]
pub struct RadialRoot {
    pub radius: f64,
    /// Newton left the bracket at least once and bisection finished the job.
    pub newton_fell_back: bool,
}

/// Solve `U(center + ρ ω) = level` for `ρ` inside the spec's bracket.
///
/// Bisection down to [`BISECTION_TOL`] relative width, then Newton polish to
/// [`RADIAL_TOL`]; a Newton iterate that leaves the current bracket triggers
/// a bisection fallback, which is recorded on the returned root.
pub fn radial_solve(
    field: &dyn Field,
    level: f64,
    direction: Vector3<f64>,
    spec: &GridSpec,
) -> Result<RadialRoot> {
    spec.validate()?;
    let eval = |rho: f64| -> Result<(f64, f64)> {
        let jet = field.jet(spec.center + rho * direction)?;
        Ok((jet.value - level, jet.gradient.dot(&direction)))
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
    let defect_tol = spec.radial_tol * level.abs().max(1.0);

    // bisection to a relative width of BISECTION_TOL
    let mut mid = 0.5 * (lo + hi);
    while hi - lo > BISECTION_TOL * hi.abs().max(1.0) {
        mid = 0.5 * (lo + hi);
        let (f_mid, _) = eval(mid)?;
        if f_mid.abs() <= defect_tol {
            return Ok(RadialRoot {
                radius: mid,
                newton_fell_back: false,
            });
        }
        if f_mid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Newton polish, bracket-guarded
    let mut rho = mid;
    let mut fell_back = false;
    for _ in 0..60 {
        let (f, df) = eval(rho)?;
        if f.abs() <= defect_tol {
            return Ok(RadialRoot {
                radius: rho,
                newton_fell_back: fell_back,
            });
        }
        if f > 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        let newton = rho - f / df;
        if df != 0.0 && newton > lo && newton < hi {
            rho = newton;
        } else {
            fell_back = true;
            rho = 0.5 * (lo + hi);
            if hi - lo <= f64::EPSILON * hi.abs() {
                break;
            }
        }
    }
    let (f, _) = eval(rho)?;
    if f.abs() <= defect_tol {
        Ok(RadialRoot {
            radius: rho,
            newton_fell_back: fell_back,
        })
    } else {
        Err(Error::NonMonotone {
            residual: f.abs(),
            tolerance: defect_tol,
        })
    }
}

/// Per-node 2×2 first fundamental form in the (θ, φ) parametrization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metric2 {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
}

impl Metric2 {
    pub fn det(&self) -> f64 {
        self.g11 * self.g22 - self.g12 * self.g12
    }

    /// Contravariant components `(g^11, g^12, g^22)`.
    pub fn inverse(&self) -> (f64, f64, f64) {
        let d = self.det();
        (self.g22 / d, -self.g12 / d, self.g11 / d)
    }
}

/// Health summary of one extracted grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridDiagnostics {
    /// Set when any node has `K <= 0` or `H >= 0`.
    pub convexity_warning: bool,
    pub max_mean_curvature: f64,
    pub min_gauss_curvature: f64,
    pub max_level_defect: f64,
    pub newton_fallbacks: usize,
}

/// One equipotential surface sampled on the tensor grid, with frames,
/// area weights, tangents, and the parametric metric at every node.
///
/// Node `(i, j)` (θ-index `i`, φ-index `j`) lives at flat index
/// `i * n_phi + j`.
#[derive(Debug, Clone)]
pub struct LevelSurfaceGrid {
    pub level: f64,
    pub spec: GridSpec,
    pub thetas: Vec<f64>,
    pub theta_weights: Vec<f64>,
    pub phis: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub frames: Vec<SurfaceFrame>,
    /// Area element dS per node (Jacobian × quadrature weight).
    pub area_weights: Vec<f64>,
    pub tangents_theta: Vec<Vector3<f64>>,
    pub tangents_phi: Vec<Vector3<f64>>,
    pub metric: Vec<Metric2>,
    pub diagnostics: GridDiagnostics,
}

impl LevelSurfaceGrid {
    pub fn n_nodes(&self) -> usize {
        self.spec.n_theta * self.spec.n_phi
    }

    pub fn idx(&self, i_theta: usize, j_phi: usize) -> usize {
        i_theta * self.spec.n_phi + j_phi
    }

    pub fn is_convex(&self) -> bool {
        !self.diagnostics.convexity_warning
    }

    /// Total sampled area `Σ dS`.
    pub fn area(&self) -> f64 {
        let mut acc = crate::numerics::NeumaierSum::new();
        for w in &self.area_weights {
            acc.add(*w);
        }
        acc.value()
    }

    /// CSV export: one row per node with columns
    /// `theta,phi,x,y,z,E,H,K,dS,dlogE_norm`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,phi,x,y,z,E,H,K,dS,dlogE_norm\n");
        for i in 0..self.spec.n_theta {
            for j in 0..self.spec.n_phi {
                let idx = self.idx(i, j);
                let p = self.positions[idx];
                let f = &self.frames[idx];
                out.push_str(&format!(
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                    self.thetas[i],
                    self.phis[j],
                    p.x,
                    p.y,
                    p.z,
                    f.intensity,
                    f.mean_curvature,
                    f.gauss_curvature,
                    self.area_weights[idx],
                    f.fieldline_curvature,
                ));
            }
        }
        out
    }

    /// JSON sidecar describing the grid: level, spec, diagnostics.
    pub fn sidecar_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            level: f64,
            spec: &'a GridSpec,
            diagnostics: &'a GridDiagnostics,
        }
        serde_json::to_string_pretty(&Sidecar {
            level: self.level,
            spec: &self.spec,
            diagnostics: &self.diagnostics,
        })
        .expect("sidecar serializes")
    }
}

struct NodeData {
    position: Vector3<f64>,
    frame: SurfaceFrame,
    area_weight: f64,
    tangent_theta: Vector3<f64>,
    tangent_phi: Vector3<f64>,
    metric: Metric2,
    defect: f64,
    newton_fell_back: bool,
}

/// Extract the level surface `U = level` on the tensor grid of `spec`.
pub fn sample_surface(field: &dyn Field, level: f64, spec: &GridSpec) -> Result<LevelSurfaceGrid> {
    spec.validate()?;
    let (thetas, theta_weights) = gauss_legendre_on(spec.n_theta, 0.0, std::f64::consts::PI);
    let phis: Vec<f64> = (0..spec.n_phi)
        .map(|j| 2.0 * std::f64::consts::PI * j as f64 / spec.n_phi as f64)
        .collect();
    let d_phi = 2.0 * std::f64::consts::PI / spec.n_phi as f64;

    let nodes: Vec<Result<NodeData>> = (0..spec.n_theta * spec.n_phi)
        .into_par_iter()
        .map(|flat| {
            let i = flat / spec.n_phi;
            let j = flat % spec.n_phi;
            let (theta, phi) = (thetas[i], phis[j]);
            let (st, ct) = (theta.sin(), theta.cos());
            let (sp, cp) = (phi.sin(), phi.cos());
            let omega = Vector3::new(st * cp, st * sp, ct);
            let omega_theta = Vector3::new(ct * cp, ct * sp, -st);
            let omega_phi = Vector3::new(-st * sp, st * cp, 0.0);

            let root = radial_solve(field, level, omega, spec)?;
            let rho = root.radius;
            let position = spec.center + rho * omega;
            let jet = field.jet(position)?;
            let defect = (jet.value - level).abs();
            let frame = geometry::frame(position, &jet)?;

            // implicit differentiation of U(center + ρ(θ,φ) ω(θ,φ)) = level
            let radial_slope = jet.gradient.dot(&omega);
            let rho_theta = -rho * jet.gradient.dot(&omega_theta) / radial_slope;
            let rho_phi = -rho * jet.gradient.dot(&omega_phi) / radial_slope;
            let tangent_theta = rho_theta * omega + rho * omega_theta;
            let tangent_phi = rho_phi * omega + rho * omega_phi;

            let metric = Metric2 {
                g11: tangent_theta.dot(&tangent_theta),
                g12: tangent_theta.dot(&tangent_phi),
                g22: tangent_phi.dot(&tangent_phi),
            };
            if !(metric.g11 > 0.0 && metric.det() > 0.0) {
                return Err(Error::Geometry(format!(
                    "metric not positive definite at (θ={theta:.4}, φ={phi:.4})"
                )));
            }

            let jacobian = tangent_theta.cross(&tangent_phi).norm();
            let area_weight = jacobian * theta_weights[i] * d_phi;

            Ok(NodeData {
                position,
                frame,
                area_weight,
                tangent_theta,
                tangent_phi,
                metric,
                defect,
                newton_fell_back: root.newton_fell_back,
            })
        })
        .collect();

    let mut positions = Vec::with_capacity(nodes.len());
    let mut frames = Vec::with_capacity(nodes.len());
    let mut area_weights = Vec::with_capacity(nodes.len());
    let mut tangents_theta = Vec::with_capacity(nodes.len());
    let mut tangents_phi = Vec::with_capacity(nodes.len());
    let mut metric = Vec::with_capacity(nodes.len());
    let mut diagnostics = GridDiagnostics {
        convexity_warning: false,
        max_mean_curvature: f64::NEG_INFINITY,
        min_gauss_curvature: f64::INFINITY,
        max_level_defect: 0.0,
        newton_fallbacks: 0,
    };
    for node in nodes {
        let node = node?;
        diagnostics.max_mean_curvature = diagnostics
            .max_mean_curvature
            .max(node.frame.mean_curvature);
        diagnostics.min_gauss_curvature = diagnostics
            .min_gauss_curvature
            .min(node.frame.gauss_curvature);
        diagnostics.max_level_defect = diagnostics.max_level_defect.max(node.defect);
        diagnostics.newton_fallbacks += node.newton_fell_back as usize;
        positions.push(node.position);
        frames.push(node.frame);
        area_weights.push(node.area_weight);
        tangents_theta.push(node.tangent_theta);
        tangents_phi.push(node.tangent_phi);
        metric.push(node.metric);
    }
    diagnostics.convexity_warning =
        diagnostics.max_mean_curvature >= 0.0 || diagnostics.min_gauss_curvature <= 0.0;

    Ok(LevelSurfaceGrid {
        level,
        spec: *spec,
        thetas,
        theta_weights,
        phis,
        positions,
        frames,
        area_weights,
        tangents_theta,
        tangents_phi,
        metric,
        diagnostics,
    })
}

/// A traced path between levels; `samples[k] = (φ_k, r_k)`.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub samples: Vec<(f64, Vector3<f64>)>,
    pub start_level: f64,
    pub target_level: f64,
    /// `|U(end) - target|` after the Newton projection.
    pub terminal_defect: f64,
    /// Worst `|U(r_k) - φ_k|` over retained samples.
    pub max_sample_defect: f64,
}

impl FlowTrajectory {
    pub fn end_position(&self) -> Vector3<f64> {
        self.samples.last().expect("trajectory is never empty").1
    }
}

/// Transport a point from its own level to `target_level` along the
/// level-parameter flow `dr/dφ = ∇φ/E²` (velocity `-n/E`), with classical
/// RK4 in `φ` over `steps` uniform steps and a terminal Newton projection
/// along the gradient.
pub fn flow_trace(
    field: &dyn Field,
    start: Vector3<f64>,
    target_level: f64,
    steps: usize,
) -> Result<FlowTrajectory> {
    flow_trace_with_tolerance(field, start, target_level, steps, FLOW_TERMINAL_TOL)
}

/// [`flow_trace`] with an explicit terminal defect tolerance (relative to
/// `max(1, |target|)`).
pub fn flow_trace_with_tolerance(
    field: &dyn Field,
    start: Vector3<f64>,
    target_level: f64,
    steps: usize,
    terminal_tolerance: f64,
) -> Result<FlowTrajectory> {
    if steps == 0 {
        return Err(Error::InvalidConfig(
            "flow trace needs at least one step".into(),
        ));
    }
    let velocity = |r: Vector3<f64>| -> Result<Vector3<f64>> {
        let jet = field.jet(r)?;
        let e_sq = jet.gradient.norm_squared();
        if e_sq.sqrt() <= geometry::EPS_INTENSITY {
            return Err(Error::CriticalPoint {
                position: r,
                gradient_norm: e_sq.sqrt(),
                threshold: geometry::EPS_INTENSITY,
            });
        }
        Ok(jet.gradient / e_sq)
    };

    let start_level = field.jet(start)?.value;
    let h = (target_level - start_level) / steps as f64;
    let mut r = start;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((start_level, r));
    let mut max_sample_defect: f64 = 0.0;
    for k in 0..steps {
        let k1 = velocity(r)?;
        let k2 = velocity(r + 0.5 * h * k1)?;
        let k3 = velocity(r + 0.5 * h * k2)?;
        let k4 = velocity(r + h * k3)?;
        r += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let phi_k = start_level + h * (k + 1) as f64;
        max_sample_defect = max_sample_defect.max((field.jet(r)?.value - phi_k).abs());
        samples.push((phi_k, r));
    }

    // Newton projection along ∇U onto the target level
    let terminal_tol = terminal_tolerance * target_level.abs().max(1.0);
    for _ in 0..5 {
        let jet = field.jet(r)?;
        if (jet.value - target_level).abs() <= terminal_tol {
            break;
        }
        let e_sq = jet.gradient.norm_squared();
        r += (target_level - jet.value) * jet.gradient / e_sq;
    }
    let terminal_defect = (field.jet(r)?.value - target_level).abs();
    if terminal_defect > terminal_tol {
        return Err(Error::NonMonotone {
            residual: terminal_defect,
            tolerance: terminal_tol,
        });
    }
    let last = samples.len() - 1;
    samples[last] = (target_level, r);

    if max_sample_defect > FLOW_SAMPLE_TOL * target_level.abs().max(1.0) {
        return Err(Error::NonMonotone {
            residual: max_sample_defect,
            tolerance: FLOW_SAMPLE_TOL,
        });
    }

    Ok(FlowTrajectory {
        samples,
        start_level,
        target_level,
        terminal_defect,
        max_sample_defect,
    })
}

/// Discrete Laplace–Beltrami operator of the sampled surface applied to
/// per-node scalar samples: `Δ_Σ f = (1/√g) ∂_k (g^{kl} √g ∂_l f)`,
/// with barycentric differentiation across the Gauss–Legendre θ-nodes and
/// spectral differentiation around each periodic φ-ring.
///
/// Exact on constants by construction.
pub fn surface_laplacian(grid: &LevelSurfaceGrid, samples: &[f64]) -> Vec<f64> {
    let n_theta = grid.spec.n_theta;
    let n_phi = grid.spec.n_phi;
    assert_eq!(
        samples.len(),
        n_theta * n_phi,
        "samples must cover the grid"
    );
    let d_theta = barycentric_diff_matrix(&grid.thetas);
    let d_phi = fourier_diff_matrix(n_phi);

    let df = grid_partials(grid, samples, &d_theta, &d_phi);

    // flux components scaled by √g
    let mut f1 = vec![0.0; samples.len()];
    let mut f2 = vec![0.0; samples.len()];
    for idx in 0..samples.len() {
        let m = &grid.metric[idx];
        let (g_uu, g_uv, g_vv) = m.inverse();
        let sqrt_g = m.det().sqrt();
        let (ft, fp) = df[idx];
        f1[idx] = sqrt_g * (g_uu * ft + g_uv * fp);
        f2[idx] = sqrt_g * (g_uv * ft + g_vv * fp);
    }
    let div1 = grid_partials(grid, &f1, &d_theta, &d_phi);
    let div2 = grid_partials(grid, &f2, &d_theta, &d_phi);

    (0..samples.len())
        .map(|idx| {
            let sqrt_g = grid.metric[idx].det().sqrt();
            (div1[idx].0 + div2[idx].1) / sqrt_g
        })
        .collect()
}

/// Tangential surface gradient of per-node samples:
/// `D f = g^{kl} ∂_l f ∂_k r` assembled from the grid differentiation
/// matrices and per-node tangent vectors.
pub fn surface_gradient(grid: &LevelSurfaceGrid, samples: &[f64]) -> Vec<Vector3<f64>> {
    let d_theta = barycentric_diff_matrix(&grid.thetas);
    let d_phi = fourier_diff_matrix(grid.spec.n_phi);
    let df = grid_partials(grid, samples, &d_theta, &d_phi);
    (0..samples.len())
        .map(|idx| {
            let (g_uu, g_uv, g_vv) = grid.metric[idx].inverse();
            let (ft, fp) = df[idx];
            let coeff_theta = g_uu * ft + g_uv * fp;
            let coeff_phi = g_uv * ft + g_vv * fp;
            coeff_theta * grid.tangents_theta[idx] + coeff_phi * grid.tangents_phi[idx]
        })
        .collect()
}

/// (∂f/∂θ, ∂f/∂φ) at every node.
fn grid_partials(
    grid: &LevelSurfaceGrid,
    samples: &[f64],
    d_theta: &[Vec<f64>],
    d_phi: &[Vec<f64>],
) -> Vec<(f64, f64)> {
    let n_theta = grid.spec.n_theta;
    let n_phi = grid.spec.n_phi;
    let mut out = vec![(0.0, 0.0); samples.len()];
    // θ-derivative: one column of constant φ at a time
    let mut column = vec![0.0; n_theta];
    for j in 0..n_phi {
        for i in 0..n_theta {
            column[i] = samples[i * n_phi + j];
        }
        let dcol = apply_matrix(d_theta, &column);
        for i in 0..n_theta {
            out[i * n_phi + j].0 = dcol[i];
        }
    }
    // φ-derivative: one periodic ring of constant θ at a time
    for i in 0..n_theta {
        let row = &samples[i * n_phi..(i + 1) * n_phi];
        let drow = apply_matrix(d_phi, row);
        for j in 0..n_phi {
            out[i * n_phi + j].1 = drow[j];
        }
    }
    out
}

/// Flow-transported area elements: every node of `grid` is carried to
/// `target_level` along the level-parameter flow and the transported
/// parametrization is re-differentiated on the grid, giving the area element
/// of the co-moving surface patch at the new level.
pub fn transported_area_weights(
    field: &dyn Field,
    grid: &LevelSurfaceGrid,
    target_level: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let n_phi = grid.spec.n_phi;
    let moved: Vec<Vector3<f64>> = grid
        .positions
        .par_iter()
        .map(|&p| flow_trace(field, p, target_level, steps).map(|t| t.end_position()))
        .collect::<Result<_>>()?;

    let d_theta = barycentric_diff_matrix(&grid.thetas);
    let d_phi = fourier_diff_matrix(n_phi);
    let d_phi_weight = 2.0 * std::f64::consts::PI / n_phi as f64;

    // differentiate the transported positions componentwise on the grid
    let mut comp = vec![vec![0.0; moved.len()]; 3];
    for (idx, p) in moved.iter().enumerate() {
        comp[0][idx] = p.x;
        comp[1][idx] = p.y;
        comp[2][idx] = p.z;
    }
    let partials: Vec<Vec<(f64, f64)>> = comp
        .iter()
        .map(|c| grid_partials(grid, c, &d_theta, &d_phi))
        .collect();

    Ok((0..moved.len())
        .map(|idx| {
            let i = idx / n_phi;
            let t_theta = Vector3::new(partials[0][idx].0, partials[1][idx].0, partials[2][idx].0);
            let t_phi = Vector3::new(partials[0][idx].1, partials[1][idx].1, partials[2][idx].1);
            t_theta.cross(&t_phi).norm() * grid.theta_weights[i] * d_phi_weight
        })
        .collect())
}
