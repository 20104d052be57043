//! Surface functionals on equipotential grids and level sweeps.
//!
//! The two central integrals, evaluated per level:
//!
//! - `W(φ) = ∮ (H² - K - |D log E|²/4) dS/E`
//! - `F(φ) = ∮ [4(H² - K) - |n×∇log E|²] dS/E`
//!
//! `F = 4W` identically since `|n×∇log E| = |D log E|`; both are computed by
//! independent summations so the identity stays a live cross-check. Along a
//! sweep, `dW/dφ` must match `-3/2 ∮ β(D(1/E), D(1/E)) dS` with the β-form
//! `⟨(2H·I - W)t, t⟩`, which is negative semidefinite on convex surfaces;
//! that makes `W` nondecreasing in the level, positive for exterior fields
//! and negative for interior Green's functions, vanishing exactly on
//! centered spheres.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::Field;
use crate::geometry;
use crate::levelset::{
    flow_trace, sample_surface, surface_gradient, surface_laplacian, GridSpec, LevelSurfaceGrid,
};
use crate::numerics::{regression_slope, weighted_sum};

/// Default slack for monotonicity checks of `W` (quadrature noise floor).
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Quadrature of a per-node integrand against the grid's area weights,
/// with compensated summation in fixed node order.
pub fn integrate(grid: &LevelSurfaceGrid, integrand: &[f64]) -> Result<f64> {
    weighted_sum(integrand, &grid.area_weights, "surface integral")
}

/// All level functionals from one pass over the grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: f64,
    /// Measured flux `-∮ n·∇φ dS = ∮ E dS`.
    pub flux: f64,
    /// `∮ K dS`; equals 4π on every topological sphere.
    pub gauss_bonnet: f64,
    pub w_value: f64,
    pub f_value: f64,
    /// `∮ ⟨(2H·I - W) D(1/E), D(1/E)⟩ dS`.
    pub beta_integral: f64,
    pub convex: bool,
    pub max_mean_curvature: f64,
    pub min_gauss_curvature: f64,
}

pub fn level_report(grid: &LevelSurfaceGrid) -> Result<LevelReport> {
    let n = grid.n_nodes();
    let mut flux = vec![0.0; n];
    let mut gauss = vec![0.0; n];
    let mut w_int = vec![0.0; n];
    let mut f_int = vec![0.0; n];
    let mut beta = vec![0.0; n];
    for (idx, frame) in grid.frames.iter().enumerate() {
        let e = frame.intensity;
        let k_line_sq = frame.fieldline_curvature * frame.fieldline_curvature;
        flux[idx] = e;
        gauss[idx] = frame.gauss_curvature;
        w_int[idx] = (frame.h2_minus_k - 0.25 * k_line_sq) / e;
        f_int[idx] = (4.0 * frame.h2_minus_k - k_line_sq) / e;
        beta[idx] = frame.beta_form(frame.d_inv_e());
    }
    Ok(LevelReport {
        level: grid.level,
        flux: integrate(grid, &flux)?,
        gauss_bonnet: integrate(grid, &gauss)?,
        w_value: integrate(grid, &w_int)?,
        f_value: integrate(grid, &f_int)?,
        beta_integral: integrate(grid, &beta)?,
        convex: grid.is_convex(),
        max_mean_curvature: grid.diagnostics.max_mean_curvature,
        min_gauss_curvature: grid.diagnostics.min_gauss_curvature,
    })
}

/// Closed-form pointwise residual maxima recorded per level of a sweep.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClosedFormResiduals {
    /// Worst `|n·∇log E - 2H|` over the grid.
    pub normal_log_e_max: f64,
    /// Worst `|Δ log E + 2K|` over the grid.
    pub laplacian_log_e_max: f64,
}

fn closed_form_residuals(
    field: &dyn Field,
    grid: &LevelSurfaceGrid,
) -> Result<ClosedFormResiduals> {
    let mut a_max: f64 = 0.0;
    let mut b_max: f64 = 0.0;
    for (idx, frame) in grid.frames.iter().enumerate() {
        let jet = field.jet(grid.positions[idx])?;
        a_max = a_max.max(geometry::normal_log_e_residual(frame, &jet));
        let lap = geometry::laplacian_log_e(&jet)?;
        b_max = b_max.max((lap + 2.0 * frame.gauss_curvature).abs());
    }
    Ok(ClosedFormResiduals {
        normal_log_e_max: a_max,
        laplacian_log_e_max: b_max,
    })
}

/// A level sweep with finite-difference derivative cross-checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    /// Strictly ascending levels.
    pub levels: Vec<f64>,
    pub reports: Vec<LevelReport>,
    /// Centered finite difference of `w_value` (interior levels only).
    pub dw_dphi_fd: Vec<Option<f64>>,
    /// `-3/2 × beta_integral` per level.
    pub rhs_w1f1: Vec<f64>,
    /// `dW/dφ >= -slack` at every interior level.
    pub monotone: bool,
    pub monotone_slack: f64,
    pub all_convex: bool,
    pub closed_form_residuals: Vec<ClosedFormResiduals>,
}

impl SweepReport {
    /// Worst relative mismatch between the finite-difference `dW/dφ` and the
    /// β-integral right-hand side over interior levels.
    pub fn w1f1_max_relative_error(&self) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for (fd, rhs) in self.dw_dphi_fd.iter().zip(&self.rhs_w1f1) {
            if let Some(fd) = fd {
                let scale = fd.abs().max(rhs.abs());
                if scale == 0.0 {
                    continue;
                }
                let err = (fd - rhs).abs() / scale;
                worst = Some(worst.map_or(err, |w: f64| w.max(err)));
            }
        }
        worst
    }

    /// Relative spread of the measured flux across levels.
    pub fn flux_spread(&self) -> f64 {
        let max = self
            .reports
            .iter()
            .map(|r| r.flux)
            .fold(f64::NEG_INFINITY, f64::max);
        let min = self
            .reports
            .iter()
            .map(|r| r.flux)
            .fold(f64::INFINITY, f64::min);
        (max - min) / max.abs().max(min.abs())
    }

    /// Worst `|∮K dS - 4π|` across levels.
    pub fn gauss_bonnet_deviation(&self) -> f64 {
        self.reports
            .iter()
            .map(|r| (r.gauss_bonnet - 4.0 * std::f64::consts::PI).abs())
            .fold(0.0, f64::max)
    }

    /// Log–log slope of `W` against the level, ignoring non-positive `W`.
    pub fn w_decay_slope(&self) -> Option<f64> {
        let pairs: Vec<(f64, f64)> = self
            .levels
            .iter()
            .zip(&self.reports)
            .filter(|(_, r)| r.w_value > 0.0)
            .map(|(l, r)| (l.ln(), r.w_value.ln()))
            .collect();
        if pairs.len() < 3 {
            return None;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        Some(regression_slope(&x, &y))
    }

    /// CSV mirror: one row per level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,flux,gauss_bonnet,W,F,beta,dW_fd,rhs,convex\n");
        for (i, report) in self.reports.iter().enumerate() {
            let fd = self.dw_dphi_fd[i]
                .map(|v| format!("{v:.17e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e},{}\n",
                report.level,
                report.flux,
                report.gauss_bonnet,
                report.w_value,
                report.f_value,
                report.beta_integral,
                fd,
                self.rhs_w1f1[i],
                report.convex,
            ));
        }
        out
    }
}

/// Run `level_report` over ascending levels and cross-check the derivative
/// formula `dW/dφ = -3/2 ∮ β(D(1/E), D(1/E)) dS` by centered differences.
pub fn sweep(field: &dyn Field, levels: &[f64], spec: &GridSpec) -> Result<SweepReport> {
    sweep_with_slack(field, levels, spec, MONOTONE_SLACK)
}

pub fn sweep_with_slack(
    field: &dyn Field,
    levels: &[f64],
    spec: &GridSpec,
    monotone_slack: f64,
) -> Result<SweepReport> {
    if levels.len() < 5 {
        return Err(Error::InvalidConfig(format!(
            "a sweep needs at least 5 levels, got {}",
            levels.len()
        )));
    }
    let mut levels = levels.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).expect("levels are finite"));
    if levels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig("sweep levels must be distinct".into()));
    }

    let per_level: Vec<Result<(LevelReport, ClosedFormResiduals)>> = levels
        .par_iter()
        .map(|&level| {
            let grid = sample_surface(field, level, spec)?;
            Ok((level_report(&grid)?, closed_form_residuals(field, &grid)?))
        })
        .collect();
    let mut reports = Vec::with_capacity(levels.len());
    let mut residuals = Vec::with_capacity(levels.len());
    for item in per_level {
        let (report, residual) = item?;
        reports.push(report);
        residuals.push(residual);
    }

    let n = levels.len();
    let mut dw_dphi_fd = vec![None; n];
    for i in 1..n - 1 {
        let h_minus = levels[i] - levels[i - 1];
        let h_plus = levels[i + 1] - levels[i];
        let (w0, w1, w2) = (
            reports[i - 1].w_value,
            reports[i].w_value,
            reports[i + 1].w_value,
        );
        dw_dphi_fd[i] = Some(
            -h_plus / (h_minus * (h_minus + h_plus)) * w0
                + (h_plus - h_minus) / (h_minus * h_plus) * w1
                + h_minus / (h_plus * (h_minus + h_plus)) * w2,
        );
    }
    let rhs_w1f1: Vec<f64> = reports.iter().map(|r| -1.5 * r.beta_integral).collect();
    let all_convex = reports.iter().all(|r| r.convex);
    let monotone = dw_dphi_fd.iter().flatten().all(|&fd| fd >= -monotone_slack);

    Ok(SweepReport {
        levels,
        reports,
        dw_dphi_fd,
        rhs_w1f1,
        monotone,
        monotone_slack,
        all_convex,
        closed_form_residuals: residuals,
    })
}

/// Worst `|∮K dS - 4π|` over freshly extracted grids at the given levels.
pub fn gauss_bonnet_invariance(field: &dyn Field, levels: &[f64], spec: &GridSpec) -> Result<f64> {
    if levels.len() < 2 {
        return Err(Error::InvalidConfig(
            "Gauss-Bonnet invariance needs at least 2 levels".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for &level in levels {
        let grid = sample_surface(field, level, spec)?;
        let gauss: Vec<f64> = grid.frames.iter().map(|f| f.gauss_curvature).collect();
        worst = worst.max((integrate(&grid, &gauss)? - 4.0 * std::f64::consts::PI).abs());
    }
    Ok(worst)
}

/// Stencil settings of the finite-difference identity checks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentityOptions {
    /// Spatial step `h = spatial_step_factor × |r - center|`.
    pub spatial_step_factor: f64,
    /// Level hop `δφ = flow_step_factor × level` for flow derivatives.
    pub flow_step_factor: f64,
    /// RK4 steps per `δφ` hop.
    pub flow_steps: usize,
    /// Skip the finite-difference suites (closed-form residuals only).
    pub closed_form_only: bool,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self {
            spatial_step_factor: 1e-4,
            flow_step_factor: 1e-3,
            flow_steps: 8,
            closed_form_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
}

impl ResidualStats {
    fn from_values(values: &[f64]) -> Self {
        let max = values.iter().cloned().fold(0.0, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Self { max, mean }
    }
}

/// Residual summary of the pointwise identity suite on one grid.
///
/// Closed-form identities (exact up to rounding and harmonicity):
/// (a) `n·∇log E = 2H`; (b) `Δ log E + 2K = 0`.
///
/// Finite-difference identities (bounded by the stencil error):
/// (c) `Δn = 2(W - 2H) D log E - n(|D log E|² + 4H² - 2K)` (spatial 7-point);
/// (d) `Δ_Σ n = (2K - 4H²) n - 2 DH` (surface operators);
/// (e) `2 ∂H/∂φ + Δ_Σ(1/E) + (4H² - 2K)/E = 0` (flow derivative);
/// (f) `Δ(n/E) = 4[(2H·I - W) D(1/E) + K n/E]` (spatial 7-point).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdentityReport {
    pub level: f64,
    pub options: IdentityOptions,
    pub normal_log_e: ResidualStats,
    pub laplacian_log_e: ResidualStats,
    pub laplacian_normal: Option<ResidualStats>,
    pub weatherburn: Option<ResidualStats>,
    pub mean_curvature_evolution: Option<ResidualStats>,
    pub laplacian_normal_over_e: Option<ResidualStats>,
}

/// Run the identity suite on every node of `grid`.
pub fn identity_suite(
    field: &dyn Field,
    grid: &LevelSurfaceGrid,
    options: IdentityOptions,
) -> Result<IdentityReport> {
    let n = grid.n_nodes();

    // (a), (b): closed form
    let mut res_a = vec![0.0; n];
    let mut res_b = vec![0.0; n];
    for (idx, frame) in grid.frames.iter().enumerate() {
        let jet = field.jet(grid.positions[idx])?;
        res_a[idx] = geometry::normal_log_e_residual(frame, &jet);
        res_b[idx] = (geometry::laplacian_log_e(&jet)? + 2.0 * frame.gauss_curvature).abs();
    }

    if options.closed_form_only {
        return Ok(IdentityReport {
            level: grid.level,
            options,
            normal_log_e: ResidualStats::from_values(&res_a),
            laplacian_log_e: ResidualStats::from_values(&res_b),
            laplacian_normal: None,
            weatherburn: None,
            mean_curvature_evolution: None,
            laplacian_normal_over_e: None,
        });
    }

    // (c), (f): spatial 7-point Laplacians of n and n/E
    let spatial: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|idx| {
            let frame = &grid.frames[idx];
            let r = grid.positions[idx];
            let local = (r - grid.spec.center).norm();
            let clearance = field.singular_clearance(r);
            if clearance <= 10.0 * f64::EPSILON * local {
                return Err(Error::StencilOutOfDomain(r));
            }
            let h = (options.spatial_step_factor * local).min(0.1 * clearance);

            let normal_at = |p: Vector3<f64>| -> Result<(Vector3<f64>, f64)> {
                let jet = field.jet(p)?;
                let e = jet.intensity();
                Ok((-jet.gradient / e, e))
            };
            let (n0, e0) = normal_at(r)?;
            let mut lap_n = -6.0 * n0;
            let mut lap_ne = -6.0 * n0 / e0;
            for axis in 0..3 {
                let mut step = Vector3::zeros();
                step[axis] = h;
                let (np, ep) = normal_at(r + step)?;
                let (nm, em) = normal_at(r - step)?;
                lap_n += np + nm;
                lap_ne += np / ep + nm / em;
            }
            lap_n /= h * h;
            lap_ne /= h * h;

            let two_h = 2.0 * frame.mean_curvature;
            let rhs_c = 2.0 * (frame.weingarten * frame.dlog_e - two_h * frame.dlog_e)
                - frame.normal
                    * (frame.fieldline_curvature.powi(2) + two_h * two_h
                        - 2.0 * frame.gauss_curvature);
            let d_inv_e = frame.d_inv_e();
            let rhs_f = 4.0
                * ((two_h * d_inv_e - frame.weingarten * d_inv_e)
                    + frame.gauss_curvature * frame.normal / frame.intensity);
            Ok(((lap_n - rhs_c).norm(), (lap_ne - rhs_f).norm()))
        })
        .collect();
    let mut res_c = vec![0.0; n];
    let mut res_f = vec![0.0; n];
    for (idx, item) in spatial.into_iter().enumerate() {
        let (c, f) = item?;
        res_c[idx] = c;
        res_f[idx] = f;
    }

    // (d): surface operators on the grid
    let mut res_d = vec![0.0; n];
    {
        let h_samples: Vec<f64> = grid.frames.iter().map(|f| f.mean_curvature).collect();
        let dh = surface_gradient(grid, &h_samples);
        let mut lap_components = Vec::with_capacity(3);
        for axis in 0..3 {
            let comp: Vec<f64> = grid.frames.iter().map(|f| f.normal[axis]).collect();
            lap_components.push(surface_laplacian(grid, &comp));
        }
        for idx in 0..n {
            let frame = &grid.frames[idx];
            let lap_n = Vector3::new(
                lap_components[0][idx],
                lap_components[1][idx],
                lap_components[2][idx],
            );
            let rhs = (2.0 * frame.gauss_curvature
                - 4.0 * frame.mean_curvature * frame.mean_curvature)
                * frame.normal
                - 2.0 * dh[idx];
            res_d[idx] = (lap_n - rhs).norm();
        }
    }

    // (e): flow derivative of H against surface quantities
    let mut res_e = vec![0.0; n];
    {
        let inv_e: Vec<f64> = grid.frames.iter().map(|f| 1.0 / f.intensity).collect();
        let lap_inv_e = surface_laplacian(grid, &inv_e);
        let delta = options.flow_step_factor * grid.level.abs();
        let h_at: Vec<Result<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let start = grid.positions[idx];
                let up = flow_trace(field, start, grid.level + delta, options.flow_steps)?;
                let down = flow_trace(field, start, grid.level - delta, options.flow_steps)?;
                let h_up = geometry::frame(up.end_position(), &field.jet(up.end_position())?)?
                    .mean_curvature;
                let h_down =
                    geometry::frame(down.end_position(), &field.jet(down.end_position())?)?
                        .mean_curvature;
                Ok((h_up, h_down))
            })
            .collect();
        for (idx, item) in h_at.into_iter().enumerate() {
            let (h_up, h_down) = item?;
            let frame = &grid.frames[idx];
            let dh_dphi = (h_up - h_down) / (2.0 * delta);
            res_e[idx] = (2.0 * dh_dphi
                + lap_inv_e[idx]
                + (4.0 * frame.mean_curvature * frame.mean_curvature
                    - 2.0 * frame.gauss_curvature)
                    / frame.intensity)
                .abs();
        }
    }

    Ok(IdentityReport {
        level: grid.level,
        options,
        normal_log_e: ResidualStats::from_values(&res_a),
        laplacian_log_e: ResidualStats::from_values(&res_b),
        laplacian_normal: Some(ResidualStats::from_values(&res_c)),
        weatherburn: Some(ResidualStats::from_values(&res_d)),
        mean_curvature_evolution: Some(ResidualStats::from_values(&res_e)),
        laplacian_normal_over_e: Some(ResidualStats::from_values(&res_f)),
    })
}
