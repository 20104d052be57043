//! Pointwise differential geometry of the level surface through a point,
//! derived directly from a [`FieldJet`].
//!
//! Conventions: with potential `φ` and field intensity `E = |∇φ|`, the unit
//! normal is `n = -∇φ/E`, which points outward (toward decreasing potential)
//! in exterior problems and away from the source on interior level sets of a
//! Green's function. The shape operator satisfies `dn = -W dr`, so every
//! sphere enclosing its center has `H = -1/R` and `K = +1/R²`; strictly
//! convex surfaces have `H < 0 < K`.
//!
//! All quantities follow from the projected Hessian:
//! `W = P Hess P / E` with `P = I - n nᵀ`, the tangential log-intensity
//! gradient is `D log E = P (Hess ∇φ) / E²`, and the field-line curvature is
//! `k = |D log E|`, giving the decomposition `∇log E = k N + 2H n`.

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fields::FieldJet;

/// Default critical-point threshold on `|∇φ|`.
pub const EPS_INTENSITY: f64 = 1e-10;

/// Geometric package of one point on one level surface.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceFrame {
    pub position: Vector3<f64>,
    /// Unit normal `-∇φ/E`.
    pub normal: Vector3<f64>,
    /// Field intensity `E = |∇φ| > 0`.
    pub intensity: f64,
    /// Shape operator as a full 3×3 symmetric matrix with `normal` in its
    /// kernel; its two tangential eigenvalues are the principal curvatures.
    pub weingarten: Matrix3<f64>,
    pub mean_curvature: f64,
    pub gauss_curvature: f64,
    /// Tangential gradient of `log E` (orthogonal to `normal`).
    pub dlog_e: Vector3<f64>,
    /// Field-line curvature `k = |D log E| >= 0`.
    pub fieldline_curvature: f64,
    /// `H² - K`, evaluated as the squared half-gap of the principal
    /// curvatures; immune to the cancellation that the literal difference
    /// suffers on nearly umbilical surfaces.
    pub h2_minus_k: f64,
}

impl SurfaceFrame {
    /// Principal curvatures, ordered `κ_max >= κ_min` (both negative on a
    /// convex surface).
    pub fn principal_curvatures(&self) -> (f64, f64) {
        let gap = self.h2_minus_k.sqrt();
        (self.mean_curvature + gap, self.mean_curvature - gap)
    }

    /// Quadratic form of the tangential operator `2H·I - W` applied to a
    /// tangent vector; negative definite on strictly convex surfaces.
    pub fn beta_form(&self, t: Vector3<f64>) -> f64 {
        (2.0 * self.mean_curvature * t - self.weingarten * t).dot(&t)
    }

    /// Tangential gradient of `1/E`, equal to `-D log E / E`.
    pub fn d_inv_e(&self) -> Vector3<f64> {
        -self.dlog_e / self.intensity
    }
}

/// Build the [`SurfaceFrame`] at the jet's base point.
pub fn frame(position: Vector3<f64>, jet: &FieldJet) -> Result<SurfaceFrame> {
    frame_with_threshold(position, jet, EPS_INTENSITY)
}

/// [`frame`] with an explicit critical-point threshold.
pub fn frame_with_threshold(
    position: Vector3<f64>,
    jet: &FieldJet,
    eps_intensity: f64,
) -> Result<SurfaceFrame> {
    let grad = jet.gradient;
    let intensity = grad.norm();
    if intensity <= eps_intensity {
        return Err(Error::CriticalPoint {
            position,
            gradient_norm: intensity,
            threshold: eps_intensity,
        });
    }
    let normal = -grad / intensity;
    let projector = Matrix3::identity() - normal * normal.transpose();
    let w_raw = projector * jet.hessian * projector / intensity;
    let weingarten = 0.5 * (w_raw + w_raw.transpose());

    let mean_curvature = 0.5 * weingarten.trace();
    let trace_sq = weingarten.norm_squared();
    let gauss_curvature = 0.5 * (weingarten.trace().powi(2) - trace_sq);

    let (t1, t2) = tangent_basis(normal);
    let restricted = Matrix2::new(
        (weingarten * t1).dot(&t1),
        (weingarten * t1).dot(&t2),
        (weingarten * t2).dot(&t1),
        (weingarten * t2).dot(&t2),
    );
    let a_minus_c = restricted[(0, 0)] - restricted[(1, 1)];
    let b = 0.5 * (restricted[(0, 1)] + restricted[(1, 0)]);
    let h2_minus_k = 0.25 * (a_minus_c * a_minus_c + 4.0 * b * b);

    let hess_grad = jet.hessian * grad;
    let mut dlog_e = projector * hess_grad / (intensity * intensity);
    // second orthogonalization pass: the first projection leaves a normal
    // residual of order eps·|n·∇log E|, which can dwarf a tiny tangential part
    dlog_e -= normal * dlog_e.dot(&normal);

    Ok(SurfaceFrame {
        position,
        normal,
        intensity,
        weingarten,
        mean_curvature,
        gauss_curvature,
        dlog_e,
        fieldline_curvature: dlog_e.norm(),
        h2_minus_k,
    })
}

/// Closed-form Laplacian of `log E`, valid wherever the field is harmonic:
///
/// `Δ log E = (‖Hess‖_F² - 2 |Hess ∇φ|² / E²) / E²`.
///
/// Harmonicity removes every third derivative, so the jet suffices. Together
/// with the level-set identity `Δ log E + 2K = 0` this gives a second,
/// independent route to the Gaussian curvature.
pub fn laplacian_log_e(jet: &FieldJet) -> Result<f64> {
    let e = jet.gradient.norm();
    if e <= EPS_INTENSITY {
        return Err(Error::CriticalPoint {
            position: Vector3::zeros(),
            gradient_norm: e,
            threshold: EPS_INTENSITY,
        });
    }
    let e_sq = e * e;
    let hess_sq = jet.hessian.norm_squared();
    let hess_grad_sq = (jet.hessian * jet.gradient).norm_squared();
    Ok((hess_sq - 2.0 * hess_grad_sq / e_sq) / e_sq)
}

/// Residual of the normal-derivative identity `n·∇log E = 2H`.
///
/// `n·∇log E` is evaluated as `n·(Hess ∇φ)/E²`; the residual is nonzero only
/// through departures from exact harmonicity, so it doubles as a harmonicity
/// probe for fitted or series-evaluated fields.
pub fn normal_log_e_residual(frame: &SurfaceFrame, jet: &FieldJet) -> f64 {
    let e_sq = frame.intensity * frame.intensity;
    let lhs = frame.normal.dot(&(jet.hessian * jet.gradient)) / e_sq;
    (lhs - 2.0 * frame.mean_curvature).abs()
}

/// An orthonormal basis of the tangent plane with normal `n`.
pub fn tangent_basis(n: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vector3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = n.cross(&helper).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}
