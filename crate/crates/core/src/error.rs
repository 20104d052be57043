//! Error types shared across the crate.

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Evaluation point coincides with a field singularity.
    #[error("evaluation point {0:?} coincides with a field source")]
    SingularPoint(Vector3<f64>),

    /// Gradient magnitude below the critical-point threshold; no level-set
    /// geometry can be attached here.
    #[error("critical point: |grad| = {gradient_norm:.3e} <= {threshold:.3e} at {position:?}")]
    CriticalPoint {
        position: Vector3<f64>,
        gradient_norm: f64,
        threshold: f64,
    },

    /// Invalid geometric construction (e.g. cavity center outside the sphere).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Requested feature beyond the supported range (e.g. multipole degree cap).
    #[error("not implemented: {0}")]
    NotImplemented(String),

    /// Radial root bracketing failed: the level is not enclosed by the interval.
    #[error(
        "bracket error at level {level:.6e}: U({r_min:.3e}) = {u_min:.6e}, U({r_max:.3e}) = {u_max:.6e}"
    )]
    Bracket {
        level: f64,
        r_min: f64,
        r_max: f64,
        u_min: f64,
        u_max: f64,
    },

    /// Root refinement could not reach the requested defect tolerance.
    #[error("non-monotone potential along ray: residual {residual:.3e} exceeds {tolerance:.3e}")]
    NonMonotone { residual: f64, tolerance: f64 },

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Least-squares system condition estimate exceeds the configured cap.
    #[error(
        "ill-conditioned system: estimate {estimate:.3e} > cap {cap:.3e}; \
         use fewer sources or a deeper source surface"
    )]
    IllConditioned { estimate: f64, cap: f64 },

    /// Boundary fit residual exceeds the configured cap.
    #[error("fit residual {max:.3e} exceeds the cap {cap:.3e}")]
    ResidualTooLarge { max: f64, cap: f64 },

    /// The singular point of a Green's function lies outside the cavity.
    #[error("origin lies outside the cavity boundary")]
    OriginOutside,

    /// A finite-difference stencil would cross a field singularity.
    #[error("finite-difference stencil leaves the admissible domain near {0:?}")]
    StencilOutOfDomain(Vector3<f64>),

    /// Invalid run or model configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
