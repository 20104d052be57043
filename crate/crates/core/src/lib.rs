//! Numerical laboratory for the geometry of equipotential surfaces of
//! harmonic potentials: exact and fitted field models, pointwise
//! differential geometry of level sets, surface quadrature, a level-parameter
//! flow tracer, and the surface functionals whose signs, conservation laws,
//! and monotonicity this crate verifies.

pub mod dual;
pub mod error;
pub mod fields;
pub mod functionals;
pub mod geometry;
pub mod levelset;
pub mod mfs;
pub mod numerics;
pub mod planar;

pub use error::{Error, Result};
