//! Harmonic potential models with exact derivatives to second order.
//!
//! Unit convention used throughout the crate: a point charge of strength
//! `q` contributes `q / (4π |r - p|)` to the potential, so the flux
//! `-∮ n·∇U dS` through any surface enclosing it equals `q` exactly.
//! Multipole-style models (`AxialDipoleField`, `MultipoleField`) absorb the
//! `1/(4π)` into their coefficients instead: their monopole term is
//! `c00 / |r|`, carrying flux `4π c00`.

mod multipole;

pub use multipole::MultipoleField;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singularity guard: evaluation requires at least this distance from
/// every point source.
pub const SINGULAR_CLEARANCE: f64 = 1e-12;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Value, gradient, and Hessian of a harmonic potential at one point.
/// Every geometric quantity downstream derives from this package.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldJet {
    pub value: f64,
    pub gradient: Vector3<f64>,
    pub hessian: Matrix3<f64>,
}

impl FieldJet {
    /// Field intensity `E = |∇φ|`.
    pub fn intensity(&self) -> f64 {
        self.gradient.norm()
    }

    /// Trace of the Hessian; vanishes (to rounding) for harmonic fields.
    pub fn laplacian(&self) -> f64 {
        self.hessian.trace()
    }
}

/// A harmonic potential model that can report its full second-order jet.
///
/// Models are immutable after construction; `jet` is pure and safe to call
/// concurrently.
pub trait Field: Send + Sync {
    fn jet(&self, r: Vector3<f64>) -> Result<FieldJet>;

    /// Monopole moment as seen from infinity: the flux carried by the
    /// leading `1/|r|` term. Exact coefficient, never a quadrature.
    fn total_flux(&self) -> f64;

    /// Distance from `r` to the nearest field singularity; used to keep
    /// finite-difference stencils inside the admissible domain.
    fn singular_clearance(&self, r: Vector3<f64>) -> f64;
}

/// One point source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointCharge {
    pub position: [f64; 3],
    pub strength: f64,
}

impl PointCharge {
    pub fn new(position: Vector3<f64>, strength: f64) -> Self {
        Self {
            position: [position.x, position.y, position.z],
            strength,
        }
    }

    pub fn position_vec(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }
}

/// Superposition of point sources, `U(r) = Σ qᵢ / (4π |r - pᵢ|)`.
///
/// Both exact constructions (image charges) and least-squares fits share
/// this representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeEnsemble {
    pub charges: Vec<PointCharge>,
}

impl ChargeEnsemble {
    pub fn new(charges: Vec<PointCharge>) -> Self {
        Self { charges }
    }

    /// Single charge of strength `q` at `position`.
    pub fn monopole(position: Vector3<f64>, q: f64) -> Self {
        Self::new(vec![PointCharge::new(position, q)])
    }

    /// Green's function of a spherical cavity `|r - center| = radius` with a
    /// unit charge at the origin, realized by the classical image charge.
    ///
    /// For `center = 0` this degenerates to the bare monopole; the additive
    /// constant that would pin the boundary level to zero is dropped in that
    /// case (it carries no field).
    pub fn cavity_green(center: Vector3<f64>, radius: f64) -> Result<Self> {
        let c = center.norm();
        if c >= radius {
            return Err(Error::Geometry(format!(
                "cavity center offset {c:.6} must be smaller than the radius {radius:.6}"
            )));
        }
        if radius <= 0.0 {
            return Err(Error::Geometry("cavity radius must be positive".into()));
        }
        let mut charges = vec![PointCharge::new(Vector3::zeros(), 1.0)];
        if c > 0.0 {
            let image_pos = center * (1.0 - radius * radius / (c * c));
            charges.push(PointCharge::new(image_pos, -radius / c));
        }
        Ok(Self::new(charges))
    }

    /// Rescale every strength so the total flux becomes `flux`.
    pub fn rescale_flux(&mut self, flux: f64) -> Result<()> {
        let total: f64 = self.charges.iter().map(|c| c.strength).sum();
        if total.abs() < 1e-300 {
            return Err(Error::Geometry(
                "cannot rescale: ensemble has zero net charge".into(),
            ));
        }
        let factor = flux / total;
        for c in &mut self.charges {
            c.strength *= factor;
        }
        Ok(())
    }
}

impl Field for ChargeEnsemble {
    fn jet(&self, r: Vector3<f64>) -> Result<FieldJet> {
        let mut value = 0.0;
        let mut gradient = Vector3::zeros();
        let mut hessian = Matrix3::zeros();
        for charge in &self.charges {
            let d = r - charge.position_vec();
            let dist = d.norm();
            if dist <= SINGULAR_CLEARANCE {
                return Err(Error::SingularPoint(r));
            }
            let k = charge.strength / FOUR_PI;
            let inv = 1.0 / dist;
            let inv3 = inv * inv * inv;
            let inv5 = inv3 * inv * inv;
            value += k * inv;
            gradient -= k * inv3 * d;
            hessian += k * (3.0 * inv5 * (d * d.transpose()) - inv3 * Matrix3::identity());
        }
        Ok(FieldJet {
            value,
            gradient,
            hessian,
        })
    }

    fn total_flux(&self) -> f64 {
        self.charges.iter().map(|c| c.strength).sum()
    }

    fn singular_clearance(&self, r: Vector3<f64>) -> f64 {
        self.charges
            .iter()
            .map(|c| (r - c.position_vec()).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Axisymmetric monopole-plus-dipole model, `U = c00/|r| + c10 z/|r|³`
/// (the `1/(4π)` is absorbed into the coefficients).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialDipoleField {
    pub c00: f64,
    pub c10: f64,
}

impl AxialDipoleField {
    pub fn new(c00: f64, c10: f64) -> Result<Self> {
        if c00 <= 0.0 {
            return Err(Error::InvalidConfig(
                "dipole model requires a positive monopole coefficient c00".into(),
            ));
        }
        if c10 == 0.0 {
            return Err(Error::InvalidConfig(
                "dipole model requires c10 != 0; use a plain monopole ensemble instead".into(),
            ));
        }
        Ok(Self { c00, c10 })
    }

    /// Closed-form radius of the level surface `U = level` along the polar
    /// angle `theta`: the positive root of `U ρ² - c00 ρ - c10 cosθ = 0`.
    pub fn level_radius(&self, level: f64, theta: f64) -> f64 {
        let disc = self.c00 * self.c00 + 4.0 * self.c10 * level * theta.cos();
        (self.c00 + disc.sqrt()) / (2.0 * level)
    }
}

impl Field for AxialDipoleField {
    fn jet(&self, r: Vector3<f64>) -> Result<FieldJet> {
        let dist = r.norm();
        if dist <= SINGULAR_CLEARANCE {
            return Err(Error::SingularPoint(r));
        }
        let inv = 1.0 / dist;
        let inv3 = inv * inv * inv;
        let inv5 = inv3 * inv * inv;
        let inv7 = inv5 * inv * inv;
        let ez = Vector3::z();
        let rr = r * r.transpose();

        let value = self.c00 * inv + self.c10 * r.z * inv3;
        let gradient = -self.c00 * inv3 * r + self.c10 * (inv3 * ez - 3.0 * r.z * inv5 * r);
        let hessian = self.c00 * (3.0 * inv5 * rr - inv3 * Matrix3::identity())
            + self.c10
                * (15.0 * r.z * inv7 * rr
                    - 3.0
                        * inv5
                        * (ez * r.transpose() + r * ez.transpose() + r.z * Matrix3::identity()));
        Ok(FieldJet {
            value,
            gradient,
            hessian,
        })
    }

    fn total_flux(&self) -> f64 {
        FOUR_PI * self.c00
    }

    fn singular_clearance(&self, r: Vector3<f64>) -> f64 {
        r.norm()
    }
}

/// Serialized description of a field model; the JSON schema of the CLI.
///
/// ```json
/// {"type": "ensemble", "charges": [{"position": [0,0,0], "strength": 1.0}]}
/// {"type": "dipole", "c00": 1.0, "c10": 0.1}
/// {"type": "multipole", "l_max": 4, "coefficients": [{"l": 0, "m": 0, "value": 1.0}]}
/// {"type": "cavity_green", "center": [0.0, 0.0, 0.3], "radius": 1.0}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldConfig {
    Ensemble {
        charges: Vec<PointCharge>,
    },
    Dipole {
        c00: f64,
        c10: f64,
    },
    Multipole {
        l_max: usize,
        coefficients: Vec<MultipoleCoefficient>,
    },
    CavityGreen {
        center: [f64; 3],
        radius: f64,
    },
}

/// One `(l, m)` coefficient of a multipole model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultipoleCoefficient {
    pub l: usize,
    pub m: i32,
    pub value: f64,
}

impl FieldConfig {
    pub fn build(&self) -> Result<Box<dyn Field>> {
        match self {
            FieldConfig::Ensemble { charges } => {
                if charges.is_empty() {
                    return Err(Error::InvalidConfig("ensemble has no charges".into()));
                }
                Ok(Box::new(ChargeEnsemble::new(charges.clone())))
            }
            FieldConfig::Dipole { c00, c10 } => Ok(Box::new(AxialDipoleField::new(*c00, *c10)?)),
            FieldConfig::Multipole {
                l_max,
                coefficients,
            } => Ok(Box::new(MultipoleField::new(
                *l_max,
                coefficients.iter().map(|c| (c.l, c.m, c.value)),
            )?)),
            FieldConfig::CavityGreen { center, radius } => Ok(Box::new(
                ChargeEnsemble::cavity_green(Vector3::from(*center), *radius)?,
            )),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("field JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("field config serializes")
    }

    /// True for models whose level surfaces enclose the singular set from
    /// outside (exterior problems).
    pub fn is_exterior(&self) -> bool {
        !matches!(self, FieldConfig::CavityGreen { center, .. } if center != &[0.0; 3])
    }
}
