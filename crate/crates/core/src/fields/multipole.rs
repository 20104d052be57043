//! Truncated multipole expansion evaluated with forward-mode duals.
//!
//! `U(r) = Σ_{l,m} c_{lm} B_{lm}(θ,φ) / |r|^{l+1}` where `B_{lm}` are the
//! Schmidt semi-normalized real spherical harmonics without the
//! Condon–Shortley phase:
//!
//! - `B_{l,0}  = P_l(cosθ)`
//! - `B_{l,m}  = sqrt(2 (l-m)!/(l+m)!) P_l^m(cosθ) cos(mφ)`, `m > 0`
//! - `B_{l,-m} = sqrt(2 (l-m)!/(l+m)!) P_l^m(cosθ) sin(mφ)`, `m > 0`
//!
//! so the `l = 0` term is exactly `c00 / |r|` and the axial `l = 1` term is
//! `c10 cosθ / |r|²`, matching [`AxialDipoleField`](super::AxialDipoleField).
//! Degrees are capped at [`L_CAP`]; everything in scope fits below it.
//!
//! The harmonics are generated in Cartesian form (no trigonometry, hence no
//! coordinate singularity on the polar axis) by the solid-harmonic
//! recursion, with value/gradient/Hessian propagated by [`Dual3`].

use nalgebra::Vector3;

use crate::dual::Dual3;
use crate::error::{Error, Result};
use crate::fields::{Field, FieldJet, SINGULAR_CLEARANCE};

/// Hard cap on the expansion degree.
pub const L_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct MultipoleField {
    l_max: usize,
    /// Dense coefficients, flat-indexed by `l² + l + m`.
    coefficients: Vec<f64>,
}

impl MultipoleField {
    pub fn new(l_max: usize, coeffs: impl IntoIterator<Item = (usize, i32, f64)>) -> Result<Self> {
        if l_max > L_CAP {
            return Err(Error::NotImplemented(format!(
                "multipole degree l_max = {l_max} exceeds the cap {L_CAP}"
            )));
        }
        let mut coefficients = vec![0.0; (l_max + 1) * (l_max + 1)];
        for (l, m, value) in coeffs {
            if l > l_max || m.unsigned_abs() as usize > l {
                return Err(Error::InvalidConfig(format!(
                    "multipole coefficient (l={l}, m={m}) outside 0 <= |m| <= l <= {l_max}"
                )));
            }
            coefficients[flat_index(l, m)] = value;
        }
        if coefficients[0] <= 0.0 {
            return Err(Error::InvalidConfig(
                "multipole model requires c00 > 0 (positive leading flux)".into(),
            ));
        }
        Ok(Self {
            l_max,
            coefficients,
        })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn coefficient(&self, l: usize, m: i32) -> f64 {
        self.coefficients[flat_index(l, m)]
    }
}

fn flat_index(l: usize, m: i32) -> usize {
    l * l + (l as i32 + m) as usize
}

impl Field for MultipoleField {
    fn jet(&self, r: Vector3<f64>) -> Result<FieldJet> {
        if r.norm() <= SINGULAR_CLEARANCE {
            return Err(Error::SingularPoint(r));
        }
        let [x, y, z] = Dual3::seed_point(r);
        let r2 = x * x + y * y + z * z;
        let inv_r = r2.sqrt().recip();
        let inv_r2 = inv_r * inv_r;

        // a[l][m] = |r|^l P_l^m(cosθ) e^{imφ} as (re, im) pairs, built by the
        // solid-harmonic recursion entirely in Cartesian coordinates.
        let lm = self.l_max;
        let zero = (Dual3::constant(0.0), Dual3::constant(0.0));
        let mut a: Vec<Vec<(Dual3, Dual3)>> = (0..=lm).map(|l| vec![zero; l + 1]).collect();
        a[0][0] = (Dual3::constant(1.0), Dual3::constant(0.0));
        for m in 1..=lm {
            // A_m^m = (2m-1) (x + iy) A_{m-1}^{m-1}
            let (pre, pim) = a[m - 1][m - 1];
            let f = (2 * m - 1) as f64;
            a[m][m] = ((x * pre - y * pim).scale(f), (x * pim + y * pre).scale(f));
        }
        #[allow(clippy::needless_range_loop)] // recurrence couples rows m and m+1
        for m in 0..lm {
            // A_{m+1}^m = (2m+1) z A_m^m
            let (pre, pim) = a[m][m];
            let f = (2 * m + 1) as f64;
            a[m + 1][m] = ((z * pre).scale(f), (z * pim).scale(f));
        }
        #[allow(clippy::needless_range_loop)] // three-term recurrence over l
        for l in 2..=lm {
            for m in 0..=(l - 2) {
                // (l-m) A_l^m = (2l-1) z A_{l-1}^m - (l-1+m) r² A_{l-2}^m
                let (p1re, p1im) = a[l - 1][m];
                let (p2re, p2im) = a[l - 2][m];
                let c1 = (2 * l - 1) as f64 / (l - m) as f64;
                let c2 = (l - 1 + m) as f64 / (l - m) as f64;
                a[l][m] = (
                    (z * p1re).scale(c1) - (r2 * p2re).scale(c2),
                    (z * p1im).scale(c1) - (r2 * p2im).scale(c2),
                );
            }
        }

        let mut total = Dual3::constant(0.0);
        let mut radial = inv_r; // 1/|r|^{2l+1}, advanced per degree
        #[allow(clippy::needless_range_loop)] // l drives both a and the radial factor
        for l in 0..=lm {
            for m in -(l as i32)..=(l as i32) {
                let c = self.coefficients[flat_index(l, m)];
                if c == 0.0 {
                    continue;
                }
                let mu = m.unsigned_abs() as usize;
                let (re, im) = a[l][mu];
                let angular = if m == 0 {
                    re
                } else if m > 0 {
                    re.scale(semi_norm(l, mu))
                } else {
                    im.scale(semi_norm(l, mu))
                };
                total = total + (angular * radial).scale(c);
            }
            radial = radial * inv_r2;
        }

        Ok(FieldJet {
            value: total.value,
            gradient: total.grad,
            // symmetrize away the last bits of rounding asymmetry
            hessian: 0.5 * (total.hess + total.hess.transpose()),
        })
    }

    fn total_flux(&self) -> f64 {
        4.0 * std::f64::consts::PI * self.coefficients[0]
    }

    fn singular_clearance(&self, r: Vector3<f64>) -> f64 {
        r.norm()
    }
}

/// `sqrt(2 (l-m)!/(l+m)!)` for `m > 0`.
fn semi_norm(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    // (l-m)!/(l+m)! = 1 / ((l+m)(l+m-1)...(l-m+1))
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    (2.0 * ratio).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AxialDipoleField;
    use crate::testutil::unit_dir;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degree_cap_is_enforced() {
        let err = MultipoleField::new(9, [(0, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::NotImplemented(_)));
        let err = MultipoleField::new(2, [(0, 0, 1.0), (3, 0, 0.1)]).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let err = MultipoleField::new(2, [(0, 0, -1.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn monopole_and_dipole_terms_match_closed_form() {
        let field = MultipoleField::new(1, [(0, 0, 1.0), (1, 0, 0.1)]).unwrap();
        let exact = AxialDipoleField::new(1.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r = unit_dir(&mut rng) * rng.random_range(0.5..20.0);
            let a = field.jet(r).unwrap();
            let b = exact.jet(r).unwrap();
            assert_relative_eq!(a.value, b.value, max_relative = 1e-13);
            assert!((a.gradient - b.gradient).norm() <= 1e-13 * b.gradient.norm());
            assert!((a.hessian - b.hessian).norm() <= 1e-12 * b.hessian.norm());
        }
    }

    #[test]
    fn tesseral_terms_match_direct_spherical_evaluation() {
        // l=2, m=2 term: B_22 = sqrt(2/24) * 3 sin²θ cos 2φ
        let field = MultipoleField::new(2, [(0, 0, 1.0), (2, 2, 0.3)]).unwrap();
        let (r, theta, phi): (f64, f64, f64) = (2.5, 1.1, 0.7);
        let p = Vector3::new(
            r * theta.sin() * phi.cos(),
            r * theta.sin() * phi.sin(),
            r * theta.cos(),
        );
        let b22 = (2.0 / 24.0f64).sqrt() * 3.0 * theta.sin().powi(2) * (2.0 * phi).cos();
        let expected = 1.0 / r + 0.3 * b22 / r.powi(3);
        assert_relative_eq!(field.jet(p).unwrap().value, expected, max_relative = 1e-13);
        // l=2, m=-1: B_{2,-1} = sqrt(2/6) * 3 sinθ cosθ sinφ
        let field = MultipoleField::new(2, [(0, 0, 1.0), (2, -1, 0.2)]).unwrap();
        let b2m1 = (2.0 / 6.0f64).sqrt() * 3.0 * theta.sin() * theta.cos() * phi.sin();
        let expected = 1.0 / r + 0.2 * b2m1 / r.powi(3);
        assert_relative_eq!(field.jet(p).unwrap().value, expected, max_relative = 1e-13);
    }

    #[test]
    fn random_l4_field_is_harmonic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut coeffs = vec![(0, 0, 1.0)];
        for l in 1..=4usize {
            for m in -(l as i32)..=(l as i32) {
                coeffs.push((l, m, rng.random_range(-0.1..0.1)));
            }
        }
        let field = MultipoleField::new(4, coeffs).unwrap();
        for _ in 0..1000 {
            let r = unit_dir(&mut rng) * rng.random_range(0.8..15.0);
            let jet = field.jet(r).unwrap();
            assert!(
                jet.laplacian().abs() <= 1e-11 * jet.hessian.norm().max(1e-300),
                "trace {:.3e} scale {:.3e} at {r:?}",
                jet.laplacian(),
                jet.hessian.norm()
            );
        }
    }

    #[test]
    fn polar_axis_is_regular() {
        let field = MultipoleField::new(3, [(0, 0, 1.0), (2, 1, 0.2), (3, -2, 0.1)]).unwrap();
        let jet = field.jet(Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert!(jet.value.is_finite());
        assert!(jet.gradient.norm().is_finite());
        assert!(jet.laplacian().abs() <= 1e-12 * jet.hessian.norm());
    }
}
