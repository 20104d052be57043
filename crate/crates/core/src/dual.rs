//! Forward-mode automatic differentiation to second order in three
//! variables: value, gradient, and full Hessian propagate through
//! arithmetic by the chain rule.

use nalgebra::{Matrix3, Vector3};
use std::ops::{Add, Div, Mul, Neg, Sub};

/// A scalar together with its gradient and Hessian with respect to the
/// three seed variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual3 {
    pub value: f64,
    pub grad: Vector3<f64>,
    pub hess: Matrix3<f64>,
}

impl Dual3 {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            grad: Vector3::zeros(),
            hess: Matrix3::zeros(),
        }
    }

    /// Seed variable `axis` (0, 1, 2) at the given value.
    pub fn variable(value: f64, axis: usize) -> Self {
        let mut grad = Vector3::zeros();
        grad[axis] = 1.0;
        Self {
            value,
            grad,
            hess: Matrix3::zeros(),
        }
    }

    /// The three coordinates of `r`, each seeded as an independent variable.
    pub fn seed_point(r: Vector3<f64>) -> [Self; 3] {
        [
            Self::variable(r.x, 0),
            Self::variable(r.y, 1),
            Self::variable(r.z, 2),
        ]
    }

    pub fn recip(self) -> Self {
        let v = 1.0 / self.value;
        let v2 = v * v;
        Self {
            value: v,
            grad: -self.grad * v2,
            hess: -self.hess * v2 + 2.0 * v2 * v * outer(self.grad, self.grad),
        }
    }

    pub fn sqrt(self) -> Self {
        let v = self.value.sqrt();
        let g = self.grad / (2.0 * v);
        Self {
            value: v,
            grad: g,
            hess: self.hess / (2.0 * v) - outer(self.grad, self.grad) / (4.0 * v * v * v),
        }
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::constant(1.0),
            1 => self,
            _ if n < 0 => self.powi(-n).recip(),
            _ => {
                // binary exponentiation keeps the op count low for r^(2l+1)
                let half = self.powi(n / 2);
                if n % 2 == 0 {
                    half * half
                } else {
                    half * half * self
                }
            }
        }
    }

    pub fn scale(self, c: f64) -> Self {
        Self {
            value: self.value * c,
            grad: self.grad * c,
            hess: self.hess * c,
        }
    }
}

fn outer(a: Vector3<f64>, b: Vector3<f64>) -> Matrix3<f64> {
    a * b.transpose()
}

impl Add for Dual3 {
    type Output = Dual3;
    fn add(self, rhs: Dual3) -> Dual3 {
        Dual3 {
            value: self.value + rhs.value,
            grad: self.grad + rhs.grad,
            hess: self.hess + rhs.hess,
        }
    }
}

impl Sub for Dual3 {
    type Output = Dual3;
    fn sub(self, rhs: Dual3) -> Dual3 {
        Dual3 {
            value: self.value - rhs.value,
            grad: self.grad - rhs.grad,
            hess: self.hess - rhs.hess,
        }
    }
}

impl Mul for Dual3 {
    type Output = Dual3;
    fn mul(self, rhs: Dual3) -> Dual3 {
        Dual3 {
            value: self.value * rhs.value,
            grad: self.grad * rhs.value + rhs.grad * self.value,
            hess: self.hess * rhs.value
                + rhs.hess * self.value
                + outer(self.grad, rhs.grad)
                + outer(rhs.grad, self.grad),
        }
    }
}

impl Div for Dual3 {
    type Output = Dual3;
    #[allow(clippy::suspicious_arithmetic_impl)] // division via reciprocal
    fn div(self, rhs: Dual3) -> Dual3 {
        self * rhs.recip()
    }
}

impl Neg for Dual3 {
    type Output = Dual3;
    fn neg(self) -> Dual3 {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn check_against_fd<F>(f: F, r: Vector3<f64>)
    where
        F: Fn([Dual3; 3]) -> Dual3,
    {
        let jet = f(Dual3::seed_point(r));
        let h = 1e-5 * r.norm().max(1.0);
        let eval = |p: Vector3<f64>| f(Dual3::seed_point(p)).value;
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let fd = (eval(r + e) - eval(r - e)) / (2.0 * h);
            assert_relative_eq!(jet.grad[i], fd, max_relative = 1e-6, epsilon = 1e-9);
            for j in 0..3 {
                let mut ej = Vector3::zeros();
                ej[j] = h;
                let fd2 = (eval(r + e + ej) - eval(r + e - ej) - eval(r - e + ej)
                    + eval(r - e - ej))
                    / (4.0 * h * h);
                assert_relative_eq!(jet.hess[(i, j)], fd2, max_relative = 1e-4, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn polynomial_derivatives_are_exact() {
        // f = x^2 y + 3 z^3 - x y z  has simple closed-form derivatives.
        let r = Vector3::new(1.3, -0.7, 2.1);
        let [x, y, z] = Dual3::seed_point(r);
        let f = x * x * y + z.powi(3).scale(3.0) - x * y * z;
        assert_relative_eq!(
            f.value,
            r.x * r.x * r.y + 3.0 * r.z.powi(3) - r.x * r.y * r.z,
            epsilon = 1e-14
        );
        assert_relative_eq!(f.grad.x, 2.0 * r.x * r.y - r.y * r.z, epsilon = 1e-14);
        assert_relative_eq!(f.grad.z, 9.0 * r.z * r.z - r.x * r.y, epsilon = 1e-14);
        assert_relative_eq!(f.hess[(0, 1)], 2.0 * r.x - r.z, epsilon = 1e-14);
        assert_relative_eq!(f.hess[(2, 2)], 18.0 * r.z, epsilon = 1e-14);
    }

    #[test]
    fn composed_expressions_match_finite_differences() {
        let r = Vector3::new(0.9, 1.4, -0.6);
        check_against_fd(|[x, y, z]| (x * x + y * y + z * z).sqrt().recip(), r);
        check_against_fd(
            |[x, y, z]| (x * y + z.powi(2)) / (x * x + y * y + z * z).sqrt(),
            r,
        );
    }

    #[test]
    fn inverse_distance_is_harmonic() {
        // trace of the Hessian of 1/|r| vanishes
        let r = Vector3::new(0.4, -1.1, 0.8);
        let [x, y, z] = Dual3::seed_point(r);
        let f = (x * x + y * y + z * z).sqrt().recip();
        assert!(f.hess.trace().abs() < 1e-13 * f.hess.norm());
        // Hessian symmetric by construction
        assert!((f.hess - f.hess.transpose()).norm() == 0.0);
    }
}
