//! Low-level numerical kernels: Gauss–Legendre rules, differentiation
//! matrices, and compensated summation.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; accurate to machine
/// precision for the node counts used here (n <= a few hundred).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Dense differentiation matrix for the polynomial interpolant through
/// arbitrary distinct nodes (barycentric form).
pub fn barycentric_diff_matrix(nodes: &[f64]) -> Vec<Vec<f64>> {
    let n = nodes.len();
    assert!(n >= 2);
    // Rescale the pairwise differences to keep the weight products in range.
    let span = nodes[n - 1] - nodes[0];
    let scale = 4.0 / span.abs().max(f64::MIN_POSITIVE);
    let mut lambda = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                lambda[i] *= (nodes[i] - nodes[j]) * scale;
            }
        }
        lambda[i] = 1.0 / lambda[i];
    }
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                d[i][j] = (lambda[j] / lambda[i]) / (nodes[i] - nodes[j]);
                diag -= d[i][j];
            }
        }
        d[i][i] = diag;
    }
    d
}

/// Spectral differentiation matrix for 2π-periodic data on `n` uniform nodes.
pub fn fourier_diff_matrix(n: usize) -> Vec<Vec<f64>> {
    assert!(n >= 2);
    let h = 2.0 * std::f64::consts::PI / n as f64;
    let mut d = vec![vec![0.0; n]; n];
    #[allow(clippy::needless_range_loop)] // the entry depends on i - j
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let k = i as isize - j as isize;
            let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let arg = 0.5 * h * k as f64;
            d[i][j] = if n.is_multiple_of(2) {
                0.5 * sign / arg.tan()
            } else {
                0.5 * sign / arg.sin()
            };
        }
    }
    d
}

/// Apply a dense differentiation matrix to a sample vector.
pub fn apply_matrix(d: &[Vec<f64>], f: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|row| {
            let mut acc = NeumaierSum::new();
            for (a, b) in row.iter().zip(f) {
                acc.add(a * b);
            }
            acc.value()
        })
        .collect()
}

/// Compensated (Neumaier) accumulator: deterministic summation order with
/// error compensation for long quadrature sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated sum of `a[i] * b[i]`, erroring on non-finite terms.
pub fn weighted_sum(values: &[f64], weights: &[f64], what: &str) -> Result<f64> {
    assert_eq!(values.len(), weights.len());
    let mut acc = NeumaierSum::new();
    for (v, w) in values.iter().zip(weights) {
        let term = v * w;
        if !term.is_finite() {
            return Err(Error::NonFinite(format!(
                "{what}: node value {v}, weight {w}"
            )));
        }
        acc.add(term);
    }
    Ok(acc.value())
}

/// Least-squares slope of y against x.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    sxy / sxx
}
