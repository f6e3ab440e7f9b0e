//! Gauss–Hermite quadrature for expectations over independent normals.

use crate::error::{Error, Result};

/// Nodes and weights for `int f(x) exp(-x^2) dx`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes by Sturm-sequence bisection on the Jacobi matrix, polished by
    /// Newton on the orthonormal Hermite recurrence, which also gives the
    /// weights. Stable up to roughly 600 nodes.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        let off2: Vec<f64> = (1..n).map(|k| k as f64 / 2.0).collect();
        // number of Jacobi-matrix eigenvalues below x
        let count_below = |x: f64| {
            let mut count = 0;
            let mut d = -x;
            for k in 0..n {
                if k > 0 {
                    d = -x - off2[k - 1] / d;
                }
                if d == 0.0 {
                    d = -1e-300;
                }
                if d < 0.0 {
                    count += 1;
                }
            }
            count
        };
        let bound = 2.0 * ((n as f64 - 1.0) / 2.0).sqrt() + 1.0;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // i-th largest root: exactly n - i - 1 eigenvalues lie below it
            let (mut lo, mut hi) = (0.0, bound);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(mid) > n - i - 1 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-15 * hi.max(1.0) {
                    break;
                }
            }
            let mut z = 0.5 * (lo + hi);
            let mut pp = hermite_derivative(n, z).1;
            for _ in 0..3 {
                let (p, d) = hermite_derivative(n, z);
                pp = d;
                let step = p / d;
                if !step.is_finite() || !(lo - 1e-12..=hi + 1e-12).contains(&(z - step)) {
                    break;
                }
                z -= step;
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            weights[i] = 2.0 / (pp * pp);
            weights[n - 1 - i] = weights[i];
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `E f(X)` for `X ~ N(0, sigma^2)`, one node set per covariate, tensor product.
    pub fn expect_normal<F: Fn(&[f64]) -> f64>(&self, sigmas: &[f64], f: F) -> f64 {
        let d = sigmas.len();
        let n = self.len();
        let norm = std::f64::consts::PI.powf(-(d as f64) / 2.0);
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        let mut total = 0.0;
        loop {
            let mut w = norm;
            for c in 0..d {
                w *= self.weights[idx[c]];
                x[c] = std::f64::consts::SQRT_2 * sigmas[c] * self.nodes[idx[c]];
            }
            if w > 0.0 {
                total += w * f(&x);
            }
            let mut c = 0;
            loop {
                if c == d {
                    return total;
                }
                idx[c] += 1;
                if idx[c] < n {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }
}

/// Orthonormal Hermite polynomial of degree `n` at `z`, and its derivative.
fn hermite_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Starting node count per dimension.
pub const BASE_NODES: usize = 64;
/// Agreement between successive doublings accepted as converged.
pub const DOUBLING_TOL: f64 = 1e-7;
/// Largest disagreement tolerated at the node cap before giving up.
pub const ACCURACY_TARGET: f64 = 1e-6;

/// `E f(X)` over independent `N(0, sigma_c^2)` covariates. Starts at 64
/// nodes per dimension and doubles until two rules agree to 1e-7; a
/// disagreement above 1e-6 at the cap is a numeric error.
pub fn expect_normal_adaptive<F: Fn(&[f64]) -> f64>(sigmas: &[f64], f: F) -> Result<f64> {
    let cap = if sigmas.len() <= 1 { 512 } else { 256 };
    let mut n = BASE_NODES;
    let mut prev = GaussHermite::new(n).expect_normal(sigmas, &f);
    while n < cap {
        n *= 2;
        let next = GaussHermite::new(n).expect_normal(sigmas, &f);
        let diff = (next - prev).abs();
        prev = next;
        if diff <= DOUBLING_TOL {
            return Ok(prev);
        }
        if n == cap && diff > ACCURACY_TARGET {
            return Err(Error::Numeric(format!(
                "quadrature did not converge: {n}-node rule moved the result by {diff:e}"
            )));
        }
    }
    Ok(prev)
}
