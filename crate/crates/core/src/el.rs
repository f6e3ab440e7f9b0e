//! Empirical likelihood engine.
//!
//! For fixed parameters the subject weights are `p_i = 1 / (n (1 + lambda' g_i))`
//! where `lambda` maximizes the concave dual
//! `R(lambda) = sum_i log*(1 + lambda' g_i)`. The pseudo-logarithm `log*`
//! (quadratic below `1/n`) makes `R` finite everywhere, so Newton's method
//! can run from any start; a hull violation shows up as `lambda` running off
//! to infinity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::equations::{AuxColumns, ConstraintSpec, EstimatingFunctionSet};
use crate::error::{Error, Result};

/// Owen's pseudo-logarithm with its first two derivatives.
///
/// Equal to `ln z` for `z >= eps`; below `eps` it continues as the quadratic
/// that matches value, slope and curvature at `eps`.
pub fn log_star(z: f64, eps: f64) -> (f64, f64, f64) {
    if z >= eps {
        (z.ln(), 1.0 / z, -1.0 / (z * z))
    } else {
        let r = z / eps;
        (
            eps.ln() - 1.5 + 2.0 * r - 0.5 * r * r,
            2.0 / eps - z / (eps * eps),
            -1.0 / (eps * eps),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerOptions {
    /// Stop when `||grad R|| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Result of the inner maximization at one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElSolution {
    pub lambda: Vec<f64>,
    pub weights: Vec<f64>,
    /// Log empirical likelihood ratio `sum_i log(1 + lambda' g_i)`, `>= 0`.
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    /// False when zero is diagnosed to lie outside the convex hull of the `g_i`.
    pub feasible: bool,
}

impl ElSolution {
    pub fn is_usable(&self) -> bool {
        self.converged && self.feasible
    }

    /// `sum_i p_i g_i`.
    pub fn weighted_mean(&self, g: &DMatrix<f64>) -> DVector<f64> {
        let p = DVector::from_column_slice(&self.weights);
        g.tr_mul(&p)
    }
}

struct DualState {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

fn dual_value(g: &DMatrix<f64>, lambda: &DVector<f64>, eps: f64) -> f64 {
    let z = g * lambda;
    z.iter().map(|&zi| log_star(1.0 + zi, eps).0).sum()
}

fn dual_state(g: &DMatrix<f64>, lambda: &DVector<f64>, eps: f64) -> DualState {
    let (n, r) = g.shape();
    let z = g * lambda;
    let mut value = 0.0;
    let mut d1 = DVector::zeros(n);
    let mut d2 = DVector::zeros(n);
    for i in 0..n {
        let (v, a, b) = log_star(1.0 + z[i], eps);
        value += v;
        d1[i] = a;
        d2[i] = b;
    }
    let grad = g.tr_mul(&d1);
    // sum_i d2_i g_i g_i'
    let mut scaled = g.clone();
    for i in 0..n {
        scaled.row_mut(i).scale_mut(d2[i]);
    }
    let mut hess = g.tr_mul(&scaled);
    debug_assert_eq!(hess.shape(), (r, r));
    hess.fill_lower_triangle_with_upper_triangle();
    DualState { value, grad, hess }
}

/// Solves `(-H) d = grad` for the Newton direction.
fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let neg = -hess;
    if let Some(chol) = neg.clone().cholesky() {
        let d = chol.solve(grad);
        if d.iter().all(|v| v.is_finite()) {
            return Some(d);
        }
    }
    let svd = neg.svd(true, true);
    let tol = svd.singular_values.max() * 1e-13;
    svd.solve(grad, tol).ok().filter(|d| d.iter().all(|v| v.is_finite()))
}

/// Maximizes the log-star dual for constraint matrix `g` (`n x r`) from `lambda = 0`.
pub fn solve_lambda(g: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<ElSolution> {
    solve_lambda_from(g, None, InnerOptions { tol, max_iter })
}

/// Same as [`solve_lambda`] with an optional warm start.
pub fn solve_lambda_from(
    g: &DMatrix<f64>,
    start: Option<&DVector<f64>>,
    opts: InnerOptions,
) -> Result<ElSolution> {
    let (n, r) = g.shape();
    if g.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("constraint matrix contains NaN".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("constraint matrix is not finite".into()));
    }
    if r >= n {
        return Err(Error::Contract(format!(
            "{r} constraints need more than {r} subjects, got {n}"
        )));
    }
    let eps = 1.0 / n as f64;
    let cap = 1e3 * (r as f64).sqrt() * n as f64;
    let mut lambda = match start {
        Some(s) if s.len() == r && s.iter().all(|v| v.is_finite()) => s.clone(),
        _ => DVector::zeros(r),
    };
    let mut state = dual_state(g, &lambda, eps);
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        if state.grad.norm() <= opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let Some(dir) = newton_direction(&state.hess, &state.grad) else {
            diverged = true;
            break;
        };
        let predicted = state.grad.dot(&dir);
        // Once the predicted gain is below rounding of R, value comparisons
        // are noise: take the full Newton step if it reduces the gradient.
        let next = if predicted.abs() <= 1e-12 * (1.0 + state.value.abs()) {
            let l = &lambda + &dir;
            let s = dual_state(g, &l, eps);
            if s.grad.norm() < state.grad.norm() {
                (s, l)
            } else {
                break;
            }
        } else {
            let mut step = 1.0;
            let mut accepted = None;
            while step > 1e-14 {
                let trial = &lambda + &dir * step;
                let value = dual_value(g, &trial, eps);
                if value >= state.value {
                    accepted = Some(trial);
                    break;
                }
                step *= 0.5;
            }
            match accepted {
                Some(l) => (dual_state(g, &l, eps), l),
                None => break,
            }
        };
        (state, lambda) = next;
        if lambda.norm() > cap {
            diverged = true;
            break;
        }
    }
    if !converged && !diverged && state.grad.norm() <= opts.tol {
        converged = true;
    }
    Ok(solution_from(g, lambda, state, converged, diverged, iterations, eps))
}

fn solution_from(
    g: &DMatrix<f64>,
    lambda: DVector<f64>,
    state: DualState,
    converged: bool,
    diverged: bool,
    iterations: usize,
    eps: f64,
) -> ElSolution {
    let n = g.nrows() as f64;
    let z = g * &lambda;
    let weights: Vec<f64> = z.iter().map(|&zi| 1.0 / (n * (1.0 + zi))).collect();
    let inside = z.iter().all(|&zi| 1.0 + zi >= eps);
    ElSolution {
        lambda: lambda.iter().copied().collect(),
        weights,
        loglik: state.value,
        converged: converged && !diverged,
        iterations,
        grad_norm: state.grad.norm(),
        feasible: !diverged && inside,
    }
}

/// Profile empirical log-likelihood `l_E(beta)` with the auxiliary block
/// cached across parameter values and `lambda` warm-started from the last
/// feasible solve.
#[derive(Debug, Clone)]
pub struct ProfileLikelihood<'a> {
    data: &'a TrialDataset,
    spec: &'a ConstraintSpec,
    aux: AuxColumns,
    opts: InnerOptions,
    warm: Option<DVector<f64>>,
}

/// Constraint set and inner solution at one parameter value.
#[derive(Debug, Clone)]
pub struct ProfilePoint {
    pub beta: Vec<f64>,
    pub set: EstimatingFunctionSet,
    pub solution: ElSolution,
}

impl<'a> ProfileLikelihood<'a> {
    pub fn new(data: &'a TrialDataset, spec: &'a ConstraintSpec) -> Result<Self> {
        let check = spec.validate(data)?;
        if check.growth_warning {
            log::warn!(
                "{} constraints for {} subjects: r^3 >= n, asymptotic calibration may be poor",
                check.r,
                data.n()
            );
        }
        let aux = AuxColumns::build(data, spec)?;
        Ok(Self {
            data,
            spec,
            aux,
            opts: InnerOptions::default(),
            warm: None,
        })
    }

    pub fn data(&self) -> &TrialDataset {
        self.data
    }

    pub fn spec(&self) -> &ConstraintSpec {
        self.spec
    }

    pub fn q(&self) -> usize {
        self.data.k_arms()
    }

    pub fn aux(&self) -> &AuxColumns {
        &self.aux
    }

    pub fn set_inner_options(&mut self, opts: InnerOptions) {
        self.opts = opts;
    }

    pub fn constraints(&self, beta: &[f64]) -> Result<EstimatingFunctionSet> {
        EstimatingFunctionSet::from_parts(self.data, self.spec.link, beta, &self.aux)
    }

    /// Solves the inner problem at `beta`.
    pub fn evaluate(&mut self, beta: &[f64]) -> Result<ProfilePoint> {
        let set = self.constraints(beta)?;
        let mut solution = solve_lambda_from(&set.g, self.warm.as_ref(), self.opts)?;
        if !solution.is_usable() && self.warm.is_some() {
            let cold = solve_lambda_from(&set.g, None, self.opts)?;
            if cold.is_usable() || !solution.converged {
                solution = cold;
            }
        }
        if solution.is_usable() {
            self.warm = Some(DVector::from_column_slice(&solution.lambda));
        }
        Ok(ProfilePoint {
            beta: beta.to_vec(),
            set,
            solution,
        })
    }

    /// Envelope gradient `sum_i lambda' (dg_i/d beta) / (1 + lambda' g_i)`.
    pub fn gradient(&self, point: &ProfilePoint) -> Result<DVector<f64>> {
        envelope_gradient(&point.set, &point.solution)
    }
}

fn envelope_gradient(set: &EstimatingFunctionSet, solution: &ElSolution) -> Result<DVector<f64>> {
    if !solution.is_usable() {
        return Err(Error::Contract(
            "profile gradient needs a converged, feasible inner solution".into(),
        ));
    }
    let lambda = DVector::from_column_slice(&solution.lambda);
    let lj = set.lambda_jacobian(&lambda);
    let z = &set.g * &lambda;
    let eps = 1.0 / set.n() as f64;
    let w = DVector::from_iterator(z.len(), z.iter().map(|&zi| log_star(1.0 + zi, eps).1));
    Ok(lj.tr_mul(&w))
}

/// `l_E(beta)` from a cold start.
pub fn profile_loglik(data: &TrialDataset, spec: &ConstraintSpec, beta: &[f64]) -> Result<ElSolution> {
    let mut profile = ProfileLikelihood::new(data, spec)?;
    Ok(profile.evaluate(beta)?.solution)
}

/// Gradient of `l_E` at `beta` given the inner solution there.
pub fn profile_gradient(
    data: &TrialDataset,
    spec: &ConstraintSpec,
    beta: &[f64],
    solution: &ElSolution,
) -> Result<DVector<f64>> {
    if !solution.is_usable() {
        return Err(Error::Contract(
            "profile gradient needs a converged, feasible inner solution".into(),
        ));
    }
    let profile = ProfileLikelihood::new(data, spec)?;
    let set = profile.constraints(beta)?;
    envelope_gradient(&set, solution)
}
