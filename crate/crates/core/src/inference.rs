//! Maximum empirical likelihood estimation, sandwich variance, Wald
//! intervals, likelihood-ratio tests and analytic power.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::dist::{chi2_quantile, chi2_sf, noncentral_chi2_cdf, normal_quantile};
use crate::el::{ElSolution, ProfileLikelihood, ProfilePoint};
use crate::equations::{logit, ConstraintSpec, EstimatingFunctionSet, Link};
use crate::error::{Error, Result};

/// Bound on initial log-odds when an arm has no events or only events.
pub const LOGIT_CLIP: f64 = 10.0;

/// LR statistics in `[-NEGATIVE_LR_TOL, 0)` are rounding noise and clamp to 0.
pub const NEGATIVE_LR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Gradient criterion `||grad|| <= grad_tol (1 + |l_E|)`.
    pub grad_tol: f64,
    /// Final step length criterion.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Random perturbations tried when the start is infeasible.
    pub perturbations: usize,
    /// Seed for those perturbations.
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            step_tol: 1e-9,
            max_iter: 200,
            perturbations: 5,
            seed: 0x5eed,
        }
    }
}

/// Maximum empirical likelihood fit.
#[derive(Debug, Clone)]
pub struct MeleResult {
    pub beta_hat: Vec<f64>,
    /// Per-sample covariance `n^-1 (D' S^-1 D)^-1`.
    pub vcov: DMatrix<f64>,
    pub loglik_at_opt: f64,
    pub inner_diag: ElSolution,
    pub outer_iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub warnings: Vec<String>,
}

impl MeleResult {
    pub fn se(&self) -> Vec<f64> {
        (0..self.vcov.nrows()).map(|i| self.vcov[(i, i)].sqrt()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    FullVector,
    ProfileSubset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `+inf` when the null value is incompatible with the data.
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub kind: TestKind,
    pub noncentrality_used: Option<f64>,
    /// False when the null value lies outside the empirical likelihood
    /// support (zero outside the convex hull); `p_value` is then 0.
    pub feasible: bool,
}

impl TestResult {
    fn from_statistic(statistic: f64, df: usize, kind: TestKind) -> Self {
        Self {
            statistic,
            df,
            p_value: chi2_sf(statistic, df as u32),
            kind,
            noncentrality_used: None,
            feasible: true,
        }
    }

    fn infeasible(df: usize, kind: TestKind) -> Self {
        Self {
            statistic: f64::INFINITY,
            df,
            p_value: 0.0,
            kind,
            noncentrality_used: None,
            feasible: false,
        }
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// Closed-form fit of the marginal model: arm means (identity) or arm
/// log-odds (logit, clipped to `|eta| <= 10`), in contrast coding.
pub fn closed_form_init(data: &TrialDataset, link: Link) -> Result<Vec<f64>> {
    let means = data.arm_means();
    let mut eta = Vec::with_capacity(means.len());
    for (k, m) in means.iter().enumerate() {
        let m = m.ok_or_else(|| Error::Spec(format!("arm {k} has no subjects")))?;
        eta.push(match link {
            Link::Identity => m,
            Link::Logit => {
                if m <= 0.0 {
                    -LOGIT_CLIP
                } else if m >= 1.0 {
                    LOGIT_CLIP
                } else {
                    logit(m).clamp(-LOGIT_CLIP, LOGIT_CLIP)
                }
            }
        });
    }
    Ok(eta.iter().enumerate().map(|(k, &e)| if k == 0 { e } else { e - eta[0] }).collect())
}

/// `D' S^-1 D` from the constraint set at one parameter value.
pub fn information_matrix(set: &EstimatingFunctionSet) -> Result<DMatrix<f64>> {
    let d = set.mean_jacobian();
    let s = set.second_moment();
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Numeric("constraint second-moment matrix is singular".into()))?;
    let sd = chol.solve(&d);
    let mut m = d.tr_mul(&sd);
    symmetrize(&mut m);
    Ok(m)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

fn sandwich(set: &EstimatingFunctionSet) -> Result<DMatrix<f64>> {
    let m = information_matrix(set)?;
    let inv = m
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Numeric("information matrix is singular".into()))?;
    let mut v = inv / set.n() as f64;
    symmetrize(&mut v);
    Ok(v)
}

struct Evaluated {
    theta: DVector<f64>,
    value: f64,
    grad: DVector<f64>,
    point: ProfilePoint,
}

struct OuterOutcome {
    best: Evaluated,
    iterations: usize,
    converged: bool,
}

/// Minimizes `l_E` over the coordinates in `free`, the others held at
/// their values in `base`.
struct Minimizer<'p, 'a> {
    profile: &'p mut ProfileLikelihood<'a>,
    base: Vec<f64>,
    free: Vec<usize>,
    opts: FitOptions,
}

impl<'p, 'a> Minimizer<'p, 'a> {
    fn full(&self, theta: &DVector<f64>) -> Vec<f64> {
        let mut beta = self.base.clone();
        for (k, &j) in self.free.iter().enumerate() {
            beta[j] = theta[k];
        }
        beta
    }

    fn evaluate(&mut self, theta: &DVector<f64>) -> Result<Option<Evaluated>> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let beta = self.full(theta);
        let point = self.profile.evaluate(&beta)?;
        if !point.solution.is_usable() {
            return Ok(None);
        }
        let g = self.profile.gradient(&point)?;
        let grad = DVector::from_iterator(self.free.len(), self.free.iter().map(|&j| g[j]));
        Ok(Some(Evaluated {
            theta: theta.clone(),
            value: point.solution.loglik,
            grad,
            point,
        }))
    }

    fn value_at(&mut self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.evaluate(theta)?.map_or(f64::INFINITY, |e| e.value))
    }

    /// Inverse of the free block of `n D' S^-1 D`, the expected curvature of `l_E`.
    fn curvature_inverse(&self, at: &Evaluated) -> DMatrix<f64> {
        let k = self.free.len();
        let fallback = DMatrix::identity(k, k) * (1.0 / at.point.set.n() as f64);
        let Ok(m) = information_matrix(&at.point.set) else {
            return fallback;
        };
        let n = at.point.set.n() as f64;
        let block = DMatrix::from_fn(k, k, |a, b| n * m[(self.free[a], self.free[b])]);
        block.cholesky().map(|c| c.inverse()).unwrap_or(fallback)
    }

    fn start(&mut self, init: &DVector<f64>) -> Result<Evaluated> {
        if let Some(e) = self.evaluate(init)? {
            return Ok(e);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        for _ in 0..self.opts.perturbations {
            let trial = init.map(|v| v + 0.1 * (1.0 + v.abs()) * (rng.random::<f64>() * 2.0 - 1.0));
            if let Some(e) = self.evaluate(&trial)? {
                return Ok(e);
            }
        }
        Err(Error::Infeasible(format!(
            "no feasible start near {:?}: zero lies outside the convex hull of the constraints",
            self.full(init)
        )))
    }

    fn golden_section(&mut self, cur: &Evaluated, h_inv: &DMatrix<f64>) -> Result<Option<Evaluated>> {
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        let mut best_theta = cur.theta.clone();
        let mut best = cur.value;
        for j in 0..self.free.len() {
            let h = h_inv[(j, j)].abs().sqrt().clamp(1e-8, 1.0);
            let (mut a, mut b) = (-2.0 * h, 2.0 * h);
            let along = |t: f64, s: &mut Self| {
                let mut th = best_theta.clone();
                th[j] += t;
                s.value_at(&th)
            };
            let mut c = b - INV_PHI * (b - a);
            let mut d = a + INV_PHI * (b - a);
            let mut fc = along(c, self)?;
            let mut fd = along(d, self)?;
            for _ in 0..40 {
                if fc < fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INV_PHI * (b - a);
                    fc = along(c, self)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INV_PHI * (b - a);
                    fd = along(d, self)?;
                }
            }
            let (t, ft) = if fc < fd { (c, fc) } else { (d, fd) };
            if ft < best {
                best = ft;
                best_theta[j] += t;
            }
        }
        if best < cur.value {
            self.evaluate(&best_theta)
        } else {
            Ok(None)
        }
    }

    fn run(&mut self, init: &DVector<f64>) -> Result<OuterOutcome> {
        let mut cur = self.start(init)?;
        let mut h_inv = self.curvature_inverse(&cur);
        let mut last_step = f64::INFINITY;
        let mut radius = 1.0_f64;
        let mut iterations = 0;
        let grad_ok = |e: &Evaluated, tol: f64| e.grad.norm() <= tol * (1.0 + e.value.abs());
        while iterations < self.opts.max_iter {
            if grad_ok(&cur, self.opts.grad_tol) && last_step < self.opts.step_tol {
                break;
            }
            iterations += 1;
            let mut dir = -(&h_inv * &cur.grad);
            if dir.dot(&cur.grad) >= 0.0 {
                h_inv = self.curvature_inverse(&cur);
                dir = -(&h_inv * &cur.grad);
                if dir.dot(&cur.grad) >= 0.0 {
                    dir = -cur.grad.clone();
                }
            }
            let norm = dir.norm();
            if norm > radius {
                dir *= radius / norm;
            }
            let slope = dir.dot(&cur.grad);
            let polishing = grad_ok(&cur, self.opts.grad_tol);
            let noise = 1e-12 * (1.0 + cur.value.abs());
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial = &cur.theta + &dir * t;
                if let Some(e) = self.evaluate(&trial)? {
                    let armijo = e.value <= cur.value + 1e-4 * t * slope;
                    let polish = polishing && e.value <= cur.value + noise && e.grad.norm() < cur.grad.norm();
                    if armijo || polish {
                        accepted = Some(e);
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some(next) => {
                    let s = &next.theta - &cur.theta;
                    let y = &next.grad - &cur.grad;
                    let sy = s.dot(&y);
                    if sy > 1e-12 * s.norm() * y.norm() {
                        let rho = 1.0 / sy;
                        let k = s.len();
                        let i = DMatrix::<f64>::identity(k, k);
                        let left = &i - (&s * y.transpose()) * rho;
                        let right = &i - (&y * s.transpose()) * rho;
                        h_inv = left * &h_inv * right + (&s * s.transpose()) * rho;
                    }
                    last_step = s.norm();
                    radius = if t == 1.0 {
                        (2.0 * radius).min(10.0)
                    } else {
                        (radius * 0.5).max(1e-3)
                    };
                    cur = next;
                }
                None => match self.golden_section(&cur, &h_inv)? {
                    Some(next) => {
                        last_step = (&next.theta - &cur.theta).norm();
                        cur = next;
                        h_inv = self.curvature_inverse(&cur);
                    }
                    None => break,
                },
            }
        }
        let converged = grad_ok(&cur, self.opts.grad_tol);
        Ok(OuterOutcome {
            best: cur,
            iterations,
            converged,
        })
    }
}

/// Estimator bound to one dataset and constraint recipe; reuses the cached
/// auxiliary block across fits and tests.
pub struct ElEstimator<'a> {
    profile: ProfileLikelihood<'a>,
    opts: FitOptions,
}

impl<'a> ElEstimator<'a> {
    pub fn new(data: &'a TrialDataset, spec: &'a ConstraintSpec) -> Result<Self> {
        Ok(Self {
            profile: ProfileLikelihood::new(data, spec)?,
            opts: FitOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: FitOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn q(&self) -> usize {
        self.profile.q()
    }

    pub fn profile_mut(&mut self) -> &mut ProfileLikelihood<'a> {
        &mut self.profile
    }

    fn minimize(&mut self, base: Vec<f64>, free: Vec<usize>) -> Result<OuterOutcome> {
        let init = DVector::from_iterator(free.len(), free.iter().map(|&j| base[j]));
        let mut m = Minimizer {
            profile: &mut self.profile,
            base,
            free,
            opts: self.opts,
        };
        m.run(&init)
    }

    /// Maximum empirical likelihood estimate.
    pub fn fit(&mut self, init: Option<&[f64]>) -> Result<MeleResult> {
        let q = self.q();
        let init = match init {
            Some(b) if b.len() == q => b.to_vec(),
            Some(b) => {
                return Err(Error::Domain(format!(
                    "initial value has length {}, expected {q}",
                    b.len()
                )))
            }
            None => closed_form_init(self.profile.data(), self.profile.spec().link)?,
        };
        let outcome = self.minimize(init, (0..q).collect())?;
        self.finish(outcome)
    }

    fn finish(&self, outcome: OuterOutcome) -> Result<MeleResult> {
        let best = outcome.best;
        let beta_hat = best.point.beta.clone();
        let vcov = sandwich(&best.point.set)?;
        let mut warnings = Vec::new();
        if self.profile.spec().link == Link::Logit {
            for k in 0..beta_hat.len() {
                let eta = if k == 0 { beta_hat[0] } else { beta_hat[0] + beta_hat[k] };
                if eta.abs() >= LOGIT_CLIP {
                    warnings.push(format!(
                        "arm {k}: fitted log-odds {eta:.2} at the clip bound; outcome may be separated"
                    ));
                }
            }
        }
        if !outcome.converged {
            warnings.push("outer optimization did not meet the gradient criterion".into());
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(MeleResult {
            beta_hat,
            vcov,
            loglik_at_opt: best.value,
            inner_diag: best.point.solution,
            outer_iterations: outcome.iterations,
            converged: outcome.converged,
            gradient_norm: best.grad.norm(),
            warnings,
        })
    }

    /// Minimizes `l_E` with the components in `fixed` pinned. Returns `None`
    /// when no feasible point with those values is found.
    pub fn restricted_fit(
        &mut self,
        fit: &MeleResult,
        fixed: &[(usize, f64)],
    ) -> Result<Option<(Vec<f64>, f64)>> {
        let q = self.q();
        if fixed.is_empty() || fixed.len() >= q {
            return Err(Error::Contract(format!(
                "a profile test must fix a proper nonempty subset of the {q} parameters"
            )));
        }
        if let Some((j, _)) = fixed.iter().find(|(j, _)| *j >= q) {
            return Err(Error::Contract(format!("parameter index {j} out of range")));
        }
        let free: Vec<usize> = (0..q).filter(|j| !fixed.iter().any(|(f, _)| f == j)).collect();
        let pin = |mut b: Vec<f64>| {
            for &(j, v) in fixed {
                b[j] = v;
            }
            b
        };
        let candidates = [
            pin(fit.beta_hat.clone()),
            pin(closed_form_init(self.profile.data(), self.profile.spec().link)?),
        ];
        // pick the feasible candidate with the smallest objective
        let mut best: Option<(Vec<f64>, f64)> = None;
        for c in candidates {
            let sol = self.profile.evaluate(&c)?.solution;
            if sol.is_usable() && best.as_ref().is_none_or(|(_, v)| sol.loglik < *v) {
                best = Some((c, sol.loglik));
            }
        }
        let start = best.map_or_else(|| pin(fit.beta_hat.clone()), |(b, _)| b);
        match self.minimize(start, free) {
            Ok(o) => Ok(Some((o.best.point.beta, o.best.value))),
            Err(Error::Infeasible(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn statistic(&mut self, fit: &MeleResult, restricted: f64, restart: Vec<f64>) -> Result<(f64, f64)> {
        let mut unrestricted = fit.loglik_at_opt;
        let mut stat = 2.0 * (restricted - unrestricted);
        if stat < -NEGATIVE_LR_TOL {
            // the unrestricted fit stopped short: re-polish from the restricted optimum
            let refit = self.fit(Some(&restart))?;
            unrestricted = unrestricted.min(refit.loglik_at_opt);
            stat = 2.0 * (restricted - unrestricted);
            if stat < -NEGATIVE_LR_TOL {
                return Err(Error::Numeric(format!(
                    "negative likelihood-ratio statistic {stat:e} after re-polishing"
                )));
            }
        }
        Ok((stat.max(0.0), unrestricted))
    }

    /// Full-vector test of `beta = beta0`.
    pub fn test_full(&mut self, fit: &MeleResult, beta0: &[f64]) -> Result<TestResult> {
        let q = self.q();
        if beta0.len() != q {
            return Err(Error::Domain(format!("null value has length {}, expected {q}", beta0.len())));
        }
        let sol = self.profile.evaluate(beta0)?.solution;
        if !sol.is_usable() {
            return Ok(TestResult::infeasible(q, TestKind::FullVector));
        }
        let (stat, _) = self.statistic(fit, sol.loglik, beta0.to_vec())?;
        Ok(TestResult::from_statistic(stat, q, TestKind::FullVector))
    }

    /// Profile test of the components in `fixed`, the rest profiled out.
    pub fn test_profile(&mut self, fit: &MeleResult, fixed: &[(usize, f64)]) -> Result<TestResult> {
        let df = fixed.len();
        let Some((beta_r, value)) = self.restricted_fit(fit, fixed)? else {
            return Ok(TestResult::infeasible(df, TestKind::ProfileSubset));
        };
        let (stat, _) = self.statistic(fit, value, beta_r)?;
        Ok(TestResult::from_statistic(stat, df, TestKind::ProfileSubset))
    }
}

/// Fits the MELE with default options.
pub fn fit_mele(data: &TrialDataset, spec: &ConstraintSpec, init: Option<&[f64]>) -> Result<MeleResult> {
    ElEstimator::new(data, spec)?.fit(init)
}

/// `T = 2 l_E(beta0) - 2 l_E(beta_hat)`, referred to chi-square with `q` df.
pub fn lr_test_full(data: &TrialDataset, spec: &ConstraintSpec, beta0: &[f64]) -> Result<TestResult> {
    let mut est = ElEstimator::new(data, spec)?;
    let fit = est.fit(None)?;
    est.test_full(&fit, beta0)
}

/// Profile likelihood-ratio test of the pinned components.
pub fn lr_test_profile(data: &TrialDataset, spec: &ConstraintSpec, fixed: &[(usize, f64)]) -> Result<TestResult> {
    let mut est = ElEstimator::new(data, spec)?;
    let fit = est.fit(None)?;
    est.test_profile(&fit, fixed)
}

/// Wald interval `beta_j +- z_{(1+level)/2} se_j`.
pub fn wald_interval(fit: &MeleResult, index: usize, level: f64) -> Result<(f64, f64)> {
    if !fit.converged {
        return Err(Error::Contract("Wald interval needs a converged fit".into()));
    }
    if index >= fit.beta_hat.len() {
        return Err(Error::Contract(format!("parameter index {index} out of range")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level {level} is not in (0,1)")));
    }
    let z = normal_quantile((1.0 + level) / 2.0)?;
    let half = z * fit.vcov[(index, index)].sqrt();
    Ok((fit.beta_hat[index] - half, fit.beta_hat[index] + half))
}

/// Asymptotic power of the level-`alpha` LR test under the local
/// alternative `beta0 + h / sqrt(n)`, with information matrix `a`.
///
/// With `subset`, only those components are tested and the rest are
/// nuisance; the noncentrality uses the Schur complement of the nuisance block.
pub fn power_analytic(a: &DMatrix<f64>, h: &[f64], alpha: f64, subset: Option<&[usize]>) -> Result<f64> {
    let q = a.nrows();
    if a.ncols() != q || h.len() != q {
        return Err(Error::Domain("information matrix and shift have mismatched sizes".into()));
    }
    if (a - a.transpose()).abs().max() > 1e-10 * (1.0 + a.abs().max()) {
        return Err(Error::Domain("information matrix is not symmetric".into()));
    }
    if a.clone().cholesky().is_none() {
        return Err(Error::Numeric("information matrix is not positive definite".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("level {alpha} is not in (0,1)")));
    }
    let (ncp, df) = match subset {
        None => {
            let hv = DVector::from_column_slice(h);
            (hv.dot(&(a * &hv)), q)
        }
        Some(s) => {
            if s.is_empty() || s.iter().any(|&j| j >= q) {
                return Err(Error::Domain("bad tested-component subset".into()));
            }
            let rest: Vec<usize> = (0..q).filter(|j| !s.contains(j)).collect();
            let block = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| a[(r[i], c[j])]);
            let a11 = block(s, s);
            let eff = if rest.is_empty() {
                a11
            } else {
                let a12 = block(s, &rest);
                let a22 = block(&rest, &rest);
                let chol = a22
                    .cholesky()
                    .ok_or_else(|| Error::Numeric("nuisance block of the information matrix is singular".into()))?;
                &a11 - &a12 * chol.solve(&a12.transpose())
            };
            let h1 = DVector::from_iterator(s.len(), s.iter().map(|&j| h[j]));
            (h1.dot(&(&eff * &h1)), s.len())
        }
    };
    let crit = chi2_quantile(1.0 - alpha, df as u32)?;
    Ok(1.0 - noncentral_chi2_cdf(crit, df as u32, ncp)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::normal_cdf;

    fn small_binary() -> TrialDataset {
        let y = vec![1., 0., 1., 1., 0., 0., 1., 0., 1., 1., 0., 1.];
        let z = vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1];
        let x = vec![0.1, -0.4, 1.2, 0.8, -1.5, 0.3, 0.9, -0.2, 1.7, 0.5, -1.1, 0.0];
        TrialDataset::new(y, z, vec![x], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn logit_init_clips_degenerate_arms() {
        let d = TrialDataset::new(vec![0., 0., 1., 0.], vec![0, 0, 1, 1], vec![], vec![0.5, 0.5]).unwrap();
        let b = closed_form_init(&d, Link::Logit).unwrap();
        assert_eq!(b[0], -LOGIT_CLIP);
        assert!((b[1] - LOGIT_CLIP).abs() < 1e-12);
    }

    #[test]
    fn just_identified_logit_fit() {
        let d = small_binary();
        let fit = fit_mele(&d, &ConstraintSpec::marginal(Link::Logit), None).unwrap();
        let p0 = 3.0 / 6.0;
        let p1 = 4.0 / 6.0;
        assert!((fit.beta_hat[0] - logit(p0)).abs() < 1e-8);
        assert!((fit.beta_hat[1] - (logit(p1) - logit(p0))).abs() < 1e-8);
        assert!(fit.loglik_at_opt.abs() < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn self_test_is_zero() {
        let d = small_binary();
        let spec = ConstraintSpec::fourier(Link::Logit, 1, &[0], 1).standardized(true);
        let spec = ConstraintSpec { aux_terms: spec.aux_terms[..1].to_vec(), ..spec };
        let mut est = ElEstimator::new(&d, &spec).unwrap();
        let fit = est.fit(None).unwrap();
        let t = est.test_full(&fit, &fit.beta_hat.clone()).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
        let t = est.test_profile(&fit, &[(1, fit.beta_hat[1])]).unwrap();
        assert!(t.statistic < 1e-8);
    }

    #[test]
    fn wald_arithmetic() {
        let fit = MeleResult {
            beta_hat: vec![1.0],
            vcov: DMatrix::from_element(1, 1, 0.04),
            loglik_at_opt: 0.0,
            inner_diag: ElSolution {
                lambda: vec![0.0],
                weights: vec![],
                loglik: 0.0,
                converged: true,
                iterations: 0,
                grad_norm: 0.0,
                feasible: true,
            },
            outer_iterations: 0,
            converged: true,
            gradient_norm: 0.0,
            warnings: vec![],
        };
        let (lo, hi) = wald_interval(&fit, 0, 0.95).unwrap();
        assert!((lo - (1.0 - 1.959964 * 0.2)).abs() < 1e-6);
        assert!((hi - (1.0 + 1.959964 * 0.2)).abs() < 1e-6);
        let (lo50, hi50) = wald_interval(&fit, 0, 0.5).unwrap();
        let ratio = (hi50 - lo50) / (hi - lo);
        let expected = normal_quantile(0.75).unwrap() / normal_quantile(0.975).unwrap();
        assert!((ratio - expected).abs() < 1e-12);
        let mut bad = fit.clone();
        bad.converged = false;
        assert!(matches!(wald_interval(&bad, 0, 0.95), Err(Error::Contract(_))));
    }

    #[test]
    fn power_cases() {
        let one = DMatrix::identity(1, 1);
        assert!((power_analytic(&one, &[0.0], 0.05, None).unwrap() - 0.05).abs() < 1e-12);
        let p = power_analytic(&one, &[3.0], 0.05, None).unwrap();
        let z = normal_quantile(0.975).unwrap();
        let normal = normal_cdf(3.0 - z) + normal_cdf(-3.0 - z);
        assert!((p - normal).abs() < 1e-9);
        assert!((p - 0.8508).abs() < 1e-4);

        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.5, 0.3, 0.0, 0.3, 1.0]);
        let sub = power_analytic(&a, &[1.2, 0.7, -0.4], 0.05, Some(&[0])).unwrap();
        let a11 = DMatrix::from_element(1, 1, 2.0);
        assert!((sub - power_analytic(&a11, &[1.2], 0.05, None).unwrap()).abs() < 1e-14);

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(power_analytic(&singular, &[1.0, 1.0], 0.05, Some(&[0])).is_err());
    }

    #[test]
    fn profile_test_rejects_bad_subsets() {
        let d = small_binary();
        let spec = ConstraintSpec::marginal(Link::Logit);
        let mut est = ElEstimator::new(&d, &spec).unwrap();
        let fit = est.fit(None).unwrap();
        assert!(est.test_profile(&fit, &[]).is_err());
        assert!(est.test_profile(&fit, &[(0, 0.0), (1, 0.0)]).is_err());
    }
}
