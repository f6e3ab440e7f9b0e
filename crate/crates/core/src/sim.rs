//! Simulated two-arm trials with a binary outcome, true marginal
//! parameters by quadrature, and Monte Carlo experiments comparing
//! constraint recipes.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::dist::normal_quantile;
use crate::equations::{assemble, logistic, logit, ConstraintSpec, Link};
use crate::error::{Error, Result};
use crate::inference::{information_matrix, power_analytic, ElEstimator, MeleResult};
use crate::quadrature::expect_normal_adaptive;

/// One normal covariate entering the conditional logit linearly or squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub sigma: f64,
    #[serde(default)]
    pub quadratic: bool,
}

/// `logit P(Y=1 | Z=g, X) = intercept + sum_c slopes[c] T_c(X_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub pi: Vec<f64>,
    pub covariates: Vec<Covariate>,
    pub arms: Vec<ArmModel>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario {}: {m}", self.name)));
        if self.arms.len() < 2 || self.pi.len() != self.arms.len() {
            return bad("need at least two arms and one allocation probability per arm".into());
        }
        if (self.pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.pi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return bad(format!("allocation probabilities {:?} must lie in (0,1) and sum to 1", self.pi));
        }
        if self.n < self.arms.len() + 2 {
            return bad(format!("sample size {} is too small", self.n));
        }
        if self.covariates.iter().any(|c| !(c.sigma > 0.0 && c.sigma.is_finite())) {
            return bad("covariate standard deviations must be positive".into());
        }
        for (g, a) in self.arms.iter().enumerate() {
            if a.slopes.len() != self.covariates.len() {
                return bad(format!("arm {g} has {} slopes for {} covariates", a.slopes.len(), self.covariates.len()));
            }
            if !a.intercept.is_finite() || a.slopes.iter().any(|s| !s.is_finite()) {
                return bad(format!("arm {g} has non-finite coefficients"));
            }
        }
        Ok(())
    }

    /// `linear_x`, `quadratic_x` or `two_covariates`.
    pub fn family(&self) -> &'static str {
        match self.covariates.as_slice() {
            [c] if c.quadratic => "quadratic_x",
            [_] => "linear_x",
            _ => "two_covariates",
        }
    }

    pub fn linear_predictor(&self, arm: usize, x: &[f64]) -> f64 {
        let a = &self.arms[arm];
        a.intercept
            + self
                .covariates
                .iter()
                .zip(&a.slopes)
                .zip(x)
                .map(|((c, s), &v)| s * if c.quadratic { v * v } else { v })
                .sum::<f64>()
    }
}

/// A labelled constraint recipe compared in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Method {
    pub label: String,
    pub spec: ConstraintSpec,
}

impl Method {
    pub fn marginal() -> Self {
        Self {
            label: "marginal".into(),
            spec: ConstraintSpec::marginal(Link::Logit),
        }
    }

    /// Constant plus first-order sin/cos on each covariate: "5 Fourier" with
    /// one covariate, "7 Fourier" with two.
    pub fn fourier(covariates: usize, order: u32) -> Self {
        let covs: Vec<usize> = (0..covariates).collect();
        let spec = ConstraintSpec::fourier(Link::Logit, 1, &covs, order);
        Self {
            label: format!("{} Fourier", 2 + spec.aux_terms.len()),
            spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub scenario: Scenario,
    pub methods: Vec<Method>,
}

/// `(name, description, covariates as (sigma, quadratic), arm 0 (intercept, slopes), arm 1)`.
type PresetRow = (&'static str, &'static str, &'static [(f64, bool)], (f64, &'static [f64]), (f64, &'static [f64]));

const PRESETS: &[PresetRow] = &[
    ("table1-sd05", "logit linear in X ~ N(0, 0.5^2)", &[(0.5, false)], (0.3, &[1.0]), (1.0, &[1.5])),
    ("table1-sd1", "logit linear in X ~ N(0, 1)", &[(1.0, false)], (0.3, &[1.0]), (1.0, &[1.5])),
    ("table1-sd2", "logit linear in X ~ N(0, 2^2)", &[(2.0, false)], (0.3, &[1.0]), (1.0, &[1.5])),
    ("table2-sd05", "logit quadratic in X ~ N(0, 0.5^2)", &[(0.5, true)], (0.3, &[1.0]), (1.0, &[1.5])),
    ("table2-sd1", "logit quadratic in X ~ N(0, 1)", &[(1.0, true)], (0.3, &[1.0]), (1.0, &[1.5])),
    ("table3-a", "X1 ~ N(0,1) linear, X2 ~ N(0,2^2) linear", &[(1.0, false), (2.0, false)], (0.3, &[1.0, 2.0]), (1.0, &[1.5, 1.5])),
    ("table3-b", "X1 ~ N(0,1) squared, X2 ~ N(0,2^2) linear", &[(1.0, true), (2.0, false)], (0.3, &[1.0, 2.0]), (1.0, &[1.5, 1.5])),
    ("table3-c", "X1 ~ N(0,0.5^2) squared, X2 ~ N(0,1) squared", &[(0.5, true), (1.0, true)], (0.3, &[1.0, 2.0]), (1.0, &[1.5, 1.5])),
    ("table4-sd05", "power, logit linear in X ~ N(0, 0.5^2)", &[(0.5, false)], (0.3, &[3.0]), (1.1, &[1.0])),
    ("table4-sd1", "power, logit linear in X ~ N(0, 1)", &[(1.0, false)], (0.3, &[3.0]), (1.15, &[1.0])),
    ("table4-sd2", "power, logit linear in X ~ N(0, 2^2)", &[(2.0, false)], (0.1515, &[3.0]), (1.4, &[1.0])),
    ("table5-sd05", "power, logit quadratic in X ~ N(0, 0.5^2)", &[(0.5, true)], (0.3, &[3.0]), (1.7, &[1.0])),
    ("table5-sd1", "power, logit quadratic in X ~ N(0, 1)", &[(1.0, true)], (0.3, &[1.0]), (1.0, &[2.0])),
    ("table6-a", "power, X1 ~ N(0,1) linear, X2 ~ N(0,2^2) linear", &[(1.0, false), (2.0, false)], (0.1952, &[1.0, 2.0]), (2.1434, &[1.5, 1.5])),
    ("table6-b", "power, X1 ~ N(0,1) squared, X2 ~ N(0,2^2) linear", &[(1.0, true), (2.0, false)], (-0.246, &[1.0, 2.0]), (0.9073, &[1.5, 1.5])),
    ("table6-c", "power, X1 ~ N(0,0.5^2) squared, X2 ~ N(0,1) squared", &[(0.5, true), (1.0, true)], (-0.06, &[1.0, 2.0]), (0.9444, &[1.5, 1.5])),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

/// Preset names with one-line descriptions, for help text.
pub fn preset_catalog() -> Vec<(&'static str, &'static str)> {
    PRESETS.iter().map(|p| (p.0, p.1)).collect()
}

/// Named scenario with its compared methods (marginal and the Fourier recipe).
pub fn preset(name: &str) -> Result<Preset> {
    let row = PRESETS
        .iter()
        .find(|p| p.0 == name)
        .ok_or_else(|| Error::Config(format!("unknown preset '{name}'; known presets: {}", preset_names().join(", "))))?;
    let (name, description, covs, a0, a1) = *row;
    let scenario = Scenario {
        name: name.into(),
        n: 200,
        pi: vec![0.5, 0.5],
        covariates: covs.iter().map(|&(sigma, quadratic)| Covariate { sigma, quadratic }).collect(),
        arms: [a0, a1]
            .iter()
            .map(|&(intercept, slopes)| ArmModel {
                intercept,
                slopes: slopes.to_vec(),
            })
            .collect(),
    };
    let methods = vec![Method::marginal(), Method::fourier(covs.len(), 1)];
    Ok(Preset {
        name,
        description,
        scenario,
        methods,
    })
}

/// Random stream for replication `rep` under `seed`; independent of the
/// order in which replications run.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// One simulated trial, fully determined by `seed`.
pub fn generate(scenario: &Scenario, seed: u64) -> Result<TrialDataset> {
    generate_replication(scenario, seed, 0)
}

pub fn generate_replication(scenario: &Scenario, seed: u64, rep: u64) -> Result<TrialDataset> {
    scenario.validate()?;
    let mut rng = replication_rng(seed, rep);
    let n = scenario.n;
    let d = scenario.covariates.len();
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    let mut x = vec![Vec::with_capacity(n); d];
    let mut row = vec![0.0; d];
    for _ in 0..n {
        let u: f64 = rng.random();
        let mut arm = scenario.pi.len() - 1;
        let mut acc = 0.0;
        for (g, p) in scenario.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                arm = g;
                break;
            }
        }
        for (c, cov) in scenario.covariates.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            row[c] = cov.sigma * e;
            x[c].push(row[c]);
        }
        let p = logistic(scenario.linear_predictor(arm, &row));
        y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        z.push(arm);
    }
    TrialDataset::new(y, z, x, scenario.pi.clone())
}

/// Marginal event probability per arm, `E_X logistic(eta_g(X))`.
pub fn arm_probabilities(scenario: &Scenario) -> Result<Vec<f64>> {
    scenario.validate()?;
    let sigmas: Vec<f64> = scenario.covariates.iter().map(|c| c.sigma).collect();
    (0..scenario.arms.len())
        .map(|g| expect_normal_adaptive(&sigmas, |x| logistic(scenario.linear_predictor(g, x))))
        .collect()
}

/// True marginal parameters: reference-arm log-odds, then log-odds ratios.
pub fn true_beta(scenario: &Scenario) -> Result<Vec<f64>> {
    let p = arm_probabilities(scenario)?;
    let l0 = logit(p[0]);
    Ok(p.iter().enumerate().map(|(g, &pg)| if g == 0 { l0 } else { logit(pg) - l0 }).collect())
}

/// Per-observation information `D' S^-1 D` of a recipe at the true
/// parameter, estimated from one large simulated sample.
pub fn information_oracle(scenario: &Scenario, spec: &ConstraintSpec, n_large: usize, seed: u64) -> Result<DMatrix<f64>> {
    let big = Scenario {
        n: n_large,
        ..scenario.clone()
    };
    let data = generate(&big, seed)?;
    let beta = true_beta(scenario)?;
    information_matrix(&assemble(&data, spec, &beta)?)
}

/// Asymptotic power of the level-`alpha` profile test of `beta_2 = 0` at
/// the scenario's sample size, with information from [`information_oracle`].
pub fn power_oracle(scenario: &Scenario, spec: &ConstraintSpec, alpha: f64, n_large: usize, seed: u64) -> Result<f64> {
    let a = information_oracle(scenario, spec, n_large, seed)?;
    let beta = true_beta(scenario)?;
    let root_n = (scenario.n as f64).sqrt();
    let h: Vec<f64> = beta.iter().enumerate().map(|(j, b)| if j == 0 { 0.0 } else { root_n * b }).collect();
    power_analytic(&a, &h, alpha, Some(&[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRow {
    pub method: String,
    pub parameter: String,
    pub true_beta: f64,
    pub mc_bias: f64,
    /// Mean over replications of the sandwich standard error.
    pub mean_sandwich_se: f64,
    pub mc_std: f64,
    pub cov_prob: f64,
    pub avlen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestingRow {
    pub method: String,
    pub beta10: f64,
    pub beta20: f64,
    /// Acceptance rate of the profile test of `beta_2 = beta20`.
    pub cov_prob: f64,
    /// Rejection rate of the profile test of `beta_2 = 0`.
    pub power: f64,
    /// Null values outside the likelihood support, counted as rejections.
    pub infeasible_nulls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
    pub reps: usize,
    pub level: f64,
    /// Replications in which some method failed; excluded for every method.
    pub failures: usize,
    pub rows: Vec<EstimationRow>,
    pub tests: Vec<TestingRow>,
}

#[derive(Debug, Clone)]
struct MethodDraw {
    beta: Vec<f64>,
    se: Vec<f64>,
    accept_true: bool,
    reject_zero: bool,
    infeasible: usize,
}

fn run_method(data: &TrialDataset, method: &Method, truth: &[f64], alpha: f64) -> Result<MethodDraw> {
    let mut est = ElEstimator::new(data, &method.spec)?;
    let fit: MeleResult = est.fit(None)?;
    if !fit.converged {
        return Err(Error::Numeric("fit did not converge".into()));
    }
    let se = fit.se();
    if se.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite standard error".into()));
    }
    let at_truth = est.test_profile(&fit, &[(1, truth[1])])?;
    let at_zero = est.test_profile(&fit, &[(1, 0.0)])?;
    Ok(MethodDraw {
        beta: fit.beta_hat.clone(),
        se,
        accept_true: !at_truth.rejects(alpha),
        reject_zero: at_zero.rejects(alpha),
        infeasible: usize::from(!at_truth.feasible) + usize::from(!at_zero.feasible),
    })
}

/// Runs `reps` replications with `workers` threads. Replication `r` uses
/// its own random stream, and results are reduced in index order, so the
/// report does not depend on `workers`.
pub fn run_experiment(
    scenario: &Scenario,
    methods: &[Method],
    reps: usize,
    seed: u64,
    level: f64,
    workers: usize,
) -> Result<SimulationReport> {
    if reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods to compare".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level {level} is not in (0,1)")));
    }
    scenario.validate()?;
    let truth = true_beta(scenario)?;
    let alpha = 1.0 - level;
    let z = normal_quantile((1.0 + level) / 2.0)?;
    let one = |rep: usize| -> Option<Vec<MethodDraw>> {
        let data = generate_replication(scenario, seed, rep as u64).ok()?;
        let mut out = Vec::with_capacity(methods.len());
        for m in methods {
            match run_method(&data, m, &truth, alpha) {
                Ok(d) => out.push(d),
                Err(e) => {
                    log::debug!("replication {rep}, {}: {e}", m.label);
                    return None;
                }
            }
        }
        Some(out)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let draws: Vec<Option<Vec<MethodDraw>>> = pool.install(|| (0..reps).into_par_iter().map(one).collect());
    let ok: Vec<&Vec<MethodDraw>> = draws.iter().flatten().collect();
    let failures = reps - ok.len();
    let used = ok.len() as f64;

    let mut rows = Vec::new();
    let mut tests = Vec::new();
    if !ok.is_empty() {
        for (mi, m) in methods.iter().enumerate() {
            for (j, &tb) in truth.iter().enumerate() {
                let est: Vec<f64> = ok.iter().map(|d| d[mi].beta[j]).collect();
                let se: Vec<f64> = ok.iter().map(|d| d[mi].se[j]).collect();
                let mean = est.iter().sum::<f64>() / used;
                let var = if ok.len() > 1 {
                    est.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (used - 1.0)
                } else {
                    0.0
                };
                let covered = est.iter().zip(&se).filter(|(b, s)| (*b - tb).abs() <= z * *s).count();
                rows.push(EstimationRow {
                    method: m.label.clone(),
                    parameter: format!("beta{}", j + 1),
                    true_beta: tb,
                    mc_bias: mean - tb,
                    mean_sandwich_se: se.iter().sum::<f64>() / used,
                    mc_std: var.sqrt(),
                    cov_prob: covered as f64 / used,
                    avlen: 2.0 * z * se.iter().sum::<f64>() / used,
                });
            }
            tests.push(TestingRow {
                method: m.label.clone(),
                beta10: truth[0],
                beta20: truth[1],
                cov_prob: ok.iter().filter(|d| d[mi].accept_true).count() as f64 / used,
                power: ok.iter().filter(|d| d[mi].reject_zero).count() as f64 / used,
                infeasible_nulls: ok.iter().map(|d| d[mi].infeasible).sum(),
            });
        }
    }
    Ok(SimulationReport {
        scenario: scenario.name.clone(),
        n: scenario.n,
        seed,
        reps,
        level,
        failures,
        rows,
        tests,
    })
}

impl SimulationReport {
    pub fn row(&self, method: &str, parameter: &str) -> Option<&EstimationRow> {
        self.rows.iter().find(|r| r.method == method && r.parameter == parameter)
    }

    pub fn test(&self, method: &str) -> Option<&TestingRow> {
        self.tests.iter().find(|r| r.method == method)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {}  n={}  reps={}  seed={}  level={}  failed replications={}",
            self.scenario, self.n, self.reps, self.seed, self.level, self.failures
        );
        let _ = writeln!(
            s,
            "\n{:<12} {:<6} {:>9} {:>9} {:>12} {:>9} {:>9} {:>9}",
            "method", "param", "true", "MC bias", "mean sw SE", "MC std", "CovProb", "avlen"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:<6} {:>9.4} {:>9.4} {:>12.4} {:>9.4} {:>9.4} {:>9.4}",
                r.method, r.parameter, r.true_beta, r.mc_bias, r.mean_sandwich_se, r.mc_std, r.cov_prob, r.avlen
            );
        }
        let _ = writeln!(
            s,
            "\n{:<12} {:>9} {:>9} {:>9} {:>9} {:>11}",
            "method", "beta10", "beta20", "CovProb", "Power", "infeasible"
        );
        for t in &self.tests {
            let _ = writeln!(
                s,
                "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>11}",
                t.method, t.beta10, t.beta20, t.cov_prob, t.power, t.infeasible_nulls
            );
        }
        s
    }

    /// One CSV table: estimation rows then testing rows, unused cells empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "kind", "method", "parameter", "true_beta", "mc_bias", "mean_sandwich_se", "mc_std", "cov_prob", "avlen",
            "beta10", "beta20", "power", "infeasible_nulls",
        ])?;
        let f = |v: f64| format!("{v:?}");
        for r in &self.rows {
            w.write_record([
                "estimation".into(),
                r.method.clone(),
                r.parameter.clone(),
                f(r.true_beta),
                f(r.mc_bias),
                f(r.mean_sandwich_se),
                f(r.mc_std),
                f(r.cov_prob),
                f(r.avlen),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        for t in &self.tests {
            w.write_record([
                "testing".into(),
                t.method.clone(),
                "beta2".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                f(t.cov_prob),
                String::new(),
                f(t.beta10),
                f(t.beta20),
                f(t.power),
                t.infeasible_nulls.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// `{"simulation": {...}}` with every number at full precision.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({ "simulation": self })).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Wrapper {
            simulation: SimulationReport,
        }
        serde_json::from_str::<Wrapper>(text)
            .map(|w| w.simulation)
            .map_err(|e| Error::Schema(format!("simulation report: {e}")))
    }
}
