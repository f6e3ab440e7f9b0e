//! Stacked estimating functions: the marginal score equations of the
//! arm-indicator model followed by model-free auxiliary constraints of the
//! form `(1{Z=k} - pi_k) h(X)`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{empirical_cdf, TrialDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
}

impl Link {
    /// Mean function and its derivative at the linear predictor.
    pub fn mean(self, eta: f64) -> (f64, f64) {
        match self {
            Link::Identity => (eta, 1.0),
            Link::Logit => {
                let mu = logistic(eta);
                (mu, mu * (1.0 - mu))
            }
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "mean" => Ok(Link::Identity),
            "logit" | "logistic" => Ok(Link::Logit),
            other => Err(Error::Spec(format!("unknown link '{other}'"))),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Identity => "identity",
            Link::Logit => "logit",
        })
    }
}

/// `e^u / (1 + e^u)`, evaluated without overflow.
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Covariate transform used by an auxiliary term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Constant,
    FourierSin,
    FourierCos,
    Legendre,
    Power,
    RawPower,
}

impl Basis {
    fn tag(self) -> &'static str {
        match self {
            Basis::Constant => "const",
            Basis::FourierSin => "fsin",
            Basis::FourierCos => "fcos",
            Basis::Legendre => "leg",
            Basis::Power => "pow",
            Basis::RawPower => "xpow",
        }
    }

    fn uses_covariate(self) -> bool {
        self != Basis::Constant
    }
}

/// Degree-`j` Legendre polynomial by the three-term recurrence.
pub fn legendre(j: u32, u: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, u);
    if j == 0 {
        return prev;
    }
    for k in 1..j {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * u * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// One auxiliary constraint `(1{Z=arm} - pi_arm) h(X_covariate)`.
///
/// `index` and `covariate` are ignored for [`Basis::Constant`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuxTerm {
    pub arm: usize,
    pub basis: Basis,
    pub index: u32,
    pub covariate: usize,
}

impl AuxTerm {
    pub fn constant(arm: usize) -> Self {
        Self {
            arm,
            basis: Basis::Constant,
            index: 0,
            covariate: 0,
        }
    }

    pub fn new(arm: usize, basis: Basis, index: u32, covariate: usize) -> Self {
        if basis == Basis::Constant {
            Self::constant(arm)
        } else {
            Self {
                arm,
                basis,
                index,
                covariate,
            }
        }
    }

    /// `h` applied to a raw covariate value `x` with plug-in CDF value `f`.
    pub fn transform(&self, x: f64, f: f64) -> f64 {
        let j = self.index;
        let u = 2.0 * f - 1.0;
        match self.basis {
            Basis::Constant => 1.0,
            Basis::FourierSin => SQRT_2 * (2.0 * PI * j as f64 * f).sin(),
            Basis::FourierCos => SQRT_2 * (2.0 * PI * j as f64 * f).cos(),
            Basis::Legendre => legendre(j, u),
            Basis::Power => u.powi(j as i32),
            Basis::RawPower => x.powi(j as i32),
        }
    }
}

impl fmt::Display for AuxTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.basis == Basis::Constant {
            write!(f, "const@{}", self.arm)
        } else {
            write!(
                f,
                "{}{}@{}:x{}",
                self.basis.tag(),
                self.index,
                self.arm,
                self.covariate
            )
        }
    }
}

/// Arm part of a descriptor: a single arm or `*` for every treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArmSelector {
    One(usize),
    All,
}

fn parse_descriptor(s: &str) -> Result<(Basis, u32, ArmSelector, Option<usize>)> {
    let bad = |why: &str| Error::Spec(format!("bad aux descriptor '{s}': {why}"));
    let s = s.trim();
    let (head, rest) = s.split_once('@').ok_or_else(|| bad("missing '@<arm>'"))?;
    let (arm_part, cov_part) = match rest.split_once(':') {
        Some((a, c)) => (a, Some(c)),
        None => (rest, None),
    };
    let tag_len = head
        .find(|c: char| c.is_ascii_digit())
        .unwrap_or(head.len());
    let (tag, digits) = head.split_at(tag_len);
    let basis = match tag {
        "const" => Basis::Constant,
        "fsin" => Basis::FourierSin,
        "fcos" => Basis::FourierCos,
        "leg" => Basis::Legendre,
        "pow" => Basis::Power,
        "xpow" => Basis::RawPower,
        _ => return Err(bad("basis must be one of const, fsin, fcos, leg, pow, xpow")),
    };
    let index = if basis == Basis::Constant {
        if !digits.is_empty() {
            return Err(bad("const takes no index"));
        }
        0
    } else {
        let j: u32 = digits.parse().map_err(|_| bad("missing basis index"))?;
        if j == 0 {
            return Err(bad("basis index must be positive"));
        }
        j
    };
    let arm = match arm_part.trim() {
        "*" => ArmSelector::All,
        a => ArmSelector::One(a.parse().map_err(|_| bad("arm must be an integer or '*'"))?),
    };
    let covariate = match cov_part {
        None => None,
        Some(c) => {
            let c = c.trim();
            let c = c.strip_prefix('x').unwrap_or(c);
            Some(c.parse().map_err(|_| bad("covariate must look like x0"))?)
        }
    };
    if basis.uses_covariate() && covariate.is_none() {
        return Err(bad("non-constant basis needs ':x<covariate>'"));
    }
    Ok((basis, index, arm, covariate))
}

impl FromStr for AuxTerm {
    type Err = Error;

    /// Parses `<basis><index>@<arm>[:x<covariate>]`, e.g. `fsin1@1:x0` or `const@2`.
    fn from_str(s: &str) -> Result<Self> {
        let (basis, index, arm, cov) = parse_descriptor(s)?;
        match arm {
            ArmSelector::One(a) => Ok(AuxTerm::new(a, basis, index, cov.unwrap_or(0))),
            ArmSelector::All => Err(Error::Spec(format!(
                "descriptor '{s}' uses '*'; expand it with expand_descriptors"
            ))),
        }
    }
}

/// Parses a list of descriptors, expanding `@*` to every treatment arm
/// `1..k_arms`.
pub fn expand_descriptors<S: AsRef<str>>(descriptors: &[S], k_arms: usize) -> Result<Vec<AuxTerm>> {
    let mut out = Vec::new();
    for d in descriptors {
        let (basis, index, arm, cov) = parse_descriptor(d.as_ref())?;
        match arm {
            ArmSelector::One(a) => out.push(AuxTerm::new(a, basis, index, cov.unwrap_or(0))),
            ArmSelector::All => {
                out.extend((1..k_arms).map(|a| AuxTerm::new(a, basis, index, cov.unwrap_or(0))))
            }
        }
    }
    Ok(out)
}

/// Declarative recipe for the constraint vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub link: Link,
    pub aux_terms: Vec<AuxTerm>,
    pub standardize: bool,
}

/// Outcome of checking a spec against a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecCheck {
    pub q: usize,
    pub r: usize,
    /// Set when `r^3 >= n`: more constraints than the sample comfortably supports.
    pub growth_warning: bool,
}

impl ConstraintSpec {
    /// Marginal equations only (just-identified).
    pub fn marginal(link: Link) -> Self {
        Self {
            link,
            aux_terms: Vec::new(),
            standardize: true,
        }
    }

    pub fn with_terms(link: Link, aux_terms: Vec<AuxTerm>) -> Self {
        Self {
            link,
            aux_terms,
            standardize: true,
        }
    }

    /// Constant term plus `sin`/`cos` pairs of orders `1..=order` on each
    /// listed covariate, for treatment arm `arm`. With one covariate and
    /// `order = 1` this is the "5 Fourier" recipe of a two-arm trial.
    pub fn fourier(link: Link, arm: usize, covariates: &[usize], order: u32) -> Self {
        let mut terms = vec![AuxTerm::constant(arm)];
        for &c in covariates {
            for j in 1..=order {
                terms.push(AuxTerm::new(arm, Basis::FourierSin, j, c));
                terms.push(AuxTerm::new(arm, Basis::FourierCos, j, c));
            }
        }
        Self::with_terms(link, terms)
    }

    pub fn standardized(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    pub fn q(&self, data: &TrialDataset) -> usize {
        data.k_arms()
    }

    pub fn r(&self, data: &TrialDataset) -> usize {
        data.k_arms() + self.aux_terms.len()
    }

    pub fn descriptors(&self) -> Vec<String> {
        self.aux_terms.iter().map(ToString::to_string).collect()
    }

    /// Checks the recipe against a dataset.
    pub fn validate(&self, data: &TrialDataset) -> Result<SpecCheck> {
        let k = data.k_arms() - 1;
        for (i, t) in self.aux_terms.iter().enumerate() {
            if self.aux_terms[..i].contains(t) {
                return Err(Error::Spec(format!("duplicated auxiliary term {t}")));
            }
            if t.arm == 0 || t.arm > k {
                return Err(Error::Spec(format!(
                    "term {t}: arm must be in 1..={k}"
                )));
            }
            if t.basis.uses_covariate() {
                if data.d() == 0 {
                    return Err(Error::Spec(format!(
                        "term {t} needs a covariate but the dataset has none"
                    )));
                }
                if t.covariate >= data.d() {
                    return Err(Error::Spec(format!(
                        "term {t}: covariate index out of range (dataset has {})",
                        data.d()
                    )));
                }
                if t.index == 0 {
                    return Err(Error::Spec(format!("term {t}: basis index must be positive")));
                }
            }
        }
        if self.link == Link::Logit && !data.is_binary() {
            return Err(Error::Spec(
                "logit link requires a binary outcome coded 0/1".into(),
            ));
        }
        let q = data.k_arms();
        let r = q + self.aux_terms.len();
        let n = data.n();
        if r + 1 > n {
            return Err(Error::Spec(format!(
                "{r} constraints need at least {} subjects, got {n}",
                r + 1
            )));
        }
        let growth_warning = (r as f64).powi(3) >= n as f64;
        Ok(SpecCheck {
            q,
            r,
            growth_warning,
        })
    }
}

fn design_row(z: usize, q: usize) -> impl Iterator<Item = f64> {
    (0..q).map(move |j| if j == 0 || j == z { 1.0 } else { 0.0 })
}

fn linear_predictor(z: usize, beta: &[f64]) -> f64 {
    if z == 0 {
        beta[0]
    } else {
        beta[0] + beta[z]
    }
}

fn check_beta(data: &TrialDataset, beta: &[f64]) -> Result<()> {
    if beta.len() != data.k_arms() {
        return Err(Error::Domain(format!(
            "parameter vector has length {}, expected {}",
            beta.len(),
            data.k_arms()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Domain("parameter vector is not finite".into()));
    }
    Ok(())
}

/// Per-subject marginal score rows `x_i (y_i - mu(x_i' beta))`, where
/// `x_i = (1, 1{z_i=1}, .., 1{z_i=K})`. Returns an `n x q` matrix.
pub fn marginal_equations(data: &TrialDataset, link: Link, beta: &[f64]) -> Result<DMatrix<f64>> {
    check_beta(data, beta)?;
    if link == Link::Logit && !data.is_binary() {
        return Err(Error::Domain(
            "logit link requires a binary outcome coded 0/1".into(),
        ));
    }
    let q = data.k_arms();
    let n = data.n();
    let mut m = DMatrix::zeros(n, q);
    for i in 0..n {
        let z = data.z()[i];
        let (mu, _) = link.mean(linear_predictor(z, beta));
        let resid = data.y()[i] - mu;
        for (j, x) in design_row(z, q).enumerate() {
            m[(i, j)] = x * resid;
        }
    }
    Ok(m)
}

/// Raw (unscaled) auxiliary columns, one per term, `n x |aux_terms|`.
pub fn auxiliary_equations(data: &TrialDataset, spec: &ConstraintSpec) -> Result<DMatrix<f64>> {
    if data.k_arms() < 2 {
        return Err(Error::Spec("auxiliary constraints need at least two arms".into()));
    }
    let k = data.k_arms() - 1;
    for t in &spec.aux_terms {
        if t.arm == 0 || t.arm > k {
            return Err(Error::Spec(format!("term {t}: arm must be in 1..={k}")));
        }
        if t.basis.uses_covariate() && t.covariate >= data.d() {
            return Err(Error::Spec(format!(
                "term {t} needs covariate {} but the dataset has {}",
                t.covariate,
                data.d()
            )));
        }
    }
    let n = data.n();
    // plug-in CDF values, computed once per covariate on the pooled sample
    let mut cdf_values: Vec<Option<Vec<f64>>> = vec![None; data.d()];
    for t in spec.aux_terms.iter().filter(|t| t.basis.uses_covariate()) {
        if cdf_values[t.covariate].is_none() {
            let cdf = empirical_cdf(data, t.covariate)?;
            let col = data.covariate(t.covariate).unwrap_or(&[]);
            cdf_values[t.covariate] = Some(col.iter().map(|&v| cdf.evaluate(v)).collect());
        }
    }
    let mut out = DMatrix::zeros(n, spec.aux_terms.len());
    for (c, t) in spec.aux_terms.iter().enumerate() {
        let pi_k = data.pi()[t.arm];
        for i in 0..n {
            let ind = if data.z()[i] == t.arm { 1.0 } else { 0.0 };
            let h = if t.basis.uses_covariate() {
                let f = cdf_values[t.covariate].as_ref().map_or(0.0, |v| v[i]);
                t.transform(data.x(i, t.covariate), f)
            } else {
                1.0
            };
            out[(i, c)] = (ind - pi_k) * h;
        }
    }
    Ok(out)
}

/// Auxiliary block after optional column scaling. It does not depend on the
/// parameters, so it is built once per dataset and reused for every `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxColumns {
    values: DMatrix<f64>,
    scales: Vec<f64>,
}

impl AuxColumns {
    pub fn build(data: &TrialDataset, spec: &ConstraintSpec) -> Result<Self> {
        let mut values = auxiliary_equations(data, spec)?;
        let n = data.n() as f64;
        let mut scales = Vec::with_capacity(values.ncols());
        for (c, t) in spec.aux_terms.iter().enumerate() {
            let mut col = values.column_mut(c);
            if col.iter().all(|&v| v == 0.0) {
                return Err(Error::Spec(format!(
                    "auxiliary term {t} is identically zero on this dataset"
                )));
            }
            let scale = if spec.standardize {
                (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt()
            } else {
                1.0
            };
            if scale != 1.0 {
                col.iter_mut().for_each(|v| *v /= scale);
            }
            scales.push(scale);
        }
        Ok(Self { values, scales })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Divisor applied to each raw auxiliary column (1 when not standardized).
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }
}

/// Constraint vectors of every subject at one parameter value.
#[derive(Debug, Clone)]
pub struct EstimatingFunctionSet {
    /// `n x r`, marginal columns first.
    pub g: DMatrix<f64>,
    /// `mu'(eta_i)`; the marginal Jacobian of subject `i` is `-deriv_i x_i x_i'`.
    deriv: Vec<f64>,
    z: Vec<usize>,
    pub q: usize,
    pub r: usize,
    pub scales: Vec<f64>,
}

impl EstimatingFunctionSet {
    pub fn from_parts(data: &TrialDataset, link: Link, beta: &[f64], aux: &AuxColumns) -> Result<Self> {
        let marginal = marginal_equations(data, link, beta)?;
        let n = data.n();
        let q = marginal.ncols();
        let r = q + aux.values.ncols();
        let mut g = DMatrix::zeros(n, r);
        g.columns_mut(0, q).copy_from(&marginal);
        g.columns_mut(q, r - q).copy_from(&aux.values);
        let deriv = data
            .z()
            .iter()
            .map(|&z| link.mean(linear_predictor(z, beta)).1)
            .collect();
        Ok(Self {
            g,
            deriv,
            z: data.z().to_vec(),
            q,
            r,
            scales: aux.scales.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    /// `dg_i / d beta'` as an `r x q` matrix; rows past `q` are zero.
    pub fn dgdbeta(&self, i: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.r, self.q);
        let x: Vec<f64> = design_row(self.z[i], self.q).collect();
        for a in 0..self.q {
            for b in 0..self.q {
                j[(a, b)] = -self.deriv[i] * x[a] * x[b];
            }
        }
        j
    }

    /// `lambda' dg_i/d beta` for every subject, as rows of an `n x q` matrix.
    pub fn lambda_jacobian(&self, lambda: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.q);
        for i in 0..self.n() {
            let z = self.z[i];
            // x_i' lambda[..q]
            let xl = lambda[0] + if z > 0 { lambda[z] } else { 0.0 };
            let s = -self.deriv[i] * xl;
            out[(i, 0)] = s;
            if z > 0 {
                out[(i, z)] = s;
            }
        }
        out
    }

    /// Sample mean Jacobian `n^-1 sum_i dg_i/d beta'` (`r x q`).
    pub fn mean_jacobian(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.r, self.q);
        for i in 0..self.n() {
            let z = self.z[i];
            let w = -self.deriv[i];
            d[(0, 0)] += w;
            if z > 0 {
                d[(0, z)] += w;
                d[(z, 0)] += w;
                d[(z, z)] += w;
            }
        }
        d / self.n() as f64
    }

    /// `n^-1 sum_i g_i g_i'`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        self.g.tr_mul(&self.g) / self.n() as f64
    }
}

/// Evaluates the full constraint set at `beta`.
pub fn assemble(data: &TrialDataset, spec: &ConstraintSpec, beta: &[f64]) -> Result<EstimatingFunctionSet> {
    spec.validate(data)?;
    let aux = AuxColumns::build(data, spec)?;
    EstimatingFunctionSet::from_parts(data, spec.link, beta, &aux)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_arm(y: Vec<f64>, z: Vec<usize>, x: Vec<f64>) -> TrialDataset {
        TrialDataset::new(y, z, vec![x], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn marginal_rows() {
        let d = two_arm(vec![1.0, 0.0, 1.0], vec![0, 1, 1], vec![0.0, 1.0, 2.0]);
        let m = marginal_equations(&d, Link::Identity, &[0.0, 0.0]).unwrap();
        assert_eq!((m[(0, 0)], m[(0, 1)]), (1.0, 0.0));
        let m = marginal_equations(&d, Link::Logit, &[0.0, 0.0]).unwrap();
        assert_eq!((m[(2, 0)], m[(2, 1)]), (0.5, 0.5));
    }

    #[test]
    fn marginal_sums_vanish_at_arm_means() {
        let y = vec![1.0, 3.0, 2.5, 4.0, 0.5, 2.0];
        let z = vec![0, 0, 1, 1, 0, 1];
        let d = two_arm(y, z, vec![0.0; 6]);
        let means = d.arm_means();
        let (m0, m1) = (means[0].unwrap(), means[1].unwrap());
        let m = marginal_equations(&d, Link::Identity, &[m0, m1 - m0]).unwrap();
        for c in 0..2 {
            assert!(m.column(c).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn logit_rejects_continuous_outcome() {
        let d = two_arm(vec![0.2, 1.0, 0.0], vec![0, 1, 1], vec![0.0; 3]);
        assert!(matches!(
            marginal_equations(&d, Link::Logit, &[0.0, 0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ConstraintSpec::marginal(Link::Logit).validate(&d),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn constant_term_is_indicator_minus_pi() {
        let d = two_arm(vec![0.0, 1.0, 1.0], vec![0, 1, 0], vec![1.0, 2.0, 3.0]);
        let spec = ConstraintSpec::with_terms(Link::Identity, vec![AuxTerm::constant(1)]);
        let a = auxiliary_equations(&d, &spec).unwrap();
        assert_eq!(a.column(0).as_slice(), &[-0.5, 0.5, -0.5]);
    }

    #[test]
    fn quadratic_recipe_has_three_columns() {
        let d = two_arm(vec![0.0, 1.0, 1.0, 0.0], vec![0, 1, 0, 1], vec![1.0, 2.0, 3.0, -1.0]);
        let terms = expand_descriptors(&["const@1", "xpow1@1:x0", "xpow2@1:x0"], 2).unwrap();
        let spec = ConstraintSpec::with_terms(Link::Identity, terms).standardized(false);
        let a = auxiliary_equations(&d, &spec).unwrap();
        assert_eq!(a.ncols(), 3);
        assert_eq!(a[(3, 2)], 0.5 * 1.0);
        assert_eq!(a[(2, 1)], -0.5 * 3.0);
    }

    #[test]
    fn fourier_recipe_matches_table_note_form() {
        // (1{z=1} - 0.5) = (2z - 1) / 2 for a two-arm trial with equal allocation
        let x = vec![0.3, -1.2, 2.2, 0.7];
        let d = two_arm(vec![0.0, 1.0, 1.0, 0.0], vec![0, 1, 0, 1], x.clone());
        let spec = ConstraintSpec::fourier(Link::Logit, 1, &[0], 1).standardized(false);
        let a = auxiliary_equations(&d, &spec).unwrap();
        let cdf = EmpiricalCdfProbe::new(&x);
        for i in 0..4 {
            let k = 2.0 * d.z()[i] as f64 - 1.0;
            let w = 2.0 * PI * cdf.at(x[i]);
            assert!((2.0 * a[(i, 0)] - k).abs() < 1e-15);
            assert!((2.0 * a[(i, 1)] - SQRT_2 * k * w.sin()).abs() < 1e-12);
            assert!((2.0 * a[(i, 2)] - SQRT_2 * k * w.cos()).abs() < 1e-12);
        }
    }

    struct EmpiricalCdfProbe<'a>(&'a [f64]);
    impl<'a> EmpiricalCdfProbe<'a> {
        fn new(v: &'a [f64]) -> Self {
            Self(v)
        }
        fn at(&self, t: f64) -> f64 {
            self.0.iter().filter(|&&v| v <= t).count() as f64 / self.0.len() as f64
        }
    }

    #[test]
    fn legendre_closed_forms() {
        for u in [-1.0, 0.0, 1.0] {
            assert_eq!(legendre(0, u), 1.0);
            assert_eq!(legendre(1, u), u);
            assert_eq!(legendre(2, u), (3.0 * u * u - 1.0) / 2.0);
        }
        assert!((legendre(3, 0.4) - (5.0 * 0.064 - 3.0 * 0.4) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn descriptors_parse_and_print() {
        let t: AuxTerm = "fsin1@1:x0".parse().unwrap();
        assert_eq!(t, AuxTerm::new(1, Basis::FourierSin, 1, 0));
        assert_eq!(t.to_string(), "fsin1@1:x0");
        assert_eq!("const@2".parse::<AuxTerm>().unwrap(), AuxTerm::constant(2));
        assert_eq!("leg3@1:2".parse::<AuxTerm>().unwrap().covariate, 2);
        for bad in ["fsin@1:x0", "foo1@1:x0", "pow1@1", "const1@1", "fsin0@1:x0", "const"] {
            assert!(bad.parse::<AuxTerm>().is_err(), "{bad}");
        }
        let all = expand_descriptors(&["const@*", "pow1@*:x0"], 4).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(all[2], AuxTerm::constant(3));
    }

    #[test]
    fn spec_validation() {
        let d = two_arm(vec![0.0, 1.0, 1.0, 0.0], vec![0, 1, 0, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let dup = ConstraintSpec::with_terms(Link::Logit, vec![AuxTerm::constant(1), AuxTerm::constant(1)]);
        assert!(dup.validate(&d).is_err());
        let bad_arm = ConstraintSpec::with_terms(Link::Logit, vec![AuxTerm::constant(2)]);
        assert!(bad_arm.validate(&d).is_err());
        let too_many = ConstraintSpec::fourier(Link::Logit, 1, &[0], 1);
        assert!(too_many.validate(&d).is_err());
        let ok = ConstraintSpec::with_terms(Link::Logit, vec![AuxTerm::constant(1)]);
        let check = ok.validate(&d).unwrap();
        assert_eq!((check.q, check.r, check.growth_warning), (2, 3, true));

        let no_cov = TrialDataset::new(vec![0.0, 1.0, 1.0, 0.0], vec![0, 1, 0, 1], vec![], vec![0.5, 0.5]).unwrap();
        let needs_cov = ConstraintSpec::with_terms(Link::Logit, vec![AuxTerm::new(1, Basis::Power, 1, 0)]);
        assert!(matches!(needs_cov.validate(&no_cov), Err(Error::Spec(_))));
        assert!(matches!(auxiliary_equations(&no_cov, &needs_cov), Err(Error::Spec(_))));
    }

    #[test]
    fn zero_column_is_rejected() {
        // constant covariate makes (2F-1) identically 1, so leg1 == pow1 != 0,
        // but fsin1 of F == 1 is sin(2 pi) which is not exactly zero; use a
        // raw power of a zero covariate instead.
        let d = two_arm(vec![0.0, 1.0, 1.0, 0.0], vec![0, 1, 0, 1], vec![0.0; 4]);
        let spec = ConstraintSpec::with_terms(Link::Identity, vec![AuxTerm::new(1, Basis::RawPower, 1, 0)]);
        let err = AuxColumns::build(&d, &spec).unwrap_err();
        assert!(err.to_string().contains("xpow1@1:x0"), "{err}");
    }

    #[test]
    fn assemble_layout_and_jacobian() {
        let d = two_arm(vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0], vec![0, 1, 0, 1, 1, 0], vec![0.1, 0.5, -0.3, 2.0, 1.1, 0.0]);
        let spec = ConstraintSpec::with_terms(Link::Logit, vec![AuxTerm::constant(1)]);
        let beta = [0.2, -0.4];
        let set = assemble(&d, &spec, &beta).unwrap();
        assert_eq!((set.q, set.r), (2, 3));
        // finite-difference check of the marginal Jacobian
        let h = 1e-6;
        for i in 0..d.n() {
            let jac = set.dgdbeta(i);
            for b in 0..2 {
                let mut bp = beta;
                let mut bm = beta;
                bp[b] += h;
                bm[b] -= h;
                let gp = assemble(&d, &spec, &bp).unwrap().g;
                let gm = assemble(&d, &spec, &bm).unwrap().g;
                for a in 0..3 {
                    let fd = (gp[(i, a)] - gm[(i, a)]) / (2.0 * h);
                    assert!((fd - jac[(a, b)]).abs() < 1e-8);
                }
            }
        }
        let mean: DMatrix<f64> = (0..d.n()).map(|i| set.dgdbeta(i)).fold(DMatrix::zeros(3, 2), |a, b| a + b) / d.n() as f64;
        assert!((mean - set.mean_jacobian()).abs().max() < 1e-15);
    }

    #[test]
    fn aux_columns_do_not_depend_on_beta() {
        let d = two_arm(vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0], vec![0, 1, 0, 1, 1, 0], vec![0.1, 0.5, -0.3, 2.0, 1.1, 0.0]);
        let spec = ConstraintSpec::with_terms(
            Link::Logit,
            expand_descriptors(&["const@1", "fcos1@1:x0"], 2).unwrap(),
        );
        let a = assemble(&d, &spec, &[0.0, 0.0]).unwrap().g;
        let b = assemble(&d, &spec, &[1.5, -3.0]).unwrap().g;
        assert_eq!(a.columns(2, 2), b.columns(2, 2));
        // standardized columns have unit second moment
        for c in 2..4 {
            let m2 = a.column(c).iter().map(|v| v * v).sum::<f64>() / 6.0;
            assert!((m2 - 1.0).abs() < 1e-12);
        }
    }
}
