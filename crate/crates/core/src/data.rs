//! Trial samples: outcomes, arm labels, baseline covariates and the known
//! allocation probabilities, plus CSV loading and the empirical CDF used by
//! the covariate basis functions.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of the allocation probabilities.
pub const PI_SUM_TOL: f64 = 1e-12;

/// One randomized trial.
///
/// Arms are labelled `0..=K`; arm 0 is the reference arm of the marginal
/// model. Covariates are stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    y: Vec<f64>,
    z: Vec<usize>,
    x: Vec<Vec<f64>>,
    pi: Vec<f64>,
}

impl TrialDataset {
    /// Builds and validates a dataset. `x` holds one vector per covariate,
    /// each of length `n`; `pi` has one entry per arm.
    pub fn new(y: Vec<f64>, z: Vec<usize>, x: Vec<Vec<f64>>, pi: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if z.len() != n {
            return Err(Error::Domain(format!(
                "arm vector has {} entries but outcome has {n}",
                z.len()
            )));
        }
        for (c, col) in x.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Domain(format!(
                    "covariate {c} has {} entries but outcome has {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("covariate {c} is not finite at subject {i}")));
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("outcome is not finite at subject {i}")));
        }
        validate_pi(&pi)?;
        let arms = pi.len();
        if let Some(i) = z.iter().position(|&k| k >= arms) {
            return Err(Error::Domain(format!(
                "subject {i} has arm {} outside 0..={}",
                z[i],
                arms - 1
            )));
        }
        if n < arms + 1 {
            return Err(Error::Domain(format!(
                "need at least {} subjects for {arms} arms, got {n}",
                arms + 1
            )));
        }
        Ok(Self { y, z, x, pi })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of arms, `K + 1`.
    pub fn k_arms(&self) -> usize {
        self.pi.len()
    }

    /// Number of covariates.
    pub fn d(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &[usize] {
        &self.z
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn covariate(&self, col: usize) -> Option<&[f64]> {
        self.x.get(col).map(Vec::as_slice)
    }

    pub fn x(&self, i: usize, col: usize) -> f64 {
        self.x[col][i]
    }

    /// True when every outcome is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Subject count per arm.
    pub fn arm_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.k_arms()];
        for &k in &self.z {
            counts[k] += 1;
        }
        counts
    }

    /// Outcome mean per arm; `None` for an empty arm.
    pub fn arm_means(&self) -> Vec<Option<f64>> {
        let mut sums = vec![0.0; self.k_arms()];
        let counts = self.arm_counts();
        for (&y, &k) in self.y.iter().zip(&self.z) {
            sums[k] += y;
        }
        sums.iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    /// Same subjects with different allocation probabilities.
    pub fn with_pi(&self, pi: Vec<f64>) -> Result<Self> {
        Self::new(self.y.clone(), self.z.clone(), self.x.clone(), pi)
    }

    /// Writes the dataset as CSV with columns `y`, `z`, `x0..`, returning a
    /// schema that reloads it.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<CsvSchema> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["y".to_string(), "z".to_string()];
        header.extend((0..self.d()).map(|c| format!("x{c}")));
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = vec![format!("{:?}", self.y[i]), self.z[i].to_string()];
            rec.extend((0..self.d()).map(|c| format!("{:?}", self.x[c][i])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(CsvSchema {
            outcome: "y".into(),
            arm: "z".into(),
            covariates: (0..self.d()).map(|c| format!("x{c}")).collect(),
            arm_labels: None,
            allocation: Allocation::Known(self.pi.clone()),
        })
    }
}

fn validate_pi(pi: &[f64]) -> Result<()> {
    if pi.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least two arms, got {} allocation probabilities",
            pi.len()
        )));
    }
    if let Some(p) = pi.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::Domain(format!("allocation probability {p} is not in (0,1)")));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > PI_SUM_TOL {
        return Err(Error::Domain(format!(
            "allocation probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Where the allocation probabilities come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Allocation {
    /// Design values, one per arm.
    Known(Vec<f64>),
    /// Realized arm proportions. `arms` fixes `K + 1` when given; otherwise
    /// it is taken from the arm labels or the largest label seen.
    FromData { arms: Option<usize> },
}

/// Column roles for [`load_csv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub outcome: String,
    pub arm: String,
    pub covariates: Vec<String>,
    /// Raw labels in arm order: `arm_labels[k]` is recoded to arm `k`.
    /// Without it labels must already be `0..=K`.
    pub arm_labels: Option<Vec<i64>>,
    pub allocation: Allocation,
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
        row,
        message: format!("column '{column}': '{raw}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            message: format!("column '{column}': '{raw}' is not finite"),
        });
    }
    Ok(v)
}

fn parse_label(raw: &str, row: usize, column: &str) -> Result<i64> {
    let t = raw.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Ok(v);
    }
    let v = parse_number(t, row, column)?;
    if v.fract() != 0.0 {
        return Err(Error::Parse {
            row,
            message: format!("column '{column}': arm label '{raw}' is not an integer"),
        });
    }
    Ok(v as i64)
}

/// Loads a trial from a headed CSV file. Row numbers in errors are 1-based
/// and exclude the header.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TrialDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let y_col = find(&schema.outcome)?;
    let z_col = find(&schema.arm)?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let declared_arms = match (&schema.arm_labels, &schema.allocation) {
        (Some(labels), _) => Some(labels.len()),
        (None, Allocation::Known(pi)) => Some(pi.len()),
        (None, Allocation::FromData { arms }) => *arms,
    };
    if let (Some(labels), Allocation::Known(pi)) = (&schema.arm_labels, &schema.allocation) {
        if labels.len() != pi.len() {
            return Err(Error::Schema(format!(
                "{} arm labels but {} allocation probabilities",
                labels.len(),
                pi.len()
            )));
        }
    }

    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut x = vec![Vec::new(); x_cols.len()];
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let cell = |col: usize, name: &str| -> Result<&str> {
            match record.get(col) {
                Some(v) if !v.trim().is_empty() => Ok(v),
                _ => Err(Error::Missing {
                    row,
                    column: name.to_string(),
                }),
            }
        };
        y.push(parse_number(cell(y_col, &schema.outcome)?, row, &schema.outcome)?);
        let label = parse_label(cell(z_col, &schema.arm)?, row, &schema.arm)?;
        let arm = match &schema.arm_labels {
            Some(labels) => labels.iter().position(|&l| l == label).ok_or_else(|| {
                Error::Domain(format!(
                    "row {row}: arm label {label} is not one of {labels:?}"
                ))
            })?,
            None => {
                let max = declared_arms.map(|a| a as i64 - 1);
                match max {
                    Some(m) if label < 0 || label > m => {
                        return Err(Error::Domain(format!(
                            "row {row}: arm label {label} outside 0..={m}"
                        )))
                    }
                    None if label < 0 => {
                        return Err(Error::Domain(format!("row {row}: negative arm label {label}")))
                    }
                    _ => label as usize,
                }
            }
        };
        z.push(arm);
        for (c, (&col, name)) in x_cols.iter().zip(&schema.covariates).enumerate() {
            x[c].push(parse_number(cell(col, name)?, row, name)?);
        }
    }

    let pi = match &schema.allocation {
        Allocation::Known(pi) => pi.clone(),
        Allocation::FromData { .. } => {
            let arms = declared_arms.unwrap_or_else(|| z.iter().max().map_or(0, |m| m + 1));
            let mut counts = vec![0usize; arms];
            for &k in &z {
                counts[k] += 1;
            }
            let n = z.len() as f64;
            if let Some(k) = counts.iter().position(|&c| c == 0) {
                return Err(Error::Domain(format!(
                    "arm {k} has no subjects; cannot estimate its allocation probability"
                )));
            }
            counts.iter().map(|&c| c as f64 / n).collect()
        }
    };
    TrialDataset::new(y, z, x, pi)
}

/// Right-continuous empirical distribution function of one covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn from_values(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{i : x_i <= t} / n`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= t);
        count as f64 / self.sorted.len() as f64
    }
}

/// Empirical CDF of covariate `col` over the pooled sample.
pub fn empirical_cdf(data: &TrialDataset, col: usize) -> Result<EmpiricalCdf> {
    let values = data.covariate(col).ok_or_else(|| {
        Error::Domain(format!(
            "covariate index {col} out of range (dataset has {})",
            data.d()
        ))
    })?;
    Ok(EmpiricalCdf::from_values(values))
}
