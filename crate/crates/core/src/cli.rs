//! Command-line front end: `analyze` a trial file and `simulate` presets.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, Allocation, CsvSchema, TrialDataset};
use crate::equations::{expand_descriptors, ConstraintSpec, Link};
use crate::error::{Error, ErrorCategory, Result};
use crate::inference::{wald_interval, ElEstimator, FitOptions, MeleResult, TestResult};
use crate::sim::{preset, preset_catalog, run_experiment, Method, Scenario, SimulationReport};

pub const DEFAULT_REPS: usize = 1000;
pub const FULL_REPS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
    Csv,
}

/// Allocation probabilities in a config: a list, or `"from-data"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiSetting {
    Values(Vec<f64>),
    Mode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub outcome: String,
    pub arm: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub arm_labels: Option<Vec<i64>>,
    pub pi: Option<PiSetting>,
}

fn default_level() -> f64 {
    0.95
}

fn default_true() -> bool {
    true
}

/// Analysis settings read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Data file; relative paths resolve against the config file's directory.
    pub input: PathBuf,
    pub link: Link,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub seed: u64,
    /// Auxiliary term descriptors of the adjusted fit. Covariates are
    /// referenced as `x<i>` or by column name.
    #[serde(default)]
    pub aux: Vec<String>,
    #[serde(default = "default_true")]
    pub standardize: bool,
    /// Zero-based parameter indices tested jointly against 0; default all contrasts.
    pub test: Option<Vec<usize>>,
    pub schema: SchemaConfig,
}

impl AnalysisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves `input` relative to it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if cfg.input.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.input = dir.join(&cfg.input);
            }
        }
        Ok(cfg)
    }

    pub fn csv_schema(&self) -> Result<CsvSchema> {
        let s = &self.schema;
        let allocation = match &s.pi {
            None => {
                return Err(Error::Config(
                    "schema.pi is required: a list of allocation probabilities or \"from-data\"".into(),
                ))
            }
            Some(PiSetting::Values(v)) => Allocation::Known(v.clone()),
            Some(PiSetting::Mode(m)) if m == "from-data" => Allocation::FromData {
                arms: s.arm_labels.as_ref().map(Vec::len),
            },
            Some(PiSetting::Mode(m)) => {
                return Err(Error::Config(format!(
                    "schema.pi: expected a list of probabilities or \"from-data\", got \"{m}\""
                )))
            }
        };
        Ok(CsvSchema {
            outcome: s.outcome.clone(),
            arm: s.arm.clone(),
            covariates: s.covariates.clone(),
            arm_labels: s.arm_labels.clone(),
            allocation,
        })
    }

    /// Descriptors with covariate names replaced by `x<i>`.
    fn resolved_aux(&self) -> Vec<String> {
        self.aux
            .iter()
            .map(|d| match d.split_once(':') {
                Some((head, cov)) => match self.schema.covariates.iter().position(|c| c == cov.trim()) {
                    Some(i) => format!("{head}:x{i}"),
                    None => d.clone(),
                },
                None => d.clone(),
            })
            .collect()
    }

    /// Marginal and adjusted specs for a loaded dataset.
    pub fn specs(&self, data: &TrialDataset) -> Result<(ConstraintSpec, ConstraintSpec)> {
        let terms = expand_descriptors(&self.resolved_aux(), data.k_arms())?;
        let marginal = ConstraintSpec::marginal(self.link).standardized(self.standardize);
        let adjusted = ConstraintSpec::with_terms(self.link, terms).standardized(self.standardize);
        marginal.validate(data)?;
        adjusted.validate(data)?;
        Ok((marginal, adjusted))
    }
}

/// `+inf` (null value outside the likelihood support) is written as JSON `null`.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrReport {
    #[serde(with = "infinite_as_null")]
    pub stat: f64,
    pub df: usize,
    pub p: f64,
    pub tested: Vec<usize>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub q: usize,
    pub r: usize,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub gradient_norm: f64,
    pub loglik: f64,
    pub inner_feasible: bool,
    pub lambda: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub method: String,
    pub constraints: Vec<String>,
    pub estimates: Vec<f64>,
    pub se: Vec<f64>,
    pub ci: Vec<[f64; 2]>,
    pub level: f64,
    pub lr: LrReport,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub analysis: Vec<FitReport>,
}

fn fit_report(
    label: &str,
    data: &TrialDataset,
    spec: &ConstraintSpec,
    tested: &[usize],
    level: f64,
    seed: u64,
) -> Result<FitReport> {
    let opts = FitOptions {
        seed,
        ..FitOptions::default()
    };
    let mut est = ElEstimator::new(data, spec)?.with_options(opts);
    let fit: MeleResult = est.fit(None)?;
    let q = fit.beta_hat.len();
    let ci = (0..q)
        .map(|j| wald_interval(&fit, j, level).map(|(a, b)| [a, b]))
        .collect::<Result<Vec<_>>>()?;
    let test: TestResult = if tested.len() == q {
        est.test_full(&fit, &vec![0.0; q])?
    } else {
        let fixed: Vec<(usize, f64)> = tested.iter().map(|&j| (j, 0.0)).collect();
        est.test_profile(&fit, &fixed)?
    };
    Ok(FitReport {
        method: label.into(),
        constraints: spec.descriptors(),
        se: fit.se(),
        estimates: fit.beta_hat.clone(),
        ci,
        level,
        lr: LrReport {
            stat: test.statistic,
            df: test.df,
            p: test.p_value,
            tested: tested.to_vec(),
            feasible: test.feasible,
        },
        diagnostics: Diagnostics {
            n: data.n(),
            q,
            r: spec.r(data),
            converged: fit.converged,
            outer_iterations: fit.outer_iterations,
            inner_iterations: fit.inner_diag.iterations,
            gradient_norm: fit.gradient_norm,
            loglik: fit.loglik_at_opt,
            inner_feasible: fit.inner_diag.feasible,
            lambda: fit.inner_diag.lambda.clone(),
            warnings: fit.warnings.clone(),
        },
    })
}

/// Loads the data and fits the marginal and adjusted specs.
pub fn analyze(cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::Config(format!("level {} is not in (0,1)", cfg.level)));
    }
    let data = load_csv(&cfg.input, &cfg.csv_schema()?)?;
    let (marginal, adjusted) = cfg.specs(&data)?;
    let q = data.k_arms();
    let tested = cfg.test.clone().unwrap_or_else(|| (1..q).collect());
    if tested.is_empty() || tested.iter().any(|&j| j >= q) {
        return Err(Error::Config(format!("test indices {tested:?} must be a nonempty subset of 0..{q}")));
    }
    let mut analysis = vec![fit_report("marginal", &data, &marginal, &tested, cfg.level, cfg.seed)?];
    if !adjusted.aux_terms.is_empty() {
        analysis.push(fit_report("adjusted", &data, &adjusted, &tested, cfg.level, cfg.seed)?);
    }
    Ok(AnalysisReport { analysis })
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for f in &self.analysis {
            let d = &f.diagnostics;
            let _ = writeln!(s, "== {} (n={}, q={}, r={}) ==", f.method, d.n, d.q, d.r);
            if !f.constraints.is_empty() {
                let _ = writeln!(s, "auxiliary: {}", f.constraints.join(", "));
            }
            let pct = format!("{:.0}% CI", 100.0 * f.level);
            let _ = writeln!(s, "{:<8} {:>11} {:>10} {:>24}", "param", "estimate", "se", pct);
            for j in 0..f.estimates.len() {
                let _ = writeln!(
                    s,
                    "{:<8} {:>11.5} {:>10.5}   [{:>9.5}, {:>9.5}]",
                    format!("beta{}", j + 1),
                    f.estimates[j],
                    f.se[j],
                    f.ci[j][0],
                    f.ci[j][1]
                );
            }
            let names: Vec<String> = f.lr.tested.iter().map(|j| format!("beta{}", j + 1)).collect();
            let _ = writeln!(
                s,
                "LR test {} = 0: stat {:.4}, df {}, p {:.4e}{}",
                names.join(", "),
                f.lr.stat,
                f.lr.df,
                f.lr.p,
                if f.lr.feasible { "" } else { " (null outside the support)" }
            );
            let _ = writeln!(
                s,
                "converged {} after {} outer / {} inner iterations, |grad| {:.2e}, l_E {:.6}",
                d.converged, d.outer_iterations, d.inner_iterations, d.gradient_norm, d.loglik
            );
            for w in &d.warnings {
                let _ = writeln!(s, "warning: {w}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("analysis report: {e}")))
    }

    /// One row per method and parameter.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "parameter", "estimate", "se", "ci_lower", "ci_upper", "lr_stat", "lr_df", "lr_p"])?;
        for f in &self.analysis {
            for j in 0..f.estimates.len() {
                w.write_record([
                    f.method.clone(),
                    format!("beta{}", j + 1),
                    format!("{:?}", f.estimates[j]),
                    format!("{:?}", f.se[j]),
                    format!("{:?}", f.ci[j][0]),
                    format!("{:?}", f.ci[j][1]),
                    format!("{:?}", f.lr.stat),
                    f.lr.df.to_string(),
                    format!("{:?}", f.lr.p),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Text => Ok(self.to_text()),
            OutputFormat::Json => Ok(self.to_json() + "\n"),
            OutputFormat::Csv => self.to_csv(),
        }
    }
}

impl SimulationReport {
    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Text => Ok(self.to_text()),
            OutputFormat::Json => Ok(self.to_json() + "\n"),
            OutputFormat::Csv => self.to_csv(),
        }
    }
}

/// Custom experiment file: a scenario plus labelled recipes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub scenario: Scenario,
    pub methods: Vec<MethodConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub label: String,
    #[serde(default)]
    pub aux: Vec<String>,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

/// A preset name, or a path to an experiment TOML file.
pub fn resolve_experiment(name: &str) -> Result<(Scenario, Vec<Method>)> {
    if let Ok(p) = preset(name) {
        return Ok((p.scenario, p.methods));
    }
    let path = Path::new(name);
    if !path.is_file() {
        return preset(name).map(|p| (p.scenario, p.methods));
    }
    let text = std::fs::read_to_string(path)?;
    let file: ExperimentFile =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    file.scenario.validate()?;
    let k = file.scenario.arms.len();
    let methods = file
        .methods
        .iter()
        .map(|m| {
            Ok(Method {
                label: m.label.clone(),
                spec: ConstraintSpec::with_terms(Link::Logit, expand_descriptors(&m.aux, k)?).standardized(m.standardize),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if methods.is_empty() {
        return Err(Error::Config(format!("{}: no methods", path.display())));
    }
    Ok((file.scenario, methods))
}

fn descriptor_help() -> String {
    let mut s = String::from("Presets:\n");
    for (name, desc) in preset_catalog() {
        let _ = writeln!(s, "  {name:<12} {desc}");
    }
    s.push_str(
        "\nAuxiliary term descriptors: <basis><j>@<arm>[:<covariate>]
  const@g      1{Z=g} - pi_g
  fsin<j>@g:xc sqrt(2) sin(2 pi j F_n(x_c)), times (1{Z=g} - pi_g)
  fcos<j>@g:xc sqrt(2) cos(2 pi j F_n(x_c))
  leg<j>@g:xc  Legendre P_j(2 F_n(x_c) - 1)
  pow<j>@g:xc  (2 F_n(x_c) - 1)^j
  xpow<j>@g:xc raw covariate power x_c^j
  '@*' expands to every treatment arm; covariates are x0, x1, ... or column names in configs.

Exit codes: 0 success, 2 input error, 3 constraint specification error, 4 numerical failure.\n",
    );
    s
}

#[derive(Debug, Parser)]
#[command(
    name = "el-adjust",
    version,
    about = "Empirical likelihood estimation and testing of treatment effects with covariate-adjustment constraints",
    after_help = descriptor_help()
)]
pub struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit marginal and covariate-adjusted models to a trial CSV described by a TOML config
    #[command(after_help = descriptor_help())]
    Analyze {
        /// Analysis config (TOML)
        config: PathBuf,
        /// Overrides the config's output format
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
        /// Also write the JSON report here
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment for a preset or an experiment TOML file
    #[command(after_help = descriptor_help())]
    Simulate {
        /// Preset name or experiment file
        preset: String,
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
        /// 5000 replications
        #[arg(long, conflicts_with = "reps")]
        full: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Confidence level of the Wald intervals; tests use 1 - level
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        format: OutputFormat,
        /// Worker threads (default: available cores)
        #[arg(long)]
        workers: Option<usize>,
        /// Also write the JSON report here
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

pub fn cmd_analyze(config: &Path, format: Option<OutputFormat>, json: Option<&Path>, out: &mut dyn Write) -> Result<AnalysisReport> {
    let cfg = AnalysisConfig::load(config)?;
    let report = analyze(&cfg)?;
    out.write_all(report.render(format.unwrap_or(cfg.format))?.as_bytes())?;
    if let Some(p) = json {
        std::fs::write(p, report.to_json() + "\n")?;
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    name: &str,
    reps: usize,
    seed: u64,
    level: f64,
    format: OutputFormat,
    workers: usize,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> Result<SimulationReport> {
    let (scenario, methods) = resolve_experiment(name)?;
    log::info!("{}: {} replications, seed {seed}, {workers} workers", scenario.name, reps);
    let report = run_experiment(&scenario, &methods, reps, seed, level, workers)?;
    out.write_all(report.render(format)?.as_bytes())?;
    if let Some(p) = json {
        std::fs::write(p, report.to_json() + "\n")?;
    }
    Ok(report)
}

pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        ErrorCategory::Input => 2,
        ErrorCategory::Spec => 3,
        ErrorCategory::Numeric => 4,
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let result = match &cli.command {
        Command::Analyze { config, format, json } => cmd_analyze(config, *format, json.as_deref(), out).map(|_| ()),
        Command::Simulate {
            preset,
            reps,
            full,
            seed,
            level,
            format,
            workers,
            json,
        } => {
            let reps = if *full { FULL_REPS } else { *reps };
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            cmd_simulate(preset, reps, *seed, *level, *format, workers, json.as_deref(), out).map(|_| ())
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_both_pi_forms() {
        let base = r#"
input = "t.csv"
link = "logit"
aux = ["const@*", "pow1@*:age"]
[schema]
outcome = "died"
arm = "trt"
covariates = ["age"]
"#;
        let cfg = AnalysisConfig::from_toml_str(&format!("{base}pi = [0.5, 0.5]\n")).unwrap();
        assert_eq!(cfg.csv_schema().unwrap().allocation, Allocation::Known(vec![0.5, 0.5]));
        assert_eq!(cfg.resolved_aux(), vec!["const@*", "pow1@*:x0"]);
        let cfg = AnalysisConfig::from_toml_str(&format!("{base}pi = \"from-data\"\n")).unwrap();
        assert!(matches!(cfg.csv_schema().unwrap().allocation, Allocation::FromData { .. }));
        let cfg = AnalysisConfig::from_toml_str(&format!("{base}pi = \"equal\"\n")).unwrap();
        assert!(cfg.csv_schema().is_err());
    }

    #[test]
    fn config_errors_name_the_line() {
        let err = AnalysisConfig::from_toml_str("input = \"a.csv\"\nlink = \"probit\"\n[schema]\noutcome=\"y\"\narm=\"z\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert_eq!(exit_code(&err), 2);
    }

    #[test]
    fn help_lists_presets_and_descriptors() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["el-adjust", "simulate", "--help"], &mut out, &mut err), 0);
        let text = String::from_utf8(out).unwrap();
        for name in crate::sim::preset_names() {
            assert!(text.contains(name), "{name}");
        }
        for tag in ["const@", "fsin", "fcos", "leg", "pow", "xpow"] {
            assert!(text.contains(tag), "{tag}");
        }
    }

    #[test]
    fn unknown_preset_is_an_input_error() {
        let mut out = Vec::new();
        let mut err = Vec::new();
        assert_eq!(run(["el-adjust", "simulate", "nope", "--reps", "1"], &mut out, &mut err), 2);
    }
}
