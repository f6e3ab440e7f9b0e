use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use el_adjust::cli::AnalysisReport;
use el_adjust::equations::logistic;
use el_adjust::sim::SimulationReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_el-adjust"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_trial(dir: &Path, arms: usize, n: usize, continuous: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut csv = String::from("y,group,age\n");
    for i in 0..n {
        let arm = if i < arms { i } else { rng.random_range(0..arms) };
        let x: f64 = rng.sample(StandardNormal);
        let eta = -0.3 + 0.2 * arm as f64 + 0.7 * x;
        let y = if continuous {
            format!("{:.4}", eta + rng.sample::<f64, _>(StandardNormal))
        } else {
            u8::from(rng.random::<f64>() < logistic(eta)).to_string()
        };
        csv.push_str(&format!("{y},{},{:.4}\n", arm + 1, 50.0 + 10.0 * x));
    }
    std::fs::write(dir.join("trial.csv"), csv).unwrap();
}

fn write_config(dir: &Path, arms: usize, aux: &str, link: &str) -> std::path::PathBuf {
    let labels: Vec<String> = (1..=arms).map(|k| k.to_string()).collect();
    let pi: Vec<String> = (0..arms).map(|_| format!("{}", 1.0 / arms as f64)).collect();
    let text = format!(
        "input = \"trial.csv\"\nlink = \"{link}\"\naux = [{aux}]\n\n[schema]\noutcome = \"y\"\narm = \"group\"\n\
         covariates = [\"age\"]\narm_labels = [{}]\npi = [{}]\n",
        labels.join(", "),
        pi.join(", ")
    );
    let path = dir.join("analysis.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn three_arm_adjusted_analysis() {
    let dir = tempfile::tempdir().unwrap();
    write_trial(dir.path(), 3, 600, false);
    let cfg = write_config(dir.path(), 3, "\"const@*\", \"pow1@*:age\", \"pow2@*:age\"", "logit");
    let json = dir.path().join("report.json");
    let out = run(&["analyze", cfg.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = AnalysisReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.analysis.len(), 2);
    let adjusted = &report.analysis[1];
    assert_eq!(adjusted.estimates.len(), 3);
    assert_eq!(adjusted.diagnostics.r, 3 + 6);
    assert_eq!(adjusted.lr.df, 2);
    assert!(adjusted.diagnostics.converged);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("beta3"), "{text}");
}

#[test]
fn four_arm_nine_constraints() {
    let dir = tempfile::tempdir().unwrap();
    write_trial(dir.path(), 4, 800, false);
    let cfg = write_config(dir.path(), 4, "\"const@*\", \"pow1@*:age\", \"pow2@*:age\"", "logit");
    let json = dir.path().join("report.json");
    let out = run(&["analyze", cfg.to_str().unwrap(), "--format", "csv", "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = AnalysisReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let adjusted = &report.analysis[1];
    assert_eq!(adjusted.estimates.len(), 4);
    assert_eq!(adjusted.constraints.len(), 9);
    assert_eq!(adjusted.diagnostics.r, 4 + 9);
    assert_eq!(adjusted.lr.df, 3);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("method,parameter"));
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
}

#[test]
fn two_arm_marginal_is_the_log_odds() {
    let dir = tempfile::tempdir().unwrap();
    write_trial(dir.path(), 2, 300, false);
    let cfg = write_config(dir.path(), 2, "", "logit");
    let json = dir.path().join("report.json");
    let out = run(&["analyze", cfg.to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = AnalysisReport::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.analysis.len(), 1);
    // closed form from the raw file
    let text = std::fs::read_to_string(dir.path().join("trial.csv")).unwrap();
    let mut counts = [[0.0f64; 2]; 2];
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let arm = usize::from(f[1] == "2");
        counts[arm][0] += 1.0;
        counts[arm][1] += f[0].parse::<f64>().unwrap();
    }
    let logit = |c: [f64; 2]| (c[1] / (c[0] - c[1])).ln();
    let est = &report.analysis[0].estimates;
    assert!((est[0] - logit(counts[0])).abs() < 1e-8);
    assert!((est[1] - (logit(counts[1]) - logit(counts[0]))).abs() < 1e-8);
}

#[test]
fn logit_on_a_continuous_outcome_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    write_trial(dir.path(), 2, 100, true);
    let cfg = write_config(dir.path(), 2, "", "logit");
    let out = run(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_inputs_exit_with_input_code() {
    let out = run(&["analyze", "/nonexistent/analysis.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2, "", "logit");
    let out = run(&["analyze", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate", "no-such-preset", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analysis_json_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    write_trial(dir.path(), 2, 250, false);
    let cfg = write_config(dir.path(), 2, "\"const@1\", \"fsin1@1:age\", \"fcos1@1:age\"", "logit");
    let json = dir.path().join("report.json");
    let out = run(&["analyze", cfg.to_str().unwrap(), "--format", "json", "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&json).unwrap();
    let report = AnalysisReport::from_json(&text).unwrap();
    assert_eq!(report.to_json() + "\n", text);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), text.trim_end());
    let again = AnalysisReport::from_json(&report.to_json()).unwrap();
    assert_eq!(again, report);
}

#[test]
fn simulation_json_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("sim.json");
    let out = run(&["simulate", "table1-sd1", "--reps", "3", "--seed", "5", "--workers", "2", "--json", json.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&json).unwrap();
    let report = SimulationReport::from_json(&text).unwrap();
    assert_eq!(report.reps, 3);
    assert_eq!(report.to_json() + "\n", text);
    for row in &report.rows {
        let orig = report.row(&row.method, &row.parameter).unwrap();
        assert_eq!(orig.mc_std.to_bits(), row.mc_std.to_bits());
    }
}

#[test]
fn single_replication_simulation() {
    let out = run(&["simulate", "table4-sd05", "--reps", "1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stdout.is_empty());
}

#[test]
fn help_lists_presets() {
    let out = run(&["simulate", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in el_adjust::sim::preset_names() {
        assert!(text.contains(name), "missing {name}");
    }
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("simulate"));
}
