//! Asymptotic power of the profile test of no treatment effect, from the
//! noncentral chi-square limit, against Monte Carlo power.
//!
//! cargo run --release --example power_analysis -- table4-sd2 1000

use nalgebra::DMatrix;

use el_adjust::power_analytic;
use el_adjust::sim::{power_oracle, preset, run_experiment};

fn main() -> el_adjust::Result<()> {
    // scalar case: power of a two-sided z-test with drift 3
    let one = DMatrix::identity(1, 1);
    println!("drift 3, one df: power {:.4}", power_analytic(&one, &[3.0], 0.05, None)?);

    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "table4-sd2".into());
    let reps = args.next().map_or(1000, |s| s.parse().expect("reps"));
    let p = preset(&name)?;
    let report = run_experiment(&p.scenario, &p.methods, reps, 5, 0.95, 1)?;
    println!("\n{name}, n = {}", p.scenario.n);
    println!("{:<12} {:>10} {:>10}", "method", "asymptotic", "simulated");
    for m in &p.methods {
        let asym = power_oracle(&p.scenario, &m.spec, 0.05, 200_000, 1)?;
        let sim = report.test(&m.label).map_or(f64::NAN, |t| t.power);
        println!("{:<12} {asym:>10.4} {sim:>10.4}", m.label);
    }
    Ok(())
}
