//! Monte Carlo comparison of the marginal and Fourier-adjusted estimators
//! for a named preset.
//!
//! cargo run --release --example simulate_preset -- table1-sd2 1000 7

use el_adjust::sim::{preset, run_experiment};

fn main() -> el_adjust::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "table1-sd2".into());
    let reps = args.next().map_or(200, |s| s.parse().expect("reps"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed"));
    let p = preset(&name)?;
    println!("{}: {}", p.name, p.description);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = run_experiment(&p.scenario, &p.methods, reps, seed, 0.95, workers)?;
    print!("{}", report.to_text());
    Ok(())
}
