//! True marginal log-odds parameters of every simulation preset, by
//! Gauss–Hermite quadrature over the covariate distribution.

use el_adjust::sim::{arm_probabilities, preset, preset_names, true_beta};

fn main() -> el_adjust::Result<()> {
    println!("{:<12} {:>9} {:>9} {:>9} {:>9}", "preset", "P(Y|Z=0)", "P(Y|Z=1)", "beta1", "beta2");
    for name in preset_names() {
        let s = preset(name)?.scenario;
        let p = arm_probabilities(&s)?;
        let b = true_beta(&s)?;
        println!("{name:<12} {:>9.5} {:>9.5} {:>9.5} {:>9.5}", p[0], p[1], b[0], b[1]);
    }
    Ok(())
}
