//! Fit, Wald intervals, and full-vector and profile likelihood-ratio tests
//! on one simulated two-arm trial.

use el_adjust::sim::{generate, preset, true_beta};
use el_adjust::{wald_interval, ConstraintSpec, ElEstimator, Link};

fn main() -> el_adjust::Result<()> {
    let scenario = preset("table1-sd2")?.scenario;
    let data = generate(&scenario, 42)?;
    let truth = true_beta(&scenario)?;
    for (label, spec) in [
        ("marginal", ConstraintSpec::marginal(Link::Logit)),
        ("5 Fourier", ConstraintSpec::fourier(Link::Logit, 1, &[0], 1)),
    ] {
        let mut est = ElEstimator::new(&data, &spec)?;
        let fit = est.fit(None)?;
        println!("{label}: beta_hat {:?}, se {:?}", fit.beta_hat, fit.se());
        for j in 0..2 {
            let (lo, hi) = wald_interval(&fit, j, 0.95)?;
            println!("  beta{} 95% CI [{lo:.4}, {hi:.4}]", j + 1);
        }
        let full = est.test_full(&fit, &truth)?;
        println!("  H0: beta = true value      T = {:.4}, df {}, p = {:.4}", full.statistic, full.df, full.p_value);
        let prof = est.test_profile(&fit, &[(1, 0.0)])?;
        println!("  H0: beta2 = 0 (profiled)   T = {:.4}, df {}, p = {:.4}", prof.statistic, prof.df, prof.p_value);
    }
    Ok(())
}
