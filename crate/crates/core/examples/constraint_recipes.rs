//! Building constraint recipes from descriptors, validating them, and
//! looking at the resulting auxiliary columns.

use el_adjust::equations::{auxiliary_equations, expand_descriptors};
use el_adjust::sim::{generate, preset};
use el_adjust::{ConstraintSpec, Link};

fn main() -> el_adjust::Result<()> {
    let data = generate(&preset("table3-a")?.scenario, 3)?;
    let recipes: [(&str, Vec<&str>); 4] = [
        ("marginal", vec![]),
        ("7 Fourier", vec!["const@1", "fsin1@1:x0", "fcos1@1:x0", "fsin1@1:x1", "fcos1@1:x1"]),
        ("Legendre", vec!["const@*", "leg1@*:x0", "leg2@*:x0", "leg1@*:x1"]),
        ("raw powers", vec!["const@1", "xpow1@1:x0", "xpow2@1:x0"]),
    ];
    for (label, descriptors) in recipes {
        let spec = ConstraintSpec::with_terms(Link::Logit, expand_descriptors(&descriptors, data.k_arms())?);
        let check = spec.validate(&data)?;
        println!("{label:<11} q={} r={} terms: {}", check.q, check.r, spec.descriptors().join(" "));
    }

    // Fourier columns are nearly uncorrelated
    let spec = ConstraintSpec::fourier(Link::Logit, 1, &[0], 2);
    let a = auxiliary_equations(&data, &spec)?;
    let gram = a.tr_mul(&a) / data.n() as f64;
    println!("\nsecond moments of {}:\n{gram:.3}", spec.descriptors().join(", "));

    // a logit recipe on a continuous outcome is rejected before fitting
    let continuous = el_adjust::TrialDataset::new(vec![0.2, 1.5, 0.7, 2.0, 0.1], vec![0, 1, 0, 1, 1], vec![], vec![0.5, 0.5])?;
    println!("logit on continuous y: {}", ConstraintSpec::marginal(Link::Logit).validate(&continuous).unwrap_err());
    Ok(())
}
