//! Chi-square, noncentral chi-square and normal distribution functions used
//! to calibrate the likelihood-ratio statistics.

use libm::{erfc, lgamma as ln_gamma};

use crate::error::{Error, Result};

const ITMAX: usize = 10_000;
const EPS: f64 = 1e-16;

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..ITMAX {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..ITMAX {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

fn check_df(df: u32) -> Result<()> {
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be positive".into()));
    }
    Ok(())
}

/// Central chi-square CDF. Negative `x` gives 0.
pub fn chi2_cdf(x: f64, df: u32) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(df as f64 / 2.0, x / 2.0)
}

/// Upper tail `1 - chi2_cdf(x, df)`, accurate far into the tail.
pub fn chi2_sf(x: f64, df: u32) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

fn chi2_pdf(x: f64, df: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = df as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Quantile of the central chi-square: bracketing, then Newton steps kept
/// inside the bracket (bisection when a step leaves it).
pub fn chi2_quantile(p: f64, df: u32) -> Result<f64> {
    check_df(df)?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("chi-square quantile needs p in [0,1), got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = (df as f64).max(1.0);
    while chi2_cdf(hi, df) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = chi2_cdf(x, df) - p;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = chi2_pdf(x, df);
        let newton = if dens > 0.0 { x - f / dens } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-14 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Noncentral chi-square CDF as a Poisson mixture of central CDFs,
/// `sum_j Pois(j; ncp/2) chi2_cdf(x, df + 2j)`, summed outward from the
/// Poisson mode until the neglected mass is below `1e-12`.
pub fn noncentral_chi2_cdf(x: f64, df: u32, ncp: f64) -> Result<f64> {
    check_df(df)?;
    if !ncp.is_finite() || ncp < 0.0 {
        return Err(Error::Domain(format!("noncentrality must be finite and >= 0, got {ncp}")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if ncp == 0.0 {
        return Ok(chi2_cdf(x, df));
    }
    let mu = ncp / 2.0;
    let mode = mu.floor() as u64;
    let log_pois = |j: u64| -mu + j as f64 * mu.ln() - ln_gamma(j as f64 + 1.0);
    let term = |j: u64| chi2_cdf(x, df + 2 * j as u32);
    let mut total = 0.0;
    let mut mass = 0.0;
    // downward from the mode, including it
    let mut j = mode;
    loop {
        let w = log_pois(j).exp();
        total += w * term(j);
        mass += w;
        if j == 0 || w < 1e-17 {
            break;
        }
        j -= 1;
    }
    let mut j = mode + 1;
    while 1.0 - mass > 1e-12 {
        let w = log_pois(j).exp();
        total += w * term(j);
        mass += w;
        j += 1;
        if w < 1e-300 || j > mode + 100_000 {
            break;
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF: Acklam's rational approximation polished by
/// two Halley steps.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs p in (0,1), got {p}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        let e = normal_cdf(x) - p;
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
        x -= u / (1.0 + x * u / 2.0);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        assert!((chi2_cdf(3.841459, 1) - 0.95).abs() < 1e-6);
        assert!((chi2_cdf(5.991465, 2) - 0.95).abs() < 1e-6);
        assert!((chi2_quantile(0.95, 1).unwrap() - 3.841458820694124).abs() < 1e-10);
        assert!((chi2_quantile(0.95, 3).unwrap() - 7.814727903251178).abs() < 1e-10);
    }

    #[test]
    fn df2_closed_form() {
        for i in 0..=400 {
            let x = i as f64 * 0.1;
            assert!((chi2_cdf(x, 2) - (1.0 - (-x / 2.0).exp())).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn matches_statrs_on_a_grid() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        for df in [1u32, 2, 3, 5, 9, 30] {
            let d = ChiSquared::new(df as f64).unwrap();
            for i in 1..200 {
                let x = i as f64 * 0.37;
                assert!((chi2_cdf(x, df) - d.cdf(x)).abs() < 1e-12, "df={df} x={x}");
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for df in [1u32, 2, 4, 10] {
            for p in [0.01, 0.25, 0.5, 0.9, 0.95, 0.999] {
                let x = chi2_quantile(p, df).unwrap();
                assert!((chi2_cdf(x, df) - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noncentral_reduces_at_zero() {
        for x in [0.5, 1.0, 3.0, 10.0] {
            assert_eq!(noncentral_chi2_cdf(x, 3, 0.0).unwrap(), chi2_cdf(x, 3));
        }
    }

    #[test]
    fn noncentral_df1_is_folded_normal() {
        // X = (Z + d)^2 with Z standard normal: P(X <= x) = Phi(sqrt x - d) - Phi(-sqrt x - d)
        for (x, d) in [(3.841459f64, 3.0), (1.0, 0.5), (10.0, 2.0), (0.2, 4.0)] {
            let s = x.sqrt();
            let exact = normal_cdf(s - d) - normal_cdf(-s - d);
            let got = noncentral_chi2_cdf(x, 1, d * d).unwrap();
            assert!((got - exact).abs() < 1e-11, "{got} vs {exact}");
        }
    }

    #[test]
    fn normal_quantiles() {
        assert!((normal_quantile(0.975).unwrap() - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.75).unwrap() - 0.6744897501960817).abs() < 1e-12);
        assert!((normal_quantile(1e-10).unwrap() + 6.361340902404056).abs() < 1e-9);
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn domain_errors() {
        assert!(chi2_quantile(0.5, 0).is_err());
        assert!(chi2_quantile(1.0, 2).is_err());
        assert!(noncentral_chi2_cdf(1.0, 2, -1.0).is_err());
    }
}
