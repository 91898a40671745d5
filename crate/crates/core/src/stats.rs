//! Thin wrappers around the reference distributions used by the tests.

use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};
use statrs::function::gamma::gamma_ur;

/// Upper-tail probability of a chi-square distribution with `df` degrees of
/// freedom, via the regularized upper incomplete gamma function.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Upper-tail probability of an F distribution.
pub fn f_sf(x: f64, df1: f64, df2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = FisherSnedecor::new(df1, df2).expect("valid F degrees of freedom");
    dist.sf(x).clamp(0.0, 1.0)
}

/// Standard normal quantile function.
pub fn std_normal_quantile(p: f64) -> f64 {
    let dist = Normal::new(0.0, 1.0).unwrap();
    dist.inverse_cdf(p)
}
