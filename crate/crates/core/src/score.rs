//! Score tests for the overall genetic effect and for the interaction
//! component, with Satterthwaite scaled chi-square calibration.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, LowRank};
use crate::mixed::{FactoredCov, NullFit, VarianceComponents};
use crate::stats::chi2_sf;

/// Method-of-moments parameters of the scaled chi-square a * chisq_g.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatterthwaiteParams {
    pub a: f64,
    pub g: f64,
    pub delta: f64,
    pub nu: f64,
}

/// Match the first two moments (delta, nu) to a * chisq_g.
pub fn satterthwaite(delta: f64, nu: f64) -> Result<SatterthwaiteParams> {
    if delta.is_nan() || delta <= 0.0 || nu.is_nan() || nu <= 0.0 {
        return Err(Error::InvalidMoments { delta, nu });
    }
    Ok(SatterthwaiteParams {
        a: nu / (2.0 * delta),
        g: 2.0 * delta * delta / nu,
        delta,
        nu,
    })
}

/// Upper-tail probability of the scaled chi-square at statistic `s`.
pub fn scaled_chisq_sf(s: f64, params: &SatterthwaiteParams) -> f64 {
    if s <= 0.0 {
        return 1.0;
    }
    chi2_sf(s / params.a, params.g)
}

/// Outcome of a score test. `satterthwaite` is absent when the moments were
/// degenerate; `correction_dropped` marks a singular efficient-information
/// correction in the interaction test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    pub satterthwaite: Option<SatterthwaiteParams>,
    pub p_value: f64,
    pub null_fit: NullFit,
    pub degenerate: bool,
    pub correction_dropped: bool,
}

/// Divisor convention for the null residual variance of the overall test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NullVariance {
    /// Maximum-likelihood divisor n.
    #[default]
    Mle,
    /// Unbiased divisor n - 1, for sensitivity checks.
    Unbiased,
}

/// Center the rows and columns of a kernel: C = P0 K P0 with
/// P0 = I - 1 1ᵀ / n.
fn double_center(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let nf = n as f64;
    let row_mean: Vec<f64> = (0..n).map(|i| k.row(i).sum() / nf).collect();
    let grand = row_mean.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| k[(i, j)] - row_mean[i] - row_mean[j] + grand)
}

/// First two moments of the overall statistic: delta = tr(P0 sum K_l)/2 and
/// the efficient-information variance nu = SUM(I_tt - I_ts I_tsᵀ / I_ss).
pub fn overall_moments(
    k1: &KernelMatrix,
    k2: &KernelMatrix,
    k3: &KernelMatrix,
    n: usize,
) -> Result<(f64, f64)> {
    let ks = [k1, k2, k3];
    for k in &ks {
        if k.n() != n {
            return Err(Error::DimensionMismatch {
                context: format!("kernel is {} x {} but n = {}", k.n(), k.n(), n),
            });
        }
    }
    let centered: Vec<DMatrix<f64>> = ks.iter().map(|k| double_center(k.values())).collect();
    // tr(P0 K) = tr(P0 K P0) since P0 is idempotent
    let tr_p0k: Vec<f64> = centered.iter().map(|c| c.trace()).collect();
    let delta = 0.5 * tr_p0k.iter().sum::<f64>();

    // I_tt[i][j] = tr(P0 K_i P0 K_j)/2 = sum(C_i o C_j)/2
    let mut i_tt = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            i_tt[i][j] = 0.5
                * centered[i]
                    .iter()
                    .zip(centered[j].iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
    }
    let i_ts: Vec<f64> = tr_p0k.iter().map(|t| 0.5 * t).collect();
    let i_ss = 0.5 * (n as f64 - 1.0);
    let mut nu = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            nu += i_tt[i][j] - i_ts[i] * i_ts[j] / i_ss;
        }
    }
    Ok((delta, nu))
}

/// Score test of the overall genetic effect (all tau components zero) with
/// the default MLE null-variance divisor.
pub fn overall_test(
    y: &DVector<f64>,
    k1: &KernelMatrix,
    k2: &KernelMatrix,
    k3: &KernelMatrix,
) -> Result<TestResult> {
    overall_test_with(y, k1, k2, k3, NullVariance::Mle)
}

pub fn overall_test_with(
    y: &DVector<f64>,
    k1: &KernelMatrix,
    k2: &KernelMatrix,
    k3: &KernelMatrix,
    divisor: NullVariance,
) -> Result<TestResult> {
    let n = y.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "overall test needs n >= 3, got {n}"
        )));
    }
    let mean = y.sum() / n as f64;
    let centered = DVector::from_fn(n, |i, _| y[i] - mean);
    let ss = centered.norm_squared();
    if ss <= 0.0 {
        return Err(Error::DegenerateTrait);
    }
    let sigma2_0 = match divisor {
        NullVariance::Mle => ss / n as f64,
        NullVariance::Unbiased => ss / (n as f64 - 1.0),
    };
    let mut ksum = k1.values() + k2.values();
    ksum += k3.values();
    let statistic = centered.dot(&(&ksum * &centered)) / (2.0 * sigma2_0);
    let (delta, nu) = overall_moments(k1, k2, k3, n)?;

    let null_fit = intercept_only_fit(y, sigma2_0, mean);
    if delta <= 0.0 || nu <= 0.0 {
        return Ok(TestResult {
            statistic,
            satterthwaite: None,
            p_value: 1.0,
            null_fit,
            degenerate: true,
            correction_dropped: false,
        });
    }
    let params = satterthwaite(delta, nu)?;
    let p_value = scaled_chisq_sf(statistic, &params);
    Ok(TestResult {
        statistic,
        satterthwaite: Some(params),
        p_value,
        null_fit,
        degenerate: false,
        correction_dropped: false,
    })
}

fn intercept_only_fit(y: &DVector<f64>, sigma2: f64, mu: f64) -> NullFit {
    let n = y.len();
    let empty = || LowRank {
        u: DMatrix::zeros(n, 0),
        d: DVector::zeros(n),
    };
    let components = VarianceComponents {
        sigma2,
        tau1: 0.0,
        tau2: 0.0,
        tau3: 0.0,
    };
    let cov = FactoredCov::build(&components, &[empty(), empty(), empty()])
        .expect("diagonal covariance with positive sigma2");
    let resid: f64 = y.iter().map(|v| (v - mu).powi(2)).sum();
    let reml_loglik =
        -0.5 * (n as f64) * sigma2.ln() - 0.5 * (n as f64 / sigma2).ln() - 0.5 * resid / sigma2;
    NullFit {
        components,
        mu_hat: mu,
        reml_loglik,
        v: cov,
    }
}

/// Score test of the interaction component (tau3 = 0) given the fitted
/// two-main-effect null model.
pub fn interaction_test(
    y: &DVector<f64>,
    k1: &KernelMatrix,
    k2: &KernelMatrix,
    k3: &KernelMatrix,
    null_fit: &NullFit,
) -> Result<TestResult> {
    let n = y.len();
    for k in [k1, k2, k3] {
        if k.n() != n {
            return Err(Error::DimensionMismatch {
                context: format!("kernel is {} x {} but y has length {}", k.n(), k.n(), n),
            });
        }
    }
    if null_fit.n() != n {
        return Err(Error::DimensionMismatch {
            context: format!("null fit is for n = {} but y has length {}", null_fit.n(), n),
        });
    }
    if null_fit.components.tau3 != 0.0 {
        return Err(Error::InvalidInput(
            "interaction test requires a null fit with tau3 pinned at zero".into(),
        ));
    }

    // P01 = S^-1 - S^-1 1 (1ᵀ S^-1 1)^-1 1ᵀ S^-1 with S the null covariance.
    let ones = DVector::from_element(n, 1.0);
    let si = null_fit.v.solve_mat(&DMatrix::identity(n, n));
    let si1 = null_fit.v.solve_vec(&ones);
    let s11 = ones.dot(&si1);
    let p01 = &si - (&si1 * si1.transpose()) / s11;

    let p01y = &p01 * y;
    let statistic = 0.5 * p01y.dot(&(k3.values() * &p01y));

    let m1 = &p01 * k1.values();
    let m2 = &p01 * k2.values();
    let m3 = &p01 * k3.values();
    let tr_prod = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
        let n = a.nrows();
        let mut t = 0.0;
        for i in 0..n {
            t += a.row(i).dot(&b.column(i).transpose());
        }
        t
    };

    let delta = 0.5 * m3.trace();
    let nu_raw = 0.5 * tr_prod(&m3, &m3);
    let phi = DVector::from_vec(vec![
        tr_prod(&p01, &m3),
        tr_prod(&m3, &m1),
        tr_prod(&m3, &m2),
    ]);
    let dmat = DMatrix::from_fn(3, 3, |i, j| match (i, j) {
        (0, 0) => tr_prod(&p01, &p01),
        (0, 1) | (1, 0) => tr_prod(&p01, &m1),
        (0, 2) | (2, 0) => tr_prod(&p01, &m2),
        (1, 1) => tr_prod(&m1, &m1),
        (1, 2) | (2, 1) => tr_prod(&m1, &m2),
        _ => tr_prod(&m2, &m2),
    });
    let (nu, correction_dropped) = match dmat.clone().lu().solve(&phi) {
        Some(x) => (nu_raw - 0.5 * phi.dot(&x), false),
        None => (nu_raw, true),
    };

    if delta <= 0.0 || nu <= 0.0 {
        return Ok(TestResult {
            statistic,
            satterthwaite: None,
            p_value: 1.0,
            null_fit: null_fit.clone(),
            degenerate: true,
            correction_dropped,
        });
    }
    let params = satterthwaite(delta, nu)?;
    let p_value = scaled_chisq_sf(statistic, &params);
    Ok(TestResult {
        statistic,
        satterthwaite: Some(params),
        p_value,
        null_fit: null_fit.clone(),
        degenerate: false,
        correction_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixed::reml_fit;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn random_psd_kernel(n: usize, rank: usize, rng: &mut impl Rng) -> KernelMatrix {
        let u = DMatrix::from_fn(n, rank, |_, _| rng.gen::<f64>() - 0.5) / (rank as f64).sqrt();
        let d = DVector::from_fn(n, |_, _| 0.05 + 0.1 * rng.gen::<f64>());
        KernelMatrix::from_lowrank(u, d).unwrap()
    }

    fn random_y(n: usize, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
    }

    #[test]
    fn satterthwaite_examples() {
        let p = satterthwaite(1.0, 2.0).unwrap();
        assert_eq!((p.a, p.g), (1.0, 1.0));
        let p = satterthwaite(3.0, 6.0).unwrap();
        assert_eq!((p.a, p.g), (1.0, 3.0));
        let p = satterthwaite(1.5, 1.5).unwrap();
        assert_eq!((p.a, p.g), (0.5, 3.0));
    }

    #[test]
    fn satterthwaite_rejects_bad_moments() {
        assert!(matches!(
            satterthwaite(0.0, 1.0),
            Err(Error::InvalidMoments { .. })
        ));
        assert!(matches!(
            satterthwaite(1.0, -1.0),
            Err(Error::InvalidMoments { .. })
        ));
    }

    #[test]
    fn satterthwaite_identities() {
        for (d, v) in [(0.7, 1.9), (12.0, 5.0), (1e-3, 1e-4)] {
            let p = satterthwaite(d, v).unwrap();
            assert_abs_diff_eq!(p.a * p.g, d, epsilon = 1e-12 * d);
            assert_abs_diff_eq!(2.0 * p.a * p.a * p.g, v, epsilon = 1e-12 * v);
        }
    }

    #[test]
    fn scaled_chisq_sf_examples() {
        let one_df = satterthwaite(1.0, 2.0).unwrap();
        assert_eq!(scaled_chisq_sf(0.0, &one_df), 1.0);
        assert_abs_diff_eq!(scaled_chisq_sf(3.841, &one_df), 0.05, epsilon = 1e-3);
        let two_df = satterthwaite(2.0, 4.0).unwrap();
        assert_abs_diff_eq!(scaled_chisq_sf(2.0, &two_df), (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn scaled_chisq_sf_is_decreasing() {
        let p = satterthwaite(2.5, 3.0).unwrap();
        let mut last = 1.0;
        for i in 1..50 {
            let cur = scaled_chisq_sf(i as f64 * 0.3, &p);
            assert!(cur < last);
            last = cur;
        }
    }

    #[test]
    fn zero_kernels_have_zero_moments() {
        let n = 7;
        let z = KernelMatrix::from_dense(DMatrix::zeros(n, n)).unwrap();
        let (delta, nu) = overall_moments(&z, &z, &z, n).unwrap();
        assert_eq!(delta, 0.0);
        assert_eq!(nu, 0.0);
    }

    #[test]
    fn identity_kernels_are_degenerate() {
        let n = 9;
        let id = KernelMatrix::from_dense(DMatrix::identity(n, n)).unwrap();
        let (delta, nu) = overall_moments(&id, &id, &id, n).unwrap();
        assert_abs_diff_eq!(delta, 3.0 * (n as f64 - 1.0) / 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nu, 0.0, epsilon = 1e-8);
    }

    fn dense_p0(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
    }

    #[test]
    fn moments_match_straight_line_evaluation() {
        let n = 12;
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let k1 = random_psd_kernel(n, 4, &mut rng);
        let k2 = random_psd_kernel(n, 4, &mut rng);
        let k3 = random_psd_kernel(n, 4, &mut rng);
        let (delta, nu) = overall_moments(&k1, &k2, &k3, n).unwrap();

        let p0 = dense_p0(n);
        let ks = [k1.values(), k2.values(), k3.values()];
        let mut delta_ref = 0.0;
        for k in &ks {
            delta_ref += 0.5 * (&p0 * *k).trace();
        }
        let mut i_tt = DMatrix::zeros(3, 3);
        let mut i_ts = DVector::zeros(3);
        for i in 0..3 {
            i_ts[i] = 0.5 * (&p0 * ks[i]).trace();
            for j in 0..3 {
                i_tt[(i, j)] = 0.5 * (&p0 * ks[i] * &p0 * ks[j]).trace();
            }
        }
        let i_ss = 0.5 * (&p0 * &p0).trace();
        let eff = &i_tt - (&i_ts * i_ts.transpose()) / i_ss;
        let nu_ref: f64 = eff.iter().sum();
        assert_abs_diff_eq!(delta, delta_ref, epsilon = 1e-10);
        assert_abs_diff_eq!(nu, nu_ref, epsilon = 1e-10);
    }

    #[test]
    fn constant_trait_is_rejected() {
        let n = 6;
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let k = random_psd_kernel(n, 3, &mut rng);
        let y = DVector::from_element(n, 4.2);
        assert!(matches!(
            overall_test(&y, &k, &k, &k),
            Err(Error::DegenerateTrait)
        ));
    }

    #[test]
    fn overall_test_small_n_straight_line() {
        // Worked-example-style 3 x 3 kernels with y = (1, 0, -1)
        let k = KernelMatrix::from_dense(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.5, 0.5, 0.5, 1.0, 0.7, 0.5, 0.7, 1.0],
        ))
        .unwrap();
        let k3 = crate::kernel::interaction_kernel(&k, &k).unwrap();
        let y = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let res = overall_test(&y, &k, &k, &k3).unwrap();

        let n = 3;
        let p0 = dense_p0(n);
        let yc = &p0 * &y;
        let sigma2 = yc.norm_squared() / n as f64;
        let ksum = k.values() + k.values() + k3.values();
        let s_ref = yc.dot(&(&ksum * &yc)) / (2.0 * sigma2);
        assert_abs_diff_eq!(res.statistic, s_ref, epsilon = 1e-12);
        let (delta, nu) = overall_moments(&k, &k, &k3, n).unwrap();
        let params = res.satterthwaite.unwrap();
        assert_abs_diff_eq!(params.delta, delta, epsilon = 1e-12);
        assert_abs_diff_eq!(params.nu, nu, epsilon = 1e-12);
        assert_abs_diff_eq!(
            res.p_value,
            chi2_sf(s_ref / params.a, params.g),
            epsilon = 1e-12
        );
    }

    #[test]
    fn overall_test_location_and_scale_invariance() {
        let n = 15;
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let k1 = random_psd_kernel(n, 4, &mut rng);
        let k2 = random_psd_kernel(n, 4, &mut rng);
        let k3 = random_psd_kernel(n, 4, &mut rng);
        let y = random_y(n, &mut rng);
        let base = overall_test(&y, &k1, &k2, &k3).unwrap();

        let shifted = &y + DVector::from_element(n, 5.0);
        let shifted_res = overall_test(&shifted, &k1, &k2, &k3).unwrap();
        assert_abs_diff_eq!(base.statistic, shifted_res.statistic, epsilon = 1e-9);
        assert_abs_diff_eq!(base.p_value, shifted_res.p_value, epsilon = 1e-12);

        let scaled = 3.0 * &y;
        let scaled_res = overall_test(&scaled, &k1, &k2, &k3).unwrap();
        assert_abs_diff_eq!(base.statistic, scaled_res.statistic, epsilon = 1e-9);
        assert_abs_diff_eq!(base.p_value, scaled_res.p_value, epsilon = 1e-12);
    }

    #[test]
    fn unbiased_divisor_shrinks_statistic() {
        let n = 10;
        let mut rng = ChaCha20Rng::seed_from_u64(24);
        let k1 = random_psd_kernel(n, 4, &mut rng);
        let k2 = random_psd_kernel(n, 4, &mut rng);
        let k3 = random_psd_kernel(n, 4, &mut rng);
        let y = random_y(n, &mut rng);
        let mle = overall_test_with(&y, &k1, &k2, &k3, NullVariance::Mle).unwrap();
        let unbiased = overall_test_with(&y, &k1, &k2, &k3, NullVariance::Unbiased).unwrap();
        assert_abs_diff_eq!(
            unbiased.statistic,
            mle.statistic * (n as f64 - 1.0) / n as f64,
            epsilon = 1e-9
        );
    }

    #[test]
    fn zero_interaction_kernel_gives_p_one() {
        let n = 12;
        let mut rng = ChaCha20Rng::seed_from_u64(25);
        let k1 = random_psd_kernel(n, 4, &mut rng);
        let k2 = random_psd_kernel(n, 4, &mut rng);
        let z = KernelMatrix::from_dense(DMatrix::zeros(n, n)).unwrap();
        let y = random_y(n, &mut rng);
        let fit = reml_fit(&y, &[&k1, &k2, &z], [true, true, true, false]).unwrap();
        let res = interaction_test(&y, &k1, &k2, &z, &fit).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
        assert!(res.degenerate);
    }

    #[test]
    fn interaction_reduces_to_scaled_centering_when_taus_zero() {
        let n = 5;
        let mut rng = ChaCha20Rng::seed_from_u64(26);
        let k1 = random_psd_kernel(n, 3, &mut rng);
        let k2 = random_psd_kernel(n, 3, &mut rng);
        let k3 = random_psd_kernel(n, 3, &mut rng);
        let y = random_y(n, &mut rng);
        // null fit with only sigma2 free: Sigma = sigma2 I
        let fit = reml_fit(&y, &[&k1, &k2, &k3], [true, false, false, false]).unwrap();
        let res = interaction_test(&y, &k1, &k2, &k3, &fit).unwrap();
        let s2 = fit.components.sigma2;
        let p0 = dense_p0(n);
        let yc = &p0 * &y;
        let expected = 0.5 * yc.dot(&(k3.values() * &yc)) / (s2 * s2);
        assert_abs_diff_eq!(res.statistic, expected, epsilon = 1e-8 * expected.abs());
    }

    #[test]
    fn interaction_moments_match_dense_inverse() {
        let n = 8;
        let mut rng = ChaCha20Rng::seed_from_u64(27);
        let k1 = random_psd_kernel(n, 3, &mut rng);
        let k2 = random_psd_kernel(n, 3, &mut rng);
        let k3 = random_psd_kernel(n, 3, &mut rng);
        let y = random_y(n, &mut rng);
        let fit = reml_fit(&y, &[&k1, &k2, &k3], [true, true, true, false]).unwrap();
        let res = interaction_test(&y, &k1, &k2, &k3, &fit).unwrap();

        // straight-line rebuild of P01 from the fitted components
        let vc = fit.components;
        let mut sigma = DMatrix::identity(n, n) * vc.sigma2;
        sigma += vc.tau1 * k1.values();
        sigma += vc.tau2 * k2.values();
        let si = sigma.try_inverse().unwrap();
        let ones = DVector::from_element(n, 1.0);
        let si1 = &si * &ones;
        let p01 = &si - (&si1 * si1.transpose()) / ones.dot(&si1);
        let p01y = &p01 * &y;
        let s_ref = 0.5 * p01y.dot(&(k3.values() * &p01y));
        assert_abs_diff_eq!(res.statistic, s_ref, epsilon = 1e-7 * (1.0 + s_ref.abs()));

        let m3 = &p01 * k3.values();
        let delta_ref = 0.5 * m3.trace();
        let params = res.satterthwaite.unwrap();
        assert_abs_diff_eq!(params.delta, delta_ref, epsilon = 1e-7 * (1.0 + delta_ref.abs()));

        let m1 = &p01 * k1.values();
        let m2 = &p01 * k2.values();
        let phi = DVector::from_vec(vec![
            (&p01 * &m3).trace(),
            (&m3 * &m1).trace(),
            (&m3 * &m2).trace(),
        ]);
        let dmat = DMatrix::from_row_slice(
            3,
            3,
            &[
                (&p01 * &p01).trace(),
                (&p01 * &m1).trace(),
                (&p01 * &m2).trace(),
                (&p01 * &m1).trace(),
                (&m1 * &m1).trace(),
                (&m1 * &m2).trace(),
                (&p01 * &m2).trace(),
                (&m2 * &m1).trace(),
                (&m2 * &m2).trace(),
            ],
        );
        let nu_ref = 0.5 * (&m3 * &m3).trace()
            - 0.5 * phi.dot(&dmat.lu().solve(&phi).unwrap());
        assert_abs_diff_eq!(params.nu, nu_ref, epsilon = 1e-6 * (1.0 + nu_ref.abs()));
    }

    #[test]
    fn interaction_test_location_invariance() {
        let n = 14;
        let mut rng = ChaCha20Rng::seed_from_u64(28);
        let k1 = random_psd_kernel(n, 4, &mut rng);
        let k2 = random_psd_kernel(n, 4, &mut rng);
        let k3 = random_psd_kernel(n, 4, &mut rng);
        let y = random_y(n, &mut rng);
        let fit = reml_fit(&y, &[&k1, &k2, &k3], [true, true, true, false]).unwrap();
        let base = interaction_test(&y, &k1, &k2, &k3, &fit).unwrap();
        let shifted = &y + DVector::from_element(n, 11.0);
        // same covariance fit: only the profiled intercept moves under a shift
        let shifted_res = interaction_test(&shifted, &k1, &k2, &k3, &fit).unwrap();
        assert_abs_diff_eq!(base.statistic, shifted_res.statistic, epsilon = 1e-8);
        assert_abs_diff_eq!(base.p_value, shifted_res.p_value, epsilon = 1e-10);
    }

    #[test]
    fn interaction_rejects_nonzero_tau3_null() {
        let n = 6;
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let k = random_psd_kernel(n, 3, &mut rng);
        let y = random_y(n, &mut rng);
        let mut fit = reml_fit(&y, &[&k, &k, &k], [true, true, true, false]).unwrap();
        fit.components.tau3 = 0.1;
        assert!(interaction_test(&y, &k, &k, &k, &fit).is_err());
    }
}
