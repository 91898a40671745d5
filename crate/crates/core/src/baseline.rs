//! Regression baselines: the single-SNP interaction model and the partial-
//! and full-PCA interaction models, each reporting overall and interaction
//! F-test p-values.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::stats::f_sf;

/// Overall and interaction p-values from a fitted regression model.
#[derive(Debug, Clone)]
pub struct RegressionTestResult {
    pub p_overall: f64,
    pub p_interaction: f64,
    pub dof_model: usize,
    pub dof_residual: usize,
    /// Set when aliased design columns had to be dropped.
    pub rank_deficient: bool,
}

/// Residual sum of squares after projecting y on the span of `cols`,
/// dropping columns that are numerically in the span of earlier ones.
fn project_rss(cols: &[DVector<f64>], y: &DVector<f64>) -> (f64, usize, usize) {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dropped = 0;
    for c in cols {
        let orig = c.norm();
        let mut v = c.clone();
        // modified Gram-Schmidt, applied twice for stability
        for _ in 0..2 {
            for q in &basis {
                let p = q.dot(&v);
                v -= p * q;
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * orig.max(1e-300) {
            dropped += 1;
            continue;
        }
        basis.push(v / norm);
    }
    let mut r = y.clone();
    for q in &basis {
        let p = q.dot(&r);
        r -= p * q;
    }
    (r.norm_squared(), basis.len(), dropped)
}

/// Nested-model F-test. Returns p = 1 when the extra columns add no rank.
fn nested_f_test(
    rss_red: f64,
    rank_red: usize,
    rss_full: f64,
    rank_full: usize,
    n: usize,
) -> Result<f64> {
    let q = rank_full - rank_red;
    if n <= rank_full {
        return Err(Error::InvalidInput(format!(
            "no residual degrees of freedom: n = {n}, model rank = {rank_full}"
        )));
    }
    if q == 0 {
        return Ok(1.0);
    }
    let dof_resid = (n - rank_full) as f64;
    if rss_full <= 0.0 {
        // perfect fit: any explained variance is infinitely significant
        return Ok(if rss_red > rss_full { 0.0 } else { 1.0 });
    }
    let f = ((rss_red - rss_full) / q as f64) / (rss_full / dof_resid);
    Ok(f_sf(f.max(0.0), q as f64, dof_resid))
}

fn is_constant(v: &DVector<f64>) -> bool {
    let first = v[0];
    v.iter().all(|&x| x == first)
}

/// Ordinary least squares fit of y on intercept + S1 + S2 + S1*S2 with the
/// overall F-test of all three genetic coefficients and the interaction
/// F-test of the product coefficient.
pub fn single_snp_test(
    y: &DVector<f64>,
    s1: &DVector<f64>,
    s2: &DVector<f64>,
) -> Result<RegressionTestResult> {
    let n = y.len();
    if s1.len() != n || s2.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "trait length {n} vs SNP columns {} and {}",
                s1.len(),
                s2.len()
            ),
        });
    }
    if is_constant(s1) || is_constant(s2) {
        return Err(Error::InvalidInput(
            "single-SNP test requires non-constant SNP columns".into(),
        ));
    }
    let ones = DVector::from_element(n, 1.0);
    let prod = s1.component_mul(s2);
    let full = [ones.clone(), s1.clone(), s2.clone(), prod];
    let (rss_full, rank_full, dropped_full) = project_rss(&full, y);
    let (rss_int, rank_int, _) = project_rss(&full[..3], y);
    let (rss_null, rank_null, _) = project_rss(&full[..1], y);

    let p_overall = nested_f_test(rss_null, rank_null, rss_full, rank_full, n)?;
    let rank_deficient = dropped_full > 0;
    let p_interaction = if rank_full == rank_int {
        // interaction column aliased with the main effects
        1.0
    } else {
        nested_f_test(rss_int, rank_int, rss_full, rank_full, n)?
    };
    Ok(RegressionTestResult {
        p_overall,
        p_interaction,
        dof_model: rank_full - 1,
        dof_residual: n - rank_full,
        rank_deficient,
    })
}

/// Principal-component scores of a gene: center columns, take the SVD, keep
/// the minimal leading set whose squared singular values reach the variance
/// threshold. Loadings are oriented so each component's largest-magnitude
/// loading is positive.
pub fn gene_pcs(g: &GenotypeMatrix, var_threshold: f64) -> Result<DMatrix<f64>> {
    if !(var_threshold > 0.0 && var_threshold <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "variance threshold must be in (0, 1], got {var_threshold}"
        )));
    }
    let n = g.n_individuals();
    let l = g.n_snps();
    let mut x = g.to_f64();
    for j in 0..l {
        let mean = x.column(j).sum() / n as f64;
        for i in 0..n {
            x[(i, j)] -= mean;
        }
    }
    let svd = x.svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let vt = svd.v_t.as_ref().expect("right singular vectors requested");
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput(
            "zero-variance gene: all genotype rows identical".into(),
        ));
    }
    let tol = 1e-10 * svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let mut kept = 0;
    let mut energy = 0.0;
    while kept < rank {
        energy += svd.singular_values[kept].powi(2);
        kept += 1;
        if energy >= var_threshold * total - 1e-12 * total {
            break;
        }
    }
    let kept = kept.max(1);
    let mut scores = DMatrix::zeros(n, kept);
    for j in 0..kept {
        let loading = vt.row(j);
        let mut sign = 1.0;
        let mut best = 0.0;
        for &v in loading.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = if v >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        for i in 0..n {
            scores[(i, j)] = sign * u[(i, j)] * svd.singular_values[j];
        }
    }
    Ok(scores)
}

/// Partial-PCA baseline: all single-SNP main effects of both genes plus one
/// interaction term, the product of the two leading PC scores.
pub fn ppca_test(
    y: &DVector<f64>,
    g1: &GenotypeMatrix,
    g2: &GenotypeMatrix,
) -> Result<RegressionTestResult> {
    let n = y.len();
    check_rows(n, g1, g2)?;
    let pc1 = gene_pcs(g1, 1.0)?.column(0).into_owned();
    let pc2 = gene_pcs(g2, 1.0)?.column(0).into_owned();
    let mut cols = vec![DVector::from_element(n, 1.0)];
    for j in 0..g1.n_snps() {
        cols.push(g1.column_f64(j));
    }
    for j in 0..g2.n_snps() {
        cols.push(g2.column_f64(j));
    }
    let n_main = cols.len();
    cols.push(pc1.component_mul(&pc2));

    let (rss_full, rank_full, dropped) = project_rss(&cols, y);
    let (rss_main, rank_main, _) = project_rss(&cols[..n_main], y);
    let (rss_null, rank_null, _) = project_rss(&cols[..1], y);
    let p_overall = nested_f_test(rss_null, rank_null, rss_full, rank_full, n)?;
    let p_interaction = if rank_full == rank_main {
        1.0
    } else {
        nested_f_test(rss_main, rank_main, rss_full, rank_full, n)?
    };
    Ok(RegressionTestResult {
        p_overall,
        p_interaction,
        dof_model: rank_full - 1,
        dof_residual: n - rank_full,
        rank_deficient: dropped > 0,
    })
}

/// Full-PCA baseline: PC main effects for both genes plus every pairwise PC
/// product as the interaction block.
pub fn fpca_test(
    y: &DVector<f64>,
    g1: &GenotypeMatrix,
    g2: &GenotypeMatrix,
    var_threshold: f64,
) -> Result<RegressionTestResult> {
    let n = y.len();
    check_rows(n, g1, g2)?;
    let pcs1 = gene_pcs(g1, var_threshold)?;
    let pcs2 = gene_pcs(g2, var_threshold)?;
    let (p1, p2) = (pcs1.ncols(), pcs2.ncols());
    if n <= 1 + p1 + p2 + p1 * p2 {
        return Err(Error::InvalidInput(format!(
            "no residual degrees of freedom with {p1} x {p2} components; \
             use a variance threshold keeping fewer components"
        )));
    }
    let mut cols = vec![DVector::from_element(n, 1.0)];
    for j in 0..p1 {
        cols.push(pcs1.column(j).into_owned());
    }
    for j in 0..p2 {
        cols.push(pcs2.column(j).into_owned());
    }
    let n_main = cols.len();
    for a in 0..p1 {
        for b in 0..p2 {
            cols.push(pcs1.column(a).component_mul(&pcs2.column(b)));
        }
    }
    let (rss_full, rank_full, dropped) = project_rss(&cols, y);
    let (rss_main, rank_main, _) = project_rss(&cols[..n_main], y);
    let (rss_null, rank_null, _) = project_rss(&cols[..1], y);
    let p_overall = nested_f_test(rss_null, rank_null, rss_full, rank_full, n)?;
    let p_interaction = if rank_full == rank_main {
        1.0
    } else {
        nested_f_test(rss_main, rank_main, rss_full, rank_full, n)?
    };
    Ok(RegressionTestResult {
        p_overall,
        p_interaction,
        dof_model: rank_full - 1,
        dof_residual: n - rank_full,
        rank_deficient: dropped > 0,
    })
}

fn check_rows(n: usize, g1: &GenotypeMatrix, g2: &GenotypeMatrix) -> Result<()> {
    if g1.n_individuals() != n || g2.n_individuals() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "trait length {n} vs genotype rows {} and {}",
                g1.n_individuals(),
                g2.n_individuals()
            ),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn random_genotypes(n: usize, l: usize, rng: &mut impl Rng) -> GenotypeMatrix {
        loop {
            let values = DMatrix::from_fn(n, l, |_, _| rng.gen_range(0..=2u8));
            let ok = (0..l).all(|j| {
                let col = values.column(j);
                let first = col[0];
                !col.iter().all(|&v| v == first)
            });
            if ok {
                return GenotypeMatrix::new(
                    values,
                    (0..l).map(|j| format!("s{j}")).collect(),
                    (0..n).map(|i| format!("i{i}")).collect(),
                )
                .unwrap();
            }
        }
    }

    fn random_y(n: usize, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
    }

    #[test]
    fn constant_snp_rejected() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let s1 = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let s2 = DVector::from_vec(vec![0.0, 1.0, 2.0, 1.0]);
        assert!(single_snp_test(&y, &s1, &s2).is_err());
    }

    #[test]
    fn perfect_interaction_signal() {
        let n = 40;
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let g = random_genotypes(n, 2, &mut rng);
        let s1 = g.column_f64(0);
        let s2 = g.column_f64(1);
        let y = 0.1 * &s1 + 0.1 * &s2
            + 5.0 * s1.component_mul(&s2)
            + 1e-4 * random_y(n, &mut rng);
        let res = single_snp_test(&y, &s1, &s2).unwrap();
        assert!(res.p_interaction < 1e-6, "p = {}", res.p_interaction);
        assert!(res.p_overall < 1e-6);
    }

    #[test]
    fn interaction_p_symmetric_in_snp_order() {
        let n = 30;
        let mut rng = ChaCha20Rng::seed_from_u64(32);
        let g = random_genotypes(n, 2, &mut rng);
        let s1 = g.column_f64(0);
        let s2 = g.column_f64(1);
        let y = random_y(n, &mut rng);
        let a = single_snp_test(&y, &s1, &s2).unwrap();
        let b = single_snp_test(&y, &s2, &s1).unwrap();
        assert_abs_diff_eq!(a.p_interaction, b.p_interaction, epsilon = 1e-12);
        assert_abs_diff_eq!(a.p_overall, b.p_overall, epsilon = 1e-12);
    }

    #[test]
    fn aliased_interaction_flags_and_p_one() {
        // binary SNPs with s1 * s2 == s1 (s2 = 1 wherever s1 > 0 fails; use
        // s2 with value 1 on the support of s1): construct s1 in {0,2},
        // s2 = 1 everywhere s1 = 2 and also 1 elsewhere is constant, so use
        // a column where the product reproduces s1 exactly.
        let s1 = DVector::from_vec(vec![0.0, 0.0, 2.0, 2.0, 0.0, 2.0]);
        let s2 = DVector::from_vec(vec![0.0, 2.0, 1.0, 1.0, 2.0, 1.0]);
        // s1 * s2 = (0, 0, 2, 2, 0, 2) = s1
        let y = DVector::from_vec(vec![0.3, -0.1, 0.7, 1.1, 0.2, -0.4]);
        let res = single_snp_test(&y, &s1, &s2).unwrap();
        assert!(res.rank_deficient);
        assert_eq!(res.p_interaction, 1.0);
    }

    #[test]
    fn add_constant_to_trait_leaves_p_unchanged() {
        let n = 25;
        let mut rng = ChaCha20Rng::seed_from_u64(33);
        let g1 = random_genotypes(n, 3, &mut rng);
        let g2 = random_genotypes(n, 3, &mut rng);
        let y = random_y(n, &mut rng);
        let shifted = &y + DVector::from_element(n, 9.0);
        let a = single_snp_test(&y, &g1.column_f64(0), &g2.column_f64(0)).unwrap();
        let b = single_snp_test(&shifted, &g1.column_f64(0), &g2.column_f64(0)).unwrap();
        assert_abs_diff_eq!(a.p_overall, b.p_overall, epsilon = 1e-9);
        assert_abs_diff_eq!(a.p_interaction, b.p_interaction, epsilon = 1e-9);
        let a = fpca_test(&y, &g1, &g2, 0.85).unwrap();
        let b = fpca_test(&shifted, &g1, &g2, 0.85).unwrap();
        assert_abs_diff_eq!(a.p_overall, b.p_overall, epsilon = 1e-9);
        let a = ppca_test(&y, &g1, &g2).unwrap();
        let b = ppca_test(&shifted, &g1, &g2).unwrap();
        assert_abs_diff_eq!(a.p_overall, b.p_overall, epsilon = 1e-9);
    }

    #[test]
    fn pcs_threshold_one_returns_full_rank() {
        let n = 20;
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let g = random_genotypes(n, 5, &mut rng);
        let pcs = gene_pcs(&g, 1.0).unwrap();
        // centered genotype matrix of 5 generic columns has rank 5
        assert_eq!(pcs.ncols(), 5);
    }

    #[test]
    fn rank_one_gene_gives_one_component() {
        // duplicate the same column pattern: rank 1 after centering
        let base = [0u8, 1, 2, 1, 0, 2, 1, 1];
        let values = DMatrix::from_fn(8, 4, |i, _| base[i]);
        let g = GenotypeMatrix::new(
            values,
            (0..4).map(|j| format!("s{j}")).collect(),
            (0..8).map(|i| format!("i{i}")).collect(),
        )
        .unwrap();
        for threshold in [0.1, 0.5, 1.0] {
            let pcs = gene_pcs(&g, threshold).unwrap();
            assert_eq!(pcs.ncols(), 1);
        }
    }

    #[test]
    fn zero_variance_gene_rejected() {
        let values = DMatrix::from_element(4, 3, 1u8);
        let g = GenotypeMatrix::new(
            values,
            (0..3).map(|j| format!("s{j}")).collect(),
            (0..4).map(|i| format!("i{i}")).collect(),
        )
        .unwrap();
        assert!(gene_pcs(&g, 0.85).is_err());
    }

    #[test]
    fn pcs_capture_the_energy_threshold() {
        let n = 50;
        let mut rng = ChaCha20Rng::seed_from_u64(35);
        let g = random_genotypes(n, 10, &mut rng);
        let pcs = gene_pcs(&g, 0.85).unwrap();
        let captured: f64 = (0..pcs.ncols()).map(|j| pcs.column(j).norm_squared()).sum();
        let mut x = g.to_f64();
        for j in 0..10 {
            let mean = x.column(j).sum() / n as f64;
            for i in 0..n {
                x[(i, j)] -= mean;
            }
        }
        let total = x.norm_squared();
        assert!(captured >= 0.85 * total - 1e-9, "{captured} vs {total}");
    }

    #[test]
    fn pc_scores_are_deterministic_under_row_copy() {
        let n = 16;
        let mut rng = ChaCha20Rng::seed_from_u64(36);
        let g = random_genotypes(n, 4, &mut rng);
        let a = gene_pcs(&g, 0.85).unwrap();
        let b = gene_pcs(&g.clone(), 0.85).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ppca_detects_pc_product_signal() {
        let n = 80;
        let mut rng = ChaCha20Rng::seed_from_u64(37);
        let g1 = random_genotypes(n, 4, &mut rng);
        let g2 = random_genotypes(n, 4, &mut rng);
        let pc1 = gene_pcs(&g1, 1.0).unwrap().column(0).into_owned();
        let pc2 = gene_pcs(&g2, 1.0).unwrap().column(0).into_owned();
        let y = pc1.component_mul(&pc2) * 3.0 + 1e-5 * random_y(n, &mut rng);
        let res = ppca_test(&y, &g1, &g2).unwrap();
        assert!(res.p_interaction < 1e-6, "p = {}", res.p_interaction);
    }

    #[test]
    fn fpca_on_size_one_genes_matches_single_snp() {
        let n = 35;
        let mut rng = ChaCha20Rng::seed_from_u64(38);
        let g1 = random_genotypes(n, 1, &mut rng);
        let g2 = random_genotypes(n, 1, &mut rng);
        let y = random_y(n, &mut rng);
        let fpca = fpca_test(&y, &g1, &g2, 1.0).unwrap();
        let snp = single_snp_test(&y, &g1.column_f64(0), &g2.column_f64(0)).unwrap();
        assert_abs_diff_eq!(fpca.p_overall, snp.p_overall, epsilon = 1e-10);
        assert_abs_diff_eq!(fpca.p_interaction, snp.p_interaction, epsilon = 1e-10);
    }

    #[test]
    fn fpca_rejects_saturated_design() {
        let n = 8;
        let mut rng = ChaCha20Rng::seed_from_u64(39);
        let g1 = random_genotypes(n, 5, &mut rng);
        let g2 = random_genotypes(n, 5, &mut rng);
        let y = random_y(n, &mut rng);
        assert!(fpca_test(&y, &g1, &g2, 1.0).is_err());
    }
}
