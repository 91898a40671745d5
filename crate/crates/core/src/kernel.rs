//! Allele-matching similarity kernels and the product interaction kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;

/// Widest low-rank factor we keep for a product kernel before falling back
/// to an eigendecomposition on demand.
const MAX_PRODUCT_RANK: usize = 4096;

/// Per-SNP weights for the weighted AM kernel.
#[derive(Debug, Clone)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidInput(
                "kernel weights must be finite and non-negative".into(),
            ));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::ZeroWeights);
        }
        Ok(Self(weights))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Kernel weighting mode used by the scan and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    None,
    InverseMaf,
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Weighting::None),
            "inv-maf" => Ok(Weighting::InverseMaf),
            other => Err(Error::Config(format!(
                "unknown weighting mode {other:?} (expected none or inv-maf)"
            ))),
        }
    }
}

/// Exact structured form of a kernel: K = U Uᵀ + diag(d) with d ≥ 0.
#[derive(Debug, Clone)]
pub struct LowRank {
    pub u: DMatrix<f64>,
    pub d: DVector<f64>,
}

/// Dense n x n symmetric similarity matrix, optionally carrying an exact
/// low-rank representation used by the mixed-model fast paths.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    lowrank: Option<LowRank>,
}

impl KernelMatrix {
    /// Wrap a dense symmetric matrix. Asymmetry above 1e-9 is rejected; the
    /// lower triangle is mirrored so the stored matrix is exactly symmetric.
    pub fn from_dense(mut values: DMatrix<f64>) -> Result<Self> {
        let n = values.nrows();
        if n != values.ncols() {
            return Err(Error::DimensionMismatch {
                context: format!("kernel must be square, got {} x {}", n, values.ncols()),
            });
        }
        for i in 0..n {
            for j in 0..i {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!(
                        "kernel is not symmetric at ({i}, {j})"
                    )));
                }
                values[(j, i)] = values[(i, j)];
            }
        }
        Ok(Self {
            values,
            lowrank: None,
        })
    }

    /// Build from a low-rank factor: K = U Uᵀ + diag(d).
    pub fn from_lowrank(u: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        let n = u.nrows();
        if d.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!("diagonal length {} for factor with {} rows", d.len(), n),
            });
        }
        let mut values = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = u.row(i).dot(&u.row(j));
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
            values[(i, i)] += d[i];
        }
        Ok(Self {
            values,
            lowrank: Some(LowRank { u, d }),
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn lowrank(&self) -> Option<&LowRank> {
        self.lowrank.as_ref()
    }

    /// Return the stored structured form, or derive one by symmetric
    /// eigendecomposition (small negative eigenvalues are clipped). A stored
    /// factor wider than the matrix itself is also re-derived: downstream
    /// solvers pay per factor column, so a rank-n factor is always cheaper.
    pub fn lowrank_or_eig(&self) -> LowRank {
        if let Some(lr) = &self.lowrank {
            if lr.u.ncols() <= self.n() {
                return lr.clone();
            }
        }
        let n = self.n();
        let eig = self.values.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(1.0f64, f64::max);
        let tol = 1e-12 * max;
        let kept: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > tol).collect();
        let mut u = DMatrix::zeros(n, kept.len());
        for (col, &k) in kept.iter().enumerate() {
            let scale = eig.eigenvalues[k].sqrt();
            for i in 0..n {
                u[(i, col)] = eig.eigenvectors[(i, k)] * scale;
            }
        }
        LowRank {
            u,
            d: DVector::zeros(n),
        }
    }
}

/// Allele-matching score between two additive genotype codes: the number of
/// identical-by-state matches among the four cross-comparisons of alleles.
pub fn am_score(a: u8, b: u8) -> Result<u8> {
    if a > 2 {
        return Err(Error::InvalidGenotype { code: a });
    }
    if b > 2 {
        return Err(Error::InvalidGenotype { code: b });
    }
    Ok(match (a, b) {
        (1, _) | (_, 1) => 2,
        (x, y) if x == y => 4,
        _ => 0,
    })
}

/// Feature embedding of a genotype code such that phi(a) . phi(b) = AM(a, b) / 4.
fn phi(code: u8) -> [f64; 2] {
    match code {
        0 => [0.0, 1.0],
        1 => [0.5, 0.5],
        _ => [1.0, 0.0],
    }
}

/// Weighted AM kernel over a gene's SNPs. Off-diagonal entries are
/// sum_s w_s AM(g_is, g_js) / (4 sum_s w_s); the diagonal is 1.
pub fn gene_kernel(g: &GenotypeMatrix, w: Option<&WeightVector>) -> Result<KernelMatrix> {
    let n = g.n_individuals();
    let s = g.n_snps();
    if let Some(w) = w {
        if w.len() != s {
            return Err(Error::WeightLengthMismatch {
                expected: s,
                got: w.len(),
            });
        }
    }
    let unit = vec![1.0; s];
    let weights = w.map(|w| w.as_slice()).unwrap_or(&unit);
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }

    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        values[(i, i)] = 1.0;
        for j in 0..i {
            let mut num = 0.0;
            for (k, &w) in weights.iter().enumerate() {
                num += w * am_score(g.code(i, k), g.code(j, k))? as f64;
            }
            let v = num / (4.0 * total);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }

    // Exact structured form: per-SNP feature blocks scaled by sqrt(w/total),
    // plus the diagonal slack that lifts heterozygous self-similarity to 1.
    let mut u = DMatrix::zeros(n, 2 * s);
    for (k, &w) in weights.iter().enumerate() {
        let scale = (w / total).sqrt();
        for i in 0..n {
            let p = phi(g.code(i, k));
            u[(i, 2 * k)] = p[0] * scale;
            u[(i, 2 * k + 1)] = p[1] * scale;
        }
    }
    let d = DVector::from_fn(n, |i, _| (1.0 - u.row(i).norm_squared()).max(0.0));

    Ok(KernelMatrix {
        values,
        lowrank: Some(LowRank { u, d }),
    })
}

/// Element-wise (Schur) product of two kernels; the interaction kernel.
pub fn interaction_kernel(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<KernelMatrix> {
    let n = k1.n();
    if k2.n() != n {
        return Err(Error::DimensionMismatch {
            context: format!("kernel sizes {} and {}", n, k2.n()),
        });
    }
    let values = k1.values.component_mul(&k2.values);

    // Schur product of two structured kernels stays structured: the factor is
    // the row-wise Kronecker product and the diagonal slack follows from
    // (U1U1ᵀ + D1) o (U2U2ᵀ + D2).
    let lowrank = match (&k1.lowrank, &k2.lowrank) {
        (Some(a), Some(b)) if a.u.ncols() * b.u.ncols() <= MAX_PRODUCT_RANK => {
            let (ra, rb) = (a.u.ncols(), b.u.ncols());
            let mut u = DMatrix::zeros(n, ra * rb);
            for i in 0..n {
                for p in 0..ra {
                    for q in 0..rb {
                        u[(i, p * rb + q)] = a.u[(i, p)] * b.u[(i, q)];
                    }
                }
            }
            let d = DVector::from_fn(n, |i, _| {
                let na = a.u.row(i).norm_squared();
                let nb = b.u.row(i).norm_squared();
                na * b.d[i] + a.d[i] * nb + a.d[i] * b.d[i]
            });
            Some(LowRank { u, d })
        }
        _ => None,
    };

    Ok(KernelMatrix { values, lowrank })
}

/// Inverse minor-allele-frequency weights computed from the sample itself.
pub fn inverse_maf_weights(g: &GenotypeMatrix) -> Result<WeightVector> {
    let mut weights = Vec::with_capacity(g.n_snps());
    for s in 0..g.n_snps() {
        let maf = g.maf(s);
        if maf <= 0.0 {
            return Err(Error::MonomorphicSnp {
                snp: g.snp_ids()[s].clone(),
            });
        }
        weights.push(1.0 / maf);
    }
    WeightVector::new(weights)
}
