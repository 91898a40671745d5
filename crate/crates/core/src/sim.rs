//! Genotype and phenotype simulation, heritability bookkeeping, and the
//! type-I-error / power study harness.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::baseline::{fpca_test, ppca_test, single_snp_test};
use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::kernel::{
    gene_kernel, interaction_kernel, inverse_maf_weights, KernelMatrix, Weighting,
};
use crate::mixed::{reml_fit, VarianceComponents};
use crate::score::{interaction_test, overall_test};

/// Standard normal draw by Box-Muller; deterministic for a seeded generator.
pub(crate) fn randn<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// SplitMix64 step; used to derive independent per-replicate seeds.
pub(crate) fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Configuration for the haplotype-pool genotype generator.
#[derive(Debug, Clone)]
pub struct GenotypeSimConfig {
    pub n: usize,
    pub snps_per_gene: usize,
    pub maf_range: [f64; 2],
    pub ld_rho: f64,
    pub haplotype_pool: usize,
    pub seed: u64,
}

impl GenotypeSimConfig {
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(Error::Config(format!(
                "MAF range must satisfy 0 < low <= high <= 0.5, got [{lo}, {hi}]"
            )));
        }
        if self.n < 2 {
            return Err(Error::Config(format!("need n >= 2, got {}", self.n)));
        }
        if self.haplotype_pool < 2 {
            return Err(Error::Config(format!(
                "need a haplotype pool >= 2, got {}",
                self.haplotype_pool
            )));
        }
        if !(0.0..1.0).contains(&self.ld_rho) {
            return Err(Error::Config(format!(
                "ld_rho must lie in [0, 1), got {}",
                self.ld_rho
            )));
        }
        if self.snps_per_gene == 0 {
            return Err(Error::Config("need at least one SNP per gene".into()));
        }
        Ok(())
    }
}

const MAF_FILTER: f64 = 0.05;
const RESAMPLE_CAP: usize = 100;

/// Simulate a gene's genotypes: a haplotype pool with AR(1) latent
/// correlation between adjacent SNPs, two pool draws per individual summed
/// to allele counts. SNPs whose realized sample MAF falls below 5% are
/// redrawn up to a cap.
pub fn simulate_genotypes(cfg: &GenotypeSimConfig) -> Result<GenotypeMatrix> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let pool = cfg.haplotype_pool;
    let l = cfg.snps_per_gene;
    let n = cfg.n;
    let root = 1.0 - cfg.ld_rho * cfg.ld_rho;

    // latent Gaussians with lag-one correlation ld_rho per haplotype
    let mut z = DMatrix::zeros(pool, l);
    for h in 0..pool {
        for s in 0..l {
            z[(h, s)] = if s == 0 {
                randn(&mut rng)
            } else {
                cfg.ld_rho * z[(h, s - 1)] + root.sqrt() * randn(&mut rng)
            };
        }
    }
    let mut freqs: Vec<f64> = (0..l)
        .map(|_| rng.gen_range(cfg.maf_range[0]..=cfg.maf_range[1]))
        .collect();
    // each individual draws two haplotypes; the indices are fixed across
    // per-SNP resampling so LD with neighbors is preserved where possible
    let draws: Vec<(usize, usize)> = (0..n)
        .map(|_| (rng.gen_range(0..pool), rng.gen_range(0..pool)))
        .collect();

    let mut values = DMatrix::zeros(n, l);
    for s in 0..l {
        let mut attempts = 0;
        loop {
            let threshold = crate::stats::std_normal_quantile(freqs[s]);
            let mut total = 0u32;
            for (i, &(a, b)) in draws.iter().enumerate() {
                let code =
                    u8::from(z[(a, s)] < threshold) + u8::from(z[(b, s)] < threshold);
                values[(i, s)] = code;
                total += code as u32;
            }
            let p = total as f64 / (2.0 * n as f64);
            if p.min(1.0 - p) >= MAF_FILTER {
                break;
            }
            attempts += 1;
            if attempts > RESAMPLE_CAP {
                return Err(Error::Config(format!(
                    "SNP {s} failed the 5% MAF filter after {RESAMPLE_CAP} redraws; \
                     widen maf_range or enlarge the pool"
                )));
            }
            // redraw the latent column (anchored to its left neighbor) and
            // the target frequency
            freqs[s] = rng.gen_range(cfg.maf_range[0]..=cfg.maf_range[1]);
            for h in 0..pool {
                z[(h, s)] = if s == 0 {
                    randn(&mut rng)
                } else {
                    cfg.ld_rho * z[(h, s - 1)] + root.sqrt() * randn(&mut rng)
                };
            }
        }
    }
    GenotypeMatrix::new(
        values,
        (0..l).map(|s| format!("snp{}", s + 1)).collect(),
        (0..n).map(|i| format!("ind{}", i + 1)).collect(),
    )
}

/// Split the total genetic variance implied by heritability h2 into the two
/// main components and the interaction component with share eta.
pub fn components_from_heritability(
    h2: f64,
    eta: f64,
    sigma2: f64,
    main_ratio: f64,
) -> Result<VarianceComponents> {
    if !(0.0..1.0).contains(&h2) {
        return Err(Error::InvalidInput(format!(
            "heritability must lie in [0, 1), got {h2}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidInput(format!(
            "interaction share must lie in [0, 1], got {eta}"
        )));
    }
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "residual variance must be positive, got {sigma2}"
        )));
    }
    if !(0.0..=1.0).contains(&main_ratio) {
        return Err(Error::InvalidInput(format!(
            "main-effect split must lie in [0, 1], got {main_ratio}"
        )));
    }
    let genetic = sigma2 * h2 / (1.0 - h2);
    Ok(VarianceComponents {
        sigma2,
        tau1: main_ratio * (1.0 - eta) * genetic,
        tau2: (1.0 - main_ratio) * (1.0 - eta) * genetic,
        tau3: eta * genetic,
    })
}

/// Configuration for one phenotype draw.
#[derive(Debug, Clone)]
pub struct TraitSimConfig {
    pub mu: f64,
    pub components: VarianceComponents,
    pub seed: u64,
}

/// Draw y ~ MVN(mu 1, sigma2 I + tau1 K1 + tau2 K2 + tau3 K3) by Cholesky
/// factorization, with a diagonal ridge retry on failure.
pub fn simulate_phenotype(
    k1: &KernelMatrix,
    k2: &KernelMatrix,
    k3: &KernelMatrix,
    cfg: &TraitSimConfig,
) -> Result<DVector<f64>> {
    let n = k1.n();
    if k2.n() != n || k3.n() != n {
        return Err(Error::DimensionMismatch {
            context: format!("kernel sizes {}, {}, {}", n, k2.n(), k3.n()),
        });
    }
    let vc = &cfg.components;
    if vc.sigma2.is_nan() || vc.sigma2 <= 0.0 {
        return Err(Error::InvalidInput(
            "phenotype simulation requires positive residual variance".into(),
        ));
    }
    let mut v = DMatrix::identity(n, n) * vc.sigma2;
    v += vc.tau1 * k1.values();
    v += vc.tau2 * k2.values();
    v += vc.tau3 * k3.values();
    let chol = match Cholesky::new(v.clone()) {
        Some(c) => c,
        None => {
            let ridge = 1e-10 * n as f64;
            for i in 0..n {
                v[(i, i)] += ridge;
            }
            Cholesky::new(v).ok_or_else(|| {
                Error::Numeric("phenotype covariance is not positive definite".into())
            })?
        }
    };
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let z = DVector::from_fn(n, |_, _| randn(&mut rng));
    Ok(chol.l() * z + DVector::from_element(n, cfg.mu))
}

/// Methods the study harness can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMethod {
    Kernel,
    Ppca,
    Fpca,
    SingleSnp,
}

impl StudyMethod {
    pub fn name(&self) -> &'static str {
        match self {
            StudyMethod::Kernel => "kernel",
            StudyMethod::Ppca => "ppca",
            StudyMethod::Fpca => "fpca",
            StudyMethod::SingleSnp => "single_snp",
        }
    }
}

impl std::str::FromStr for StudyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernel" => Ok(StudyMethod::Kernel),
            "ppca" => Ok(StudyMethod::Ppca),
            "fpca" => Ok(StudyMethod::Fpca),
            "single_snp" => Ok(StudyMethod::SingleSnp),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected kernel, ppca, fpca or single_snp)"
            ))),
        }
    }
}

/// A study design: methods to run, sample size, genetic architecture,
/// replicate count, and test level.
#[derive(Debug, Clone)]
pub struct StudyDescriptor {
    pub methods: Vec<StudyMethod>,
    pub n: usize,
    pub h2: f64,
    pub eta: f64,
    pub sigma2: f64,
    pub mu: f64,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub snps_per_gene: usize,
    pub maf_range: [f64; 2],
    pub ld_rho: f64,
    pub haplotype_pool: usize,
    pub fpca_threshold: f64,
    pub weighting: Weighting,
}

impl Default for StudyDescriptor {
    fn default() -> Self {
        Self {
            methods: vec![StudyMethod::Kernel],
            n: 200,
            h2: 0.0,
            eta: 0.0,
            sigma2: 0.8,
            mu: 0.0,
            replicates: 100,
            alpha: 0.05,
            seed: 1,
            snps_per_gene: 10,
            maf_range: [0.05, 0.5],
            ld_rho: 0.5,
            haplotype_pool: 100,
            fpca_threshold: 0.85,
            weighting: Weighting::None,
        }
    }
}

impl StudyDescriptor {
    /// Parse a key = value descriptor; '#' starts a comment. The `scenario`
    /// key sets the architecture: I is the global null, II main effects only,
    /// III and IV interaction shares 0.2 and 0.5.
    pub fn parse(text: &str) -> Result<Self> {
        let mut d = StudyDescriptor::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config(format!(
                "descriptor line {}: expected key = value, got {raw:?}",
                idx + 1
            )))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Config(format!(
                    "descriptor line {}: cannot parse {what} from {value:?}",
                    idx + 1
                ))
            };
            match key {
                "methods" => {
                    d.methods = value
                        .split(',')
                        .map(|m| m.trim().parse())
                        .collect::<Result<Vec<_>>>()?;
                }
                "n" => d.n = value.parse().map_err(|_| bad("an integer"))?,
                "h2" => d.h2 = value.parse().map_err(|_| bad("a number"))?,
                "eta" => d.eta = value.parse().map_err(|_| bad("a number"))?,
                "sigma2" => d.sigma2 = value.parse().map_err(|_| bad("a number"))?,
                "mu" => d.mu = value.parse().map_err(|_| bad("a number"))?,
                "replicates" => {
                    d.replicates = value.parse().map_err(|_| bad("an integer"))?
                }
                "alpha" => d.alpha = value.parse().map_err(|_| bad("a number"))?,
                "seed" => d.seed = value.parse().map_err(|_| bad("an integer"))?,
                "snps_per_gene" => {
                    d.snps_per_gene = value.parse().map_err(|_| bad("an integer"))?
                }
                "maf_min" => d.maf_range[0] = value.parse().map_err(|_| bad("a number"))?,
                "maf_max" => d.maf_range[1] = value.parse().map_err(|_| bad("a number"))?,
                "ld_rho" => d.ld_rho = value.parse().map_err(|_| bad("a number"))?,
                "pool" => {
                    d.haplotype_pool = value.parse().map_err(|_| bad("an integer"))?
                }
                "fpca_threshold" => {
                    d.fpca_threshold = value.parse().map_err(|_| bad("a number"))?
                }
                "weights" => d.weighting = value.parse()?,
                "scenario" => match value {
                    "I" => {
                        d.h2 = 0.0;
                        d.eta = 0.0;
                    }
                    "II" => d.eta = 0.0,
                    "III" => d.eta = 0.2,
                    "IV" => d.eta = 0.5,
                    other => {
                        return Err(Error::Config(format!(
                            "unknown scenario {other:?} (expected I, II, III or IV)"
                        )))
                    }
                },
                other => {
                    return Err(Error::Config(format!(
                        "unknown descriptor key {other:?}"
                    )))
                }
            }
        }
        if d.methods.is_empty() {
            return Err(Error::Config("descriptor names no methods".into()));
        }
        if !(d.alpha > 0.0 && d.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                d.alpha
            )));
        }
        if d.replicates == 0 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        Ok(d)
    }
}

/// One row of a study table: rejection counts for a (method, test) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub method: &'static str,
    pub test: &'static str,
    pub rejections: usize,
    pub replicates: usize,
    pub alpha: f64,
}

impl StudyRow {
    pub fn fraction(&self) -> f64 {
        self.rejections as f64 / self.replicates as f64
    }

    pub fn standard_error(&self) -> f64 {
        let p = self.fraction();
        (p * (1.0 - p) / self.replicates as f64).sqrt()
    }
}

/// Rejection-rate table over methods and tests. `outcomes[rep][m]` keeps the
/// per-replicate (overall, interaction) rejection flags for method `m`, so
/// paired method comparisons on the shared replicates stay possible.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub outcomes: Vec<Vec<(bool, bool)>>,
}

impl StudyTable {
    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("method\ttest\trejections\treplicates\tfraction\tse\talpha\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\n",
                r.method,
                r.test,
                r.rejections,
                r.replicates,
                r.fraction(),
                r.standard_error(),
                r.alpha
            ));
        }
        out
    }
}

struct ReplicateOutcome {
    // per method: (overall rejected, interaction rejected)
    cells: Vec<(bool, bool)>,
}

fn run_replicate(d: &StudyDescriptor, rep: u64) -> Result<ReplicateOutcome> {
    let seed = derive_seed(d.seed, rep);
    let gcfg = |offset: u64| GenotypeSimConfig {
        n: d.n,
        snps_per_gene: d.snps_per_gene,
        maf_range: d.maf_range,
        ld_rho: d.ld_rho,
        haplotype_pool: d.haplotype_pool,
        seed: derive_seed(seed, offset),
    };
    let g1 = simulate_genotypes(&gcfg(1))?;
    let g2 = simulate_genotypes(&gcfg(2))?;
    let weights = |g: &GenotypeMatrix| match d.weighting {
        Weighting::None => Ok(None),
        Weighting::InverseMaf => inverse_maf_weights(g).map(Some),
    };
    let k1 = gene_kernel(&g1, weights(&g1)?.as_ref())?;
    let k2 = gene_kernel(&g2, weights(&g2)?.as_ref())?;
    let k3 = interaction_kernel(&k1, &k2)?;
    let components = components_from_heritability(d.h2, d.eta, d.sigma2, 0.5)?;
    let y = simulate_phenotype(
        &k1,
        &k2,
        &k3,
        &TraitSimConfig {
            mu: d.mu,
            components,
            seed: derive_seed(seed, 3),
        },
    )?;

    let mut cells = Vec::with_capacity(d.methods.len());
    for method in &d.methods {
        let (po, pi) = match method {
            StudyMethod::Kernel => {
                let overall = overall_test(&y, &k1, &k2, &k3)?;
                let null = reml_fit(&y, &[&k1, &k2, &k3], [true, true, true, false])?;
                let inter = interaction_test(&y, &k1, &k2, &k3, &null)?;
                (overall.p_value, inter.p_value)
            }
            StudyMethod::Ppca => {
                let r = ppca_test(&y, &g1, &g2)?;
                (r.p_overall, r.p_interaction)
            }
            StudyMethod::Fpca => {
                let r = fpca_test(&y, &g1, &g2, d.fpca_threshold)?;
                (r.p_overall, r.p_interaction)
            }
            StudyMethod::SingleSnp => {
                // gene-level data has no designated causal SNP; use the
                // leading column of each gene
                let r = single_snp_test(&y, &g1.column_f64(0), &g2.column_f64(0))?;
                (r.p_overall, r.p_interaction)
            }
        };
        cells.push((po < d.alpha, pi < d.alpha));
    }
    Ok(ReplicateOutcome { cells })
}

/// Run a study: shared replicates across methods, per-replicate seeds derived
/// from the master seed, counts aggregated order-independently.
pub fn run_study(d: &StudyDescriptor) -> Result<StudyTable> {
    let results: Vec<Result<ReplicateOutcome>> = (0..d.replicates as u64)
        .into_par_iter()
        .map(|rep| run_replicate(d, rep))
        .collect();
    let mut overall = vec![0usize; d.methods.len()];
    let mut interaction = vec![0usize; d.methods.len()];
    let mut outcomes = Vec::with_capacity(d.replicates);
    for o in results {
        let o = o?;
        for (m, (ro, ri)) in o.cells.iter().enumerate() {
            overall[m] += usize::from(*ro);
            interaction[m] += usize::from(*ri);
        }
        outcomes.push(o.cells);
    }
    let mut rows = Vec::new();
    for (m, method) in d.methods.iter().enumerate() {
        rows.push(StudyRow {
            method: method.name(),
            test: "overall",
            rejections: overall[m],
            replicates: d.replicates,
            alpha: d.alpha,
        });
        rows.push(StudyRow {
            method: method.name(),
            test: "interaction",
            rejections: interaction[m],
            replicates: d.replicates,
            alpha: d.alpha,
        });
    }
    Ok(StudyTable { rows, outcomes })
}
