//! Gene-pair testing methods behind a common interface, registered by name.

use nalgebra::DVector;

use crate::baseline::{fpca_test, ppca_test, single_snp_test};
use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::kernel::{gene_kernel, interaction_kernel, inverse_maf_weights, Weighting};
use crate::mixed::reml_fit;
use crate::score::{interaction_test, overall_test};

/// Overall and interaction p-values for one gene pair.
#[derive(Debug, Clone, Copy)]
pub struct PairPValues {
    pub p_overall: f64,
    pub p_interaction: f64,
}

/// A method that tests one gene pair against a trait.
pub trait PairTest: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, y: &DVector<f64>, g1: &GenotypeMatrix, g2: &GenotypeMatrix)
        -> Result<PairPValues>;
}

/// The kernel-machine method: AM kernels, overall score test, then the
/// interaction score test at the fitted two-main-effect null.
pub struct KernelMethod {
    pub weighting: Weighting,
}

impl PairTest for KernelMethod {
    fn name(&self) -> &'static str {
        "kernel"
    }

    fn run(
        &self,
        y: &DVector<f64>,
        g1: &GenotypeMatrix,
        g2: &GenotypeMatrix,
    ) -> Result<PairPValues> {
        let weights = |g: &GenotypeMatrix| match self.weighting {
            Weighting::None => Ok(None),
            Weighting::InverseMaf => inverse_maf_weights(g).map(Some),
        };
        let w1 = weights(g1)?;
        let w2 = weights(g2)?;
        let k1 = gene_kernel(g1, w1.as_ref())?;
        let k2 = gene_kernel(g2, w2.as_ref())?;
        let k3 = interaction_kernel(&k1, &k2)?;
        let overall = overall_test(y, &k1, &k2, &k3)?;
        let null = reml_fit(y, &[&k1, &k2, &k3], [true, true, true, false])?;
        let inter = interaction_test(y, &k1, &k2, &k3, &null)?;
        Ok(PairPValues {
            p_overall: overall.p_value,
            p_interaction: inter.p_value,
        })
    }
}

/// Partial-PCA regression baseline.
pub struct PpcaMethod;

impl PairTest for PpcaMethod {
    fn name(&self) -> &'static str {
        "ppca"
    }

    fn run(
        &self,
        y: &DVector<f64>,
        g1: &GenotypeMatrix,
        g2: &GenotypeMatrix,
    ) -> Result<PairPValues> {
        let r = ppca_test(y, g1, g2)?;
        Ok(PairPValues {
            p_overall: r.p_overall,
            p_interaction: r.p_interaction,
        })
    }
}

/// Full-PCA regression baseline.
pub struct FpcaMethod {
    pub var_threshold: f64,
}

impl PairTest for FpcaMethod {
    fn name(&self) -> &'static str {
        "fpca"
    }

    fn run(
        &self,
        y: &DVector<f64>,
        g1: &GenotypeMatrix,
        g2: &GenotypeMatrix,
    ) -> Result<PairPValues> {
        let r = fpca_test(y, g1, g2, self.var_threshold)?;
        Ok(PairPValues {
            p_overall: r.p_overall,
            p_interaction: r.p_interaction,
        })
    }
}

/// Single-SNP interaction regression on the leading column of each gene.
pub struct SingleSnpMethod;

impl PairTest for SingleSnpMethod {
    fn name(&self) -> &'static str {
        "single_snp"
    }

    fn run(
        &self,
        y: &DVector<f64>,
        g1: &GenotypeMatrix,
        g2: &GenotypeMatrix,
    ) -> Result<PairPValues> {
        let r = single_snp_test(y, &g1.column_f64(0), &g2.column_f64(0))?;
        Ok(PairPValues {
            p_overall: r.p_overall,
            p_interaction: r.p_interaction,
        })
    }
}

/// Name-keyed registry of pair-testing methods.
pub struct MethodRegistry {
    methods: Vec<Box<dyn PairTest>>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: Vec::new(),
        }
    }

    /// The four built-in methods with default settings.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(KernelMethod {
            weighting: Weighting::None,
        }));
        r.register(Box::new(PpcaMethod));
        r.register(Box::new(FpcaMethod {
            var_threshold: 0.85,
        }));
        r.register(Box::new(SingleSnpMethod));
        r
    }

    pub fn register(&mut self, method: Box<dyn PairTest>) {
        self.methods.retain(|m| m.name() != method.name());
        self.methods.push(method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn PairTest> {
        self.methods
            .iter()
            .map(|m| m.as_ref())
            .find(|m| m.name() == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {name:?} (available: {})",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.iter().map(|m| m.name()).collect()
    }
}
