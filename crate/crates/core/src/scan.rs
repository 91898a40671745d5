//! Two-stage genome-wide pair scan: the overall score test on every gene
//! pair, then the interaction test on stage-1 survivors.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genotype::{GenePartition, GenotypeMatrix};
use crate::kernel::{
    gene_kernel, interaction_kernel, inverse_maf_weights, KernelMatrix, Weighting,
};
use crate::mixed::{reml_fit, VarianceComponents};
use crate::score::{interaction_test, overall_test};

/// Per-gene kernels computed once and shared read-only by all pair tests.
pub struct KernelStore {
    entries: Vec<(String, KernelMatrix)>,
    computed: AtomicUsize,
}

impl KernelStore {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gene_id(&self, i: usize) -> &str {
        &self.entries[i].0
    }

    pub fn kernel(&self, i: usize) -> &KernelMatrix {
        &self.entries[i].1
    }

    pub fn get(&self, gene_id: &str) -> Option<&KernelMatrix> {
        self.entries
            .iter()
            .find(|(id, _)| id == gene_id)
            .map(|(_, k)| k)
    }

    /// Number of gene kernels built so far; stays at the gene count for the
    /// whole scan (pair tests never recompute them).
    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }
}

/// Build one AM kernel per gene of the partition.
pub fn precompute_gene_kernels(
    g: &GenotypeMatrix,
    partition: &GenePartition,
    weighting: Weighting,
) -> Result<KernelStore> {
    if partition.is_empty() {
        return Err(Error::InvalidInput("empty gene partition".into()));
    }
    let computed = AtomicUsize::new(0);
    let mut entries = Vec::with_capacity(partition.len());
    for (gene_id, cols) in partition.iter() {
        let sub = g.subset_columns(cols)?;
        let w = match weighting {
            Weighting::None => None,
            Weighting::InverseMaf => Some(inverse_maf_weights(&sub)?),
        };
        let k = gene_kernel(&sub, w.as_ref())?;
        computed.fetch_add(1, Ordering::Relaxed);
        entries.push((gene_id.clone(), k));
    }
    Ok(KernelStore { entries, computed })
}

/// Stage-1 gate of the two-stage scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage1Policy {
    /// Fixed p-value cutoff.
    Fixed(f64),
    /// Bonferroni at the given family-wise level over the pair count.
    Bonferroni(f64),
}

impl Stage1Policy {
    pub fn threshold(&self, n_pairs: usize) -> f64 {
        match self {
            Stage1Policy::Fixed(c) => *c,
            Stage1Policy::Bonferroni(alpha) => alpha / n_pairs.max(1) as f64,
        }
    }
}

impl std::str::FromStr for Stage1Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse_level = |v: &str, what: &str| -> Result<f64> {
            let level: f64 = v.parse().map_err(|_| {
                Error::Config(format!("cannot parse {what} level from {v:?}"))
            })?;
            if !(level > 0.0 && level <= 1.0) {
                return Err(Error::Config(format!(
                    "{what} level must lie in (0, 1], got {level}"
                )));
            }
            Ok(level)
        };
        match s.split_once(':') {
            Some(("fixed", v)) => Ok(Stage1Policy::Fixed(parse_level(v, "fixed cutoff")?)),
            Some(("bonferroni", v)) => {
                Ok(Stage1Policy::Bonferroni(parse_level(v, "bonferroni")?))
            }
            _ => Err(Error::Config(format!(
                "unknown stage-1 policy {s:?} (expected fixed:<c> or bonferroni:<alpha>)"
            ))),
        }
    }
}

/// Result of one gene pair in a scan.
#[derive(Debug, Clone)]
pub struct ScanRecord {
    pub gene1: String,
    pub gene2: String,
    /// Full four-component REML fit; present only for stage-2 survivors.
    pub components: Option<VarianceComponents>,
    pub p_overall: f64,
    pub p_interaction: Option<f64>,
    /// Interaction p-value at or below the stage-2 level.
    pub significant: bool,
    /// Diagnostic message when this pair's computation failed.
    pub failure: Option<String>,
}

fn scan_pair(
    y: &DVector<f64>,
    store: &KernelStore,
    i: usize,
    j: usize,
    threshold: f64,
    alpha2: f64,
) -> ScanRecord {
    let gene1 = store.gene_id(i).to_string();
    let gene2 = store.gene_id(j).to_string();
    let fail = |message: String| ScanRecord {
        gene1: gene1.clone(),
        gene2: gene2.clone(),
        components: None,
        p_overall: f64::NAN,
        p_interaction: None,
        significant: false,
        failure: Some(message),
    };
    let k1 = store.kernel(i);
    let k2 = store.kernel(j);
    let k3 = match interaction_kernel(k1, k2) {
        Ok(k) => k,
        Err(e) => return fail(e.to_string()),
    };
    let overall = match overall_test(y, k1, k2, &k3) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let mut record = ScanRecord {
        gene1,
        gene2,
        components: None,
        p_overall: overall.p_value,
        p_interaction: None,
        significant: false,
        failure: None,
    };
    if overall.p_value > threshold {
        return record;
    }
    let stage2 = (|| -> Result<(f64, VarianceComponents)> {
        let null = reml_fit(y, &[k1, k2, &k3], [true, true, true, false])?;
        let inter = interaction_test(y, k1, k2, &k3, &null)?;
        let full = reml_fit(y, &[k1, k2, &k3], [true, true, true, true])?;
        Ok((inter.p_value, full.components))
    })();
    match stage2 {
        Ok((p, components)) => {
            record.p_interaction = Some(p);
            record.components = Some(components);
            record.significant = p <= alpha2;
        }
        Err(e) => record.failure = Some(e.to_string()),
    }
    record
}

/// Run the two-stage scan over all unordered gene pairs. Records come back
/// sorted by (p_overall, gene1, gene2); failed pairs sort last and carry a
/// diagnostic instead of being dropped.
pub fn two_stage_scan(
    y: &DVector<f64>,
    store: &KernelStore,
    stage1: Stage1Policy,
    alpha2: f64,
) -> Result<Vec<ScanRecord>> {
    if store.len() < 2 {
        return Err(Error::InvalidInput(
            "a scan needs at least two genes".into(),
        ));
    }
    if !(alpha2 > 0.0 && alpha2 <= 1.0) {
        return Err(Error::Config(format!(
            "stage-2 level must lie in (0, 1], got {alpha2}"
        )));
    }
    let mean = y.sum() / y.len() as f64;
    if y.iter().all(|&v| v == mean) {
        return Err(Error::DegenerateTrait);
    }
    let g = store.len();
    let n_pairs = g * (g - 1) / 2;
    let threshold = stage1.threshold(n_pairs);
    let pairs: Vec<(usize, usize)> = (0..g)
        .flat_map(|i| ((i + 1)..g).map(move |j| (i, j)))
        .collect();
    let mut records: Vec<ScanRecord> = pairs
        .par_iter()
        .map(|&(i, j)| scan_pair(y, store, i, j, threshold, alpha2))
        .collect();
    records.sort_by(|a, b| {
        a.p_overall
            .total_cmp(&b.p_overall)
            .then_with(|| a.gene1.cmp(&b.gene1))
            .then_with(|| a.gene2.cmp(&b.gene2))
    });
    Ok(records)
}

/// Plain edge list of interactions at or below the cutoff:
/// gene1, gene2, p_interaction, tau3.
pub fn export_edges(records: &[ScanRecord], p_cut: f64) -> String {
    let mut out = String::from("gene1\tgene2\tp_interaction\ttau3\n");
    for r in records {
        if let Some(p) = r.p_interaction {
            if p <= p_cut {
                let tau3 = r
                    .components
                    .map(|c| format!("{:.6e}", c.tau3))
                    .unwrap_or_else(|| "NA".into());
                out.push_str(&format!("{}\t{}\t{:.3e}\t{}\n", r.gene1, r.gene2, p, tau3));
            }
        }
    }
    out
}
