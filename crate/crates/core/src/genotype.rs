//! Genotype data structures: additive-coded SNP matrices and gene partitions.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// n individuals by L SNPs of additive genotype codes in {0, 1, 2}.
#[derive(Debug, Clone)]
pub struct GenotypeMatrix {
    values: DMatrix<u8>,
    snp_ids: Vec<String>,
    individual_ids: Vec<String>,
}

impl GenotypeMatrix {
    pub fn new(
        values: DMatrix<u8>,
        snp_ids: Vec<String>,
        individual_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, l) = values.shape();
        if n < 2 || l < 1 {
            return Err(Error::InvalidInput(format!(
                "genotype matrix must be at least 2 x 1, got {n} x {l}"
            )));
        }
        if snp_ids.len() != l {
            return Err(Error::DimensionMismatch {
                context: format!("{} SNP ids for {} columns", snp_ids.len(), l),
            });
        }
        if individual_ids.len() != n {
            return Err(Error::DimensionMismatch {
                context: format!("{} individual ids for {} rows", individual_ids.len(), n),
            });
        }
        let mut seen = HashSet::new();
        for id in &snp_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate SNP id {id}")));
            }
        }
        for &v in values.iter() {
            if v > 2 {
                return Err(Error::InvalidGenotype { code: v });
            }
        }
        Ok(Self {
            values,
            snp_ids,
            individual_ids,
        })
    }

    pub fn n_individuals(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_snps(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<u8> {
        &self.values
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.individual_ids
    }

    pub fn code(&self, i: usize, s: usize) -> u8 {
        self.values[(i, s)]
    }

    /// A single SNP column as floating-point allele counts.
    pub fn column_f64(&self, s: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.n_individuals(),
            self.values.column(s).iter().map(|&v| v as f64),
        )
    }

    /// The whole matrix as floating-point allele counts.
    pub fn to_f64(&self) -> DMatrix<f64> {
        self.values.map(|v| v as f64)
    }

    /// Restrict to the given SNP columns (a gene), keeping individual order.
    pub fn subset_columns(&self, cols: &[usize]) -> Result<Self> {
        if cols.is_empty() {
            return Err(Error::InvalidInput("empty SNP column set".into()));
        }
        let n = self.n_individuals();
        let mut values = DMatrix::zeros(n, cols.len());
        let mut snp_ids = Vec::with_capacity(cols.len());
        for (j, &c) in cols.iter().enumerate() {
            if c >= self.n_snps() {
                return Err(Error::InvalidInput(format!(
                    "SNP column {c} out of range ({} columns)",
                    self.n_snps()
                )));
            }
            values.set_column(j, &self.values.column(c));
            snp_ids.push(self.snp_ids[c].clone());
        }
        GenotypeMatrix::new(values, snp_ids, self.individual_ids.clone())
    }

    /// Sample allele frequency of SNP `s`: sum of codes over 2n.
    pub fn allele_freq(&self, s: usize) -> f64 {
        let total: u32 = self.values.column(s).iter().map(|&v| v as u32).sum();
        total as f64 / (2.0 * self.n_individuals() as f64)
    }

    /// Sample minor allele frequency of SNP `s`.
    pub fn maf(&self, s: usize) -> f64 {
        let p = self.allele_freq(s);
        p.min(1.0 - p)
    }
}

/// Ordered mapping from gene identifiers to SNP column indices.
#[derive(Debug, Clone)]
pub struct GenePartition {
    genes: Vec<(String, Vec<usize>)>,
}

impl GenePartition {
    pub fn new(genes: Vec<(String, Vec<usize>)>) -> Result<Self> {
        let mut gene_ids = HashSet::new();
        let mut columns = HashSet::new();
        for (id, cols) in &genes {
            if !gene_ids.insert(id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate gene id {id}")));
            }
            if cols.is_empty() {
                return Err(Error::InvalidInput(format!("gene {id} has no SNPs")));
            }
            for &c in cols {
                if !columns.insert(c) {
                    return Err(Error::InvalidInput(format!(
                        "SNP column {c} assigned to more than one gene"
                    )));
                }
            }
        }
        Ok(Self { genes })
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Vec<usize>)> {
        self.genes.iter()
    }

    pub fn gene(&self, i: usize) -> &(String, Vec<usize>) {
        &self.genes[i]
    }

    pub fn gene_ids(&self) -> impl Iterator<Item = &str> {
        self.genes.iter().map(|(id, _)| id.as_str())
    }
}
