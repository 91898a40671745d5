//! File formats: genotype CSV, gene map TSV, trait file, kernel CSV, and
//! the tab-separated result writers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::genotype::{GenePartition, GenotypeMatrix};
use crate::kernel::KernelMatrix;
use crate::scan::ScanRecord;

fn parse_error(file: &Path, line: usize, column: usize, message: String) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        column,
        message,
    }
}

/// Parse a genotype CSV: header `id,<snp ids...>`, one row per individual,
/// cells in {0, 1, 2} or "NA". Missing cells are rejected unless `impute`
/// is set, in which case each is replaced by the SNP's most frequent code.
pub fn load_genotypes(path: &Path, impute: bool) -> Result<GenotypeMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, 1, "empty file".into()))?;
    let mut cols = header.split(',');
    let id_col = cols.next().unwrap_or("").trim();
    if !id_col.eq_ignore_ascii_case("id") {
        return Err(parse_error(
            path,
            1,
            1,
            format!("expected header to start with an id column, got {id_col:?}"),
        ));
    }
    let snp_ids: Vec<String> = cols.map(|c| c.trim().to_string()).collect();
    if snp_ids.is_empty() || snp_ids.iter().any(|s| s.is_empty()) {
        return Err(parse_error(path, 1, 2, "missing SNP identifiers".into()));
    }

    let mut individual_ids = Vec::new();
    let mut rows: Vec<Vec<Option<u8>>> = Vec::new();
    for (idx, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut cells = raw.split(',');
        let id = cells.next().unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(parse_error(path, line_no, 1, "missing individual id".into()));
        }
        if individual_ids.contains(&id) {
            return Err(parse_error(
                path,
                line_no,
                1,
                format!("duplicate individual id {id:?}"),
            ));
        }
        let mut row = Vec::with_capacity(snp_ids.len());
        for (c, cell) in cells.enumerate() {
            let column = c + 2;
            let cell = cell.trim();
            if cell == "NA" {
                if !impute {
                    return Err(parse_error(
                        path,
                        line_no,
                        column,
                        "missing genotype (run with imputation enabled to fill it)".into(),
                    ));
                }
                row.push(None);
                continue;
            }
            match cell.parse::<u8>() {
                Ok(v) if v <= 2 => row.push(Some(v)),
                _ => {
                    return Err(parse_error(
                        path,
                        line_no,
                        column,
                        format!("invalid genotype cell {cell:?}: expected 0, 1, 2 or NA"),
                    ))
                }
            }
        }
        if row.len() != snp_ids.len() {
            return Err(parse_error(
                path,
                line_no,
                row.len() + 2,
                format!("expected {} genotype cells, got {}", snp_ids.len(), row.len()),
            ));
        }
        individual_ids.push(id);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 2, 1, "no genotype rows".into()));
    }

    // per-SNP modal imputation
    let n = rows.len();
    let l = snp_ids.len();
    let mut values = DMatrix::zeros(n, l);
    for s in 0..l {
        let mut counts = [0usize; 3];
        for row in &rows {
            if let Some(v) = row[s] {
                counts[v as usize] += 1;
            }
        }
        let modal = (0..3).max_by_key(|&k| counts[k]).unwrap() as u8;
        for (i, row) in rows.iter().enumerate() {
            values[(i, s)] = row[s].unwrap_or(modal);
        }
    }
    GenotypeMatrix::new(values, snp_ids, individual_ids)
}

/// Parse a tab-separated (snp_id, gene_id) map. Genes are ordered by first
/// appearance; SNPs missing from the map are skipped and counted.
pub fn load_gene_map(path: &Path, genotypes: &GenotypeMatrix) -> Result<(GenePartition, usize)> {
    let text = std::fs::read_to_string(path)?;
    let index: HashMap<&str, usize> = genotypes
        .snp_ids()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut assignment: HashMap<usize, usize> = HashMap::new();
    let mut genes: Vec<(String, Vec<usize>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut cells = raw.split('\t');
        let snp = cells.next().unwrap_or("").trim();
        let gene = cells.next().unwrap_or("").trim();
        if snp.is_empty() || gene.is_empty() {
            return Err(parse_error(
                path,
                line_no,
                1,
                format!("expected snp_id<TAB>gene_id, got {raw:?}"),
            ));
        }
        let &col = index.get(snp).ok_or_else(|| {
            parse_error(
                path,
                line_no,
                1,
                format!("SNP {snp:?} is not present in the genotype file"),
            )
        })?;
        let gene_idx = match genes.iter().position(|(g, _)| g == gene) {
            Some(i) => i,
            None => {
                genes.push((gene.to_string(), Vec::new()));
                genes.len() - 1
            }
        };
        if let Some(&prev) = assignment.get(&col) {
            return Err(parse_error(
                path,
                line_no,
                1,
                format!(
                    "SNP {snp:?} is already mapped to gene {:?}",
                    genes[prev].0
                ),
            ));
        }
        assignment.insert(col, gene_idx);
        genes[gene_idx].1.push(col);
    }
    let unmapped = genotypes.n_snps() - assignment.len();
    let partition = GenePartition::new(genes)?;
    Ok((partition, unmapped))
}

/// Parse a (id, value) trait file and align it to the genotype row order.
pub fn load_trait(path: &Path, genotypes: &GenotypeMatrix) -> Result<DVector<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut by_id: HashMap<String, f64> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut cells = raw.split('\t');
        let id = cells.next().unwrap_or("").trim();
        let value = cells.next().unwrap_or("").trim();
        if id.is_empty() || value.is_empty() {
            return Err(parse_error(
                path,
                line_no,
                1,
                format!("expected id<TAB>value, got {raw:?}"),
            ));
        }
        let v: f64 = value.parse().map_err(|_| {
            parse_error(
                path,
                line_no,
                2,
                format!("non-numeric trait value {value:?}"),
            )
        })?;
        if !v.is_finite() {
            return Err(parse_error(
                path,
                line_no,
                2,
                format!("non-finite trait value {value:?}"),
            ));
        }
        if !genotypes.individual_ids().contains(&id.to_string()) {
            return Err(parse_error(
                path,
                line_no,
                1,
                format!("individual {id:?} is not present in the genotype file"),
            ));
        }
        if by_id.insert(id.to_string(), v).is_some() {
            return Err(parse_error(
                path,
                line_no,
                1,
                format!("duplicate trait id {id:?}"),
            ));
        }
    }
    let mut out = DVector::zeros(genotypes.n_individuals());
    for (i, id) in genotypes.individual_ids().iter().enumerate() {
        out[i] = *by_id.get(id).ok_or_else(|| {
            Error::InvalidInput(format!("no trait value for individual {id:?}"))
        })?;
    }
    Ok(out)
}

/// Render a kernel matrix as CSV with individual ids and 12 significant
/// digits per entry.
pub fn write_kernel_csv(k: &KernelMatrix, individual_ids: &[String]) -> String {
    let n = k.n();
    let mut out = String::from("id");
    for id in individual_ids {
        write!(out, ",{id}").unwrap();
    }
    out.push('\n');
    for i in 0..n {
        write!(out, "{}", individual_ids[i]).unwrap();
        for j in 0..n {
            write!(out, ",{:.11e}", k.values()[(i, j)]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parse a kernel CSV produced by `write_kernel_csv`.
pub fn read_kernel_csv(path: &Path) -> Result<(KernelMatrix, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, 1, "empty file".into()))?;
    let ids: Vec<String> = header
        .split(',')
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let n = ids.len();
    let mut values = DMatrix::zeros(n, n);
    let mut row = 0;
    for (idx, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        if row >= n {
            return Err(parse_error(path, line_no, 1, "too many rows".into()));
        }
        for (j, cell) in raw.split(',').skip(1).enumerate() {
            if j >= n {
                return Err(parse_error(path, line_no, j + 2, "too many cells".into()));
            }
            values[(row, j)] = cell.trim().parse().map_err(|_| {
                parse_error(
                    path,
                    line_no,
                    j + 2,
                    format!("invalid kernel entry {cell:?}"),
                )
            })?;
        }
        row += 1;
    }
    if row != n {
        return Err(parse_error(
            path,
            row + 1,
            1,
            format!("expected {n} rows, got {row}"),
        ));
    }
    Ok((KernelMatrix::from_dense(values)?, ids))
}

fn fmt_p(p: f64) -> String {
    if p.is_nan() {
        "NA".into()
    } else {
        format!("{:.3e}", p)
    }
}

fn fmt_component(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.6e}", v),
        None => "NA".into(),
    }
}

/// Render scan records as the tab-separated results table.
pub fn write_results(records: &[ScanRecord]) -> String {
    let mut out = String::from(
        "gene1\tgene2\ttau1\ttau2\ttau3\tsigma2\tp_overall\tp_interaction\tflags\n",
    );
    for r in records {
        let c = r.components;
        let mut flags = Vec::new();
        if r.significant {
            flags.push("sig".to_string());
        }
        if let Some(msg) = &r.failure {
            flags.push(format!("fail({})", msg.replace(['\t', '\n'], " ")));
        }
        let flags = if flags.is_empty() {
            "-".to_string()
        } else {
            flags.join(";")
        };
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.gene1,
            r.gene2,
            fmt_component(c.map(|c| c.tau1)),
            fmt_component(c.map(|c| c.tau2)),
            fmt_component(c.map(|c| c.tau3)),
            fmt_component(c.map(|c| c.sigma2)),
            fmt_p(r.p_overall),
            r.p_interaction.map(fmt_p).unwrap_or_else(|| "NA".into()),
            flags
        )
        .unwrap();
    }
    out
}
