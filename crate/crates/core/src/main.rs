use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kmscan::error::{Error, Result};
use kmscan::genotype::{GenePartition, GenotypeMatrix};
use kmscan::io;
use kmscan::kernel::{gene_kernel, interaction_kernel, inverse_maf_weights, Weighting};
use kmscan::mixed::reml_fit;
use kmscan::scan::{export_edges, precompute_gene_kernels, two_stage_scan, Stage1Policy};
use kmscan::score::{interaction_test, overall_test};
use kmscan::sim::{run_study, StudyDescriptor};

#[derive(Parser)]
#[command(
    name = "kmscan",
    about = "Gene-level kernel machine scan for gene-gene interactions in quantitative traits",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a gene's allele-matching kernel matrix as CSV
    Kernel {
        /// Genotype CSV (id column, then one column per SNP)
        #[arg(long)]
        genotypes: PathBuf,
        /// Tab-separated snp_id gene_id map; without it all SNPs form one gene
        #[arg(long)]
        gene_map: Option<PathBuf>,
        /// Gene to print; may be omitted when the map holds exactly one gene
        #[arg(long)]
        gene: Option<String>,
        /// SNP weighting inside the kernel
        #[arg(long, default_value = "none")]
        weights: String,
        /// Impute missing genotypes with the per-SNP modal code
        #[arg(long)]
        impute: bool,
        /// Write to this file instead of standard output
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Test a single gene pair: overall and interaction p-values
    Test {
        #[arg(long)]
        genotypes: PathBuf,
        #[arg(long)]
        gene_map: PathBuf,
        /// Trait file of id<TAB>value lines
        #[arg(long = "trait")]
        trait_file: PathBuf,
        #[arg(long)]
        gene1: String,
        #[arg(long)]
        gene2: String,
        #[arg(long, default_value = "none")]
        weights: String,
        #[arg(long)]
        impute: bool,
    },
    /// Two-stage scan over all gene pairs
    Scan {
        #[arg(long)]
        genotypes: PathBuf,
        #[arg(long)]
        gene_map: PathBuf,
        #[arg(long = "trait")]
        trait_file: PathBuf,
        /// Results file (tab-separated)
        #[arg(long)]
        output: PathBuf,
        /// Stage-1 gate: fixed:<c> or bonferroni:<alpha>
        #[arg(long, default_value = "bonferroni:0.05")]
        stage1: String,
        /// Stage-2 significance level
        #[arg(long, default_value_t = 0.05)]
        alpha2: f64,
        #[arg(long, default_value = "none")]
        weights: String,
        /// Worker threads (0 = all cores)
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Master seed; accepted for interface uniformity (the scan itself
        /// is deterministic)
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write an interaction edge list to this file
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Interaction p-value cutoff for the edge list
        #[arg(long, default_value_t = 0.05)]
        edge_cut: f64,
        #[arg(long)]
        impute: bool,
    },
    /// Run a simulation study from a descriptor file
    Simulate {
        /// Key = value study descriptor
        #[arg(long)]
        descriptor: PathBuf,
        /// Output rejection table (tab-separated); defaults to standard output
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the descriptor's master seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn parse_weighting(s: &str) -> Result<Weighting> {
    s.parse()
}

fn emit(output: Option<&PathBuf>, content: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn find_gene<'a>(
    partition: &'a GenePartition,
    gene: &str,
) -> Result<&'a (String, Vec<usize>)> {
    partition
        .iter()
        .find(|(id, _)| id == gene)
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "gene {gene:?} is not present in the gene map (genes: {})",
                partition
                    .gene_ids()
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })
}

fn gene_matrix(g: &GenotypeMatrix, cols: &[usize]) -> Result<GenotypeMatrix> {
    g.subset_columns(cols)
}

fn weighted_kernel(
    g: &GenotypeMatrix,
    weighting: Weighting,
) -> Result<kmscan::kernel::KernelMatrix> {
    let w = match weighting {
        Weighting::None => None,
        Weighting::InverseMaf => Some(inverse_maf_weights(g)?),
    };
    gene_kernel(g, w.as_ref())
}

fn in_thread_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(f)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Kernel {
            genotypes,
            gene_map,
            gene,
            weights,
            impute,
            output,
        } => {
            let weighting = parse_weighting(&weights)?;
            let g = io::load_genotypes(&genotypes, impute)?;
            let sub = match gene_map {
                Some(map) => {
                    let (partition, _) = io::load_gene_map(&map, &g)?;
                    let target = match gene {
                        Some(name) => find_gene(&partition, &name)?.clone(),
                        None if partition.len() == 1 => partition.gene(0).clone(),
                        None => {
                            return Err(Error::InvalidInput(format!(
                                "the map holds {} genes; pick one with --gene",
                                partition.len()
                            )))
                        }
                    };
                    gene_matrix(&g, &target.1)?
                }
                None => g.clone(),
            };
            let k = weighted_kernel(&sub, weighting)?;
            emit(output.as_ref(), &io::write_kernel_csv(&k, sub.individual_ids()))
        }
        Command::Test {
            genotypes,
            gene_map,
            trait_file,
            gene1,
            gene2,
            weights,
            impute,
        } => {
            let weighting = parse_weighting(&weights)?;
            let g = io::load_genotypes(&genotypes, impute)?;
            let (partition, _) = io::load_gene_map(&gene_map, &g)?;
            let y = io::load_trait(&trait_file, &g)?;
            let cols1 = find_gene(&partition, &gene1)?.1.clone();
            let cols2 = find_gene(&partition, &gene2)?.1.clone();
            let sub1 = gene_matrix(&g, &cols1)?;
            let sub2 = gene_matrix(&g, &cols2)?;
            let k1 = weighted_kernel(&sub1, weighting)?;
            let k2 = weighted_kernel(&sub2, weighting)?;
            let k3 = interaction_kernel(&k1, &k2)?;
            let overall = overall_test(&y, &k1, &k2, &k3)?;
            let null = reml_fit(&y, &[&k1, &k2, &k3], [true, true, true, false])?;
            let inter = interaction_test(&y, &k1, &k2, &k3, &null)?;
            println!("p_overall\t{:.3e}", overall.p_value);
            println!("p_interaction\t{:.3e}", inter.p_value);
            Ok(())
        }
        Command::Scan {
            genotypes,
            gene_map,
            trait_file,
            output,
            stage1,
            alpha2,
            weights,
            threads,
            seed: _,
            edges,
            edge_cut,
            impute,
        } => {
            let weighting = parse_weighting(&weights)?;
            let policy: Stage1Policy = stage1.parse()?;
            let g = io::load_genotypes(&genotypes, impute)?;
            let (partition, unmapped) = io::load_gene_map(&gene_map, &g)?;
            if unmapped > 0 {
                eprintln!("warning: {unmapped} SNPs are not mapped to any gene");
            }
            let y = io::load_trait(&trait_file, &g)?;
            let store = precompute_gene_kernels(&g, &partition, weighting)?;
            let records =
                in_thread_pool(threads, || two_stage_scan(&y, &store, policy, alpha2))?;
            std::fs::write(&output, io::write_results(&records))?;
            if let Some(edge_path) = edges {
                std::fs::write(&edge_path, export_edges(&records, edge_cut))?;
            }
            Ok(())
        }
        Command::Simulate {
            descriptor,
            output,
            seed,
            threads,
        } => {
            let text = std::fs::read_to_string(&descriptor)?;
            let mut d = StudyDescriptor::parse(&text)?;
            if let Some(seed) = seed {
                d.seed = seed;
            }
            let table = in_thread_pool(threads, || run_study(&d))?;
            emit(output.as_ref(), &table.to_tsv())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
