use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid genotype code {code}: expected 0, 1 or 2")]
    InvalidGenotype { code: u8 },

    #[error("weight vector has {got} entries but the gene has {expected} SNPs")]
    WeightLengthMismatch { expected: usize, got: usize },

    #[error("all kernel weights are zero")]
    ZeroWeights,

    #[error("SNP {snp} is monomorphic (MAF = 0); cannot form inverse-MAF weight")]
    MonomorphicSnp { snp: String },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("{0}")]
    InvalidInput(String),

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("trait is constant: residual variance under the null is zero")]
    DegenerateTrait,

    #[error("invalid Satterthwaite moments: delta = {delta}, nu = {nu} (both must be positive)")]
    InvalidMoments { delta: f64, nu: f64 },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("linear system is singular after regularization")]
    SingularSystem,

    #[error("REML did not converge after {iterations} iterations (last iterate {last:?})")]
    NoConvergence { iterations: usize, last: [f64; 4] },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for the CLI: 1 for input/validation problems,
    /// 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotPositiveDefinite
            | Error::SingularSystem
            | Error::NoConvergence { .. }
            | Error::Numeric(_)
            | Error::InvalidMoments { .. } => 2,
            _ => 1,
        }
    }
}
