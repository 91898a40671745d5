//! Gene-level kernel machine scan for pairwise gene interactions in
//! quantitative traits.

// index loops in the linear-algebra assembly code mirror the matrix formulas
#![allow(clippy::needless_range_loop)]

pub mod baseline;
pub mod error;
pub mod genotype;
pub mod io;
pub mod kernel;
pub mod method;
pub mod mixed;
pub mod scan;
pub mod score;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
