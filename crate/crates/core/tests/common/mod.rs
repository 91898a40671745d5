//! Shared helpers for the integration tests.
#![allow(dead_code)]

use kmscan::genotype::GenotypeMatrix;
use kmscan::kernel::KernelMatrix;
use nalgebra::{DMatrix, DVector};
use rand::prelude::*;

pub fn randn<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_y(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| randn(rng))
}

/// Random structured PSD kernel with a positive diagonal slack.
pub fn random_psd_kernel(n: usize, rank: usize, rng: &mut impl Rng) -> KernelMatrix {
    let u = DMatrix::from_fn(n, rank, |_, _| rng.gen::<f64>() - 0.5) / (rank as f64).sqrt();
    let d = DVector::from_fn(n, |_, _| 0.05 + 0.1 * rng.gen::<f64>());
    KernelMatrix::from_lowrank(u, d).unwrap()
}

/// Random structured PSD kernel scaled to a roughly unit diagonal, so tau
/// components are identified on the same scale as the residual variance.
pub fn unit_psd_kernel(n: usize, rank: usize, rng: &mut impl Rng) -> KernelMatrix {
    let scale = (3.0 / rank as f64).sqrt();
    let u = DMatrix::from_fn(n, rank, |_, _| scale * (2.0 * rng.gen::<f64>() - 1.0));
    let d = DVector::from_fn(n, |_, _| 0.2 + 0.2 * rng.gen::<f64>());
    KernelMatrix::from_lowrank(u, d).unwrap()
}

/// Random genotype matrix with every column polymorphic.
pub fn random_genotypes(n: usize, l: usize, rng: &mut impl Rng) -> GenotypeMatrix {
    loop {
        let values = DMatrix::from_fn(n, l, |_, _| {
            let r: f64 = rng.gen();
            if r < 0.49 {
                0u8
            } else if r < 0.91 {
                1
            } else {
                2
            }
        });
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

/// The worked three-individual, ten-SNP example.
pub fn worked_example_genotypes() -> GenotypeMatrix {
    let rows: [[u8; 10]; 3] = [
        [2, 0, 2, 1, 1, 0, 1, 1, 1, 1],
        [0, 0, 0, 0, 0, 0, 0, 1, 0, 0],
        [0, 0, 0, 1, 1, 0, 1, 0, 1, 1],
    ];
    GenotypeMatrix::new(
        DMatrix::from_fn(3, 10, |i, j| rows[i][j]),
        (1..=10).map(|j| format!("SNP{j}")).collect(),
        (1..=3).map(|i| format!("ind{i}")).collect(),
    )
    .unwrap()
}

pub const WORKED_EXAMPLE_KERNEL: [[f64; 3]; 3] =
    [[1.0, 0.5, 0.5], [0.5, 1.0, 0.7], [0.5, 0.7, 1.0]];
