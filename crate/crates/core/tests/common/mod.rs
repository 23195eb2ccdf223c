#![allow(dead_code)]

use jtt_core::{GroupData, GroupDataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut impl Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Design with an intercept column followed by Gaussian covariates.
pub fn design(rng: &mut impl Rng, rows: usize, p: usize) -> DMatrix<f64> {
    let mut x = normal_matrix(rng, rows, p);
    x.column_mut(0).fill(1.0);
    x
}

/// Random instance: `m` groups with `n_j` drawn from `n_range`, coefficients
/// from `beta(j)` and unit Gaussian noise scaled by `sigma`.
pub fn instance(
    rng: &mut impl Rng,
    m: usize,
    p: usize,
    n_range: (usize, usize),
    sigma: f64,
    beta: impl Fn(usize) -> DVector<f64>,
) -> GroupDataset {
    let groups = (1..=m)
        .map(|j| {
            let n = rng.random_range(n_range.0..=n_range.1);
            let x = design(rng, n, p);
            let noise = normal_vector(rng, n);
            let y = &x * beta(j) + noise * sigma;
            GroupData::new(j, format!("g{j}"), y, x).unwrap()
        })
        .collect();
    GroupDataset::new(groups).unwrap()
}

/// Small random instance within the oracle bounds (`m <= 6`, `p <= 5`, `n_j <= 30`),
/// with a random mixture of shared and distinct coefficients.
pub fn small_instance(rng: &mut impl Rng) -> GroupDataset {
    let m = rng.random_range(2..=6);
    let p = rng.random_range(1..=5);
    let lo = p + 3;
    let centres: Vec<DVector<f64>> = (0..3).map(|_| normal_vector(rng, p) * 2.0).collect();
    let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..3)).collect();
    let sigma = rng.random_range(0.2..2.0);
    instance(rng, m, p, (lo, 30), sigma, |j| centres[labels[j - 1]].clone())
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Relative error with an absolute floor for values near zero.
pub fn scaled_error(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(scale)
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
