#![allow(dead_code)]

use onebit_core::dither::{generate, DitherSpec};
use onebit_core::quantizer::sample;
use onebit_core::rng::{stream, Domain};
use onebit_core::{DenseMatrix, DitherScheme, ObservationMask, OneBitProblem};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn low_rank<R: Rng>(n1: usize, n2: usize, r: usize, rng: &mut R) -> DenseMatrix {
    let a = gaussian_matrix(n1, r, rng);
    let b = gaussian_matrix(n2, r, rng);
    a.matmul(&b.transpose()).unwrap()
}

/// Noiseless uniform-dither problem sampled from a random rank-2 matrix.
pub fn random_problem(n1: usize, n2: usize, m: usize, fraction: f64, seed: u64) -> (DenseMatrix, OneBitProblem) {
    let mut rng = stream(seed, Domain::Factors, 0);
    let x = low_rank(n1, n2, 2.min(n1).min(n2), &mut rng);
    let count = ((fraction * (n1 * n2) as f64).round() as usize).clamp(1, n1 * n2);
    let mask = ObservationMask::sample_uniform(n1, n2, count, &mut stream(seed, Domain::Mask, 0)).unwrap();
    let amp = x.max_abs().max(1e-3);
    let spec = DitherSpec::new(DitherScheme::Uniform { amplitude: amp }, m, seed).unwrap();
    let d = generate(&spec, &mask).unwrap();
    let p = sample(&x, &mask, &d).unwrap();
    (x, p)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
