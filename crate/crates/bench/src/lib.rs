//! Shared fixtures for the benchmarks.

use faemb_core::coding::kmeans_init;
use faemb_core::{CodingModel, Variant};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

/// `count` descriptors of dimension `d`, row-major, with roughly unit norm.
pub fn random_descriptors(count: usize, d: usize, seed: u64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count * d).map(|_| normal.sample(&mut rng)).collect()
}

/// A FAemb model with k-means anchors on random descriptors.
pub fn model(n: usize, d: usize, seed: u64) -> CodingModel {
    let x = random_descriptors(2000, d, seed);
    let anchors = kmeans_init(&DMatrix::from_column_slice(d, 2000, &x), n, seed).unwrap();
    CodingModel::new(anchors, 1e-2, Variant::FAemb).unwrap()
}
