#![allow(dead_code)]

use std::sync::OnceLock;

use hframe::HermiteContext;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ctx(m: usize) -> &'static HermiteContext {
    static C64: OnceLock<HermiteContext> = OnceLock::new();
    static C128: OnceLock<HermiteContext> = OnceLock::new();
    static C256: OnceLock<HermiteContext> = OnceLock::new();
    let cell = match m {
        64 => &C64,
        128 => &C128,
        256 => &C256,
        _ => panic!("no shared context of size {m}"),
    };
    cell.get_or_init(|| HermiteContext::new(m).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(n, m, |_, _| r.random_range(-1.0..1.0))
}

pub fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest singular value via nalgebra's SVD.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
