use crate::linalg::{DenseMatrix, FactorMatrix};
use crate::rng;

pub fn random_factor(d: usize, r: usize, seed: u64) -> FactorMatrix {
    rng::gaussian_factor(d, r, 1.0, &mut rng::substream(seed, "test-factor", 0))
}

pub fn random_orthonormal(n: usize, k: usize, seed: u64) -> FactorMatrix {
    rng::random_orthonormal(n, k, &mut rng::substream(seed, "test-orth", 0))
}

pub fn as_dense(f: &FactorMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(f.d(), f.r(), |i, j| f.get(i, j))
}
