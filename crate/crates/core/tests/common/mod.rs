#![allow(dead_code)]

use mc_landscape::instance::{observe, sample_factor, sample_mask, GroundTruth, HyperParams, Observation};
use mc_landscape::linalg::{DenseMatrix, FactorMatrix, ObservationMask};
use mc_landscape::rng;
use mc_landscape::ObjectiveConfig;
use nalgebra::DMatrix;

pub fn factor(d: usize, r: usize, std: f64, seed: u64) -> FactorMatrix {
    rng::gaussian_factor(d, r, std, &mut rng::substream(seed, "it-factor", 0))
}

pub fn orthonormal(n: usize, seed: u64) -> DenseMatrix {
    let q = rng::random_orthonormal(n, n, &mut rng::substream(seed, "it-orth", 0));
    DenseMatrix::from_fn(n, n, |i, j| q.get(i, j))
}

pub fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

pub fn factor_to_na(x: &FactorMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(x.d(), x.r(), x.as_slice())
}

pub fn instance(d: usize, r: usize, p: f64, sigma: f64, seed: u64) -> (GroundTruth, Observation) {
    let gt = sample_factor(d, r, 1.0, seed).unwrap();
    let mask = if p >= 1.0 {
        ObservationMask::full(d)
    } else {
        sample_mask(d, p, true, seed).unwrap()
    };
    let obs = observe(&gt, &mask, sigma, seed).unwrap();
    (gt, obs)
}

pub fn full_observation(m: &DenseMatrix) -> Observation {
    Observation::from_dense(ObservationMask::full(m.rows()), m, 0.0).unwrap()
}

pub fn hyper(alpha: f64, lambda: f64) -> HyperParams {
    HyperParams::new(alpha, lambda, 0.0).unwrap()
}

/// Symmetric matrix `Q diag(eigs) Qᵀ` with a seeded random orthonormal `Q`.
pub fn with_spectrum(eigs: &[f64], seed: u64) -> (DenseMatrix, DenseMatrix) {
    let n = eigs.len();
    let q = orthonormal(n, seed);
    let m = DenseMatrix::from_fn(n, n, |i, j| (0..n).map(|k| q.get(i, k) * eigs[k] * q.get(j, k)).sum());
    (m, q)
}

pub fn unit(d: usize, r: usize, k: usize) -> FactorMatrix {
    let mut e = FactorMatrix::zeros(d, r);
    e.as_mut_slice()[k] = 1.0;
    e
}

pub fn fd_gradient(cfg: &ObjectiveConfig<'_>, x: &FactorMatrix, h: f64) -> FactorMatrix {
    let mut g = FactorMatrix::zeros(x.d(), x.r());
    for k in 0..x.d() * x.r() {
        let mut xp = x.clone();
        xp.as_mut_slice()[k] += h;
        let mut xm = x.clone();
        xm.as_mut_slice()[k] -= h;
        let fp = cfg.objective(&xp).unwrap().total;
        let fm = cfg.objective(&xm).unwrap().total;
        g.as_mut_slice()[k] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Dense Hessian assembled column by column from Hessian-vector products.
pub fn dense_hessian(cfg: &ObjectiveConfig<'_>, x: &FactorMatrix) -> DMatrix<f64> {
    let n = x.d() * x.r();
    let mut h = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = cfg.hessian_vecprod(x, &unit(x.d(), x.r(), k)).unwrap();
        for (i, v) in col.as_slice().iter().enumerate() {
            h[(i, k)] = *v;
        }
    }
    h
}

/// Hessian by central differences of the analytic gradient.
pub fn fd_hessian(cfg: &ObjectiveConfig<'_>, x: &FactorMatrix, h: f64) -> DMatrix<f64> {
    let n = x.d() * x.r();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut xp = x.clone();
        xp.as_mut_slice()[k] += h;
        let mut xm = x.clone();
        xm.as_mut_slice()[k] -= h;
        let gp = cfg.gradient(&xp).unwrap();
        let gm = cfg.gradient(&xm).unwrap();
        for i in 0..n {
            out[(i, k)] = (gp.as_slice()[i] - gm.as_slice()[i]) / (2.0 * h);
        }
    }
    out
}

pub fn min_eig(h: &DMatrix<f64>) -> f64 {
    h.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}
