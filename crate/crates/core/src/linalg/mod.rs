//! Dense primitives shared by every other module: matrices, the observation
//! mask and `P_Ω`, norms, extreme singular values and orthogonal alignment.

mod decomp;
mod mask;
mod matrix;

pub use decomp::{small_svd, symmetric_eigen, SmallSvd};
pub use mask::{project_mask, ObservationMask};
pub use matrix::{dot, norm2, DenseMatrix, FactorMatrix};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// Relative tolerance of the spectral-norm power iteration.
pub const SPECTRAL_REL_TOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    pub fro: f64,
    pub spectral: f64,
    pub two_to_inf: f64,
    pub elem_inf: f64,
}

pub fn matrix_norms(a: &DenseMatrix) -> MatrixNorms {
    let two_to_inf = (0..a.rows()).map(|i| norm2(a.row(i))).fold(0.0, f64::max);
    let elem_inf = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    MatrixNorms {
        fro: a.frobenius_norm(),
        spectral: spectral_norm(a),
        two_to_inf,
        elem_inf,
    }
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// The stopping rule extrapolates the geometric tail of the Rayleigh
/// quotient increments, so slowly separating top singular values do not
/// stop the iteration early.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    let n = a.cols();
    if n == 0 || a.rows() == 0 || a.as_slice().iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut rng = rng::substream(0x005e_ed0f_5eed, "spectral-start", (a.rows() * n) as u64);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);

    let mut est = 0.0;
    let mut prev_delta = f64::INFINITY;
    for _ in 0..SPECTRAL_MAX_ITERS {
        let av = a.mul_vec(&v);
        let mut w = a.mul_vec_transposed(&av);
        let next = norm2(&av).powi(2);
        let nw = norm2(&w);
        if nw == 0.0 {
            // start vector in the null space; restart along a basis vector
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
            continue;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        v = w;
        let delta = (next - est).abs();
        est = next;
        let ratio = if prev_delta.is_finite() && prev_delta > 0.0 {
            (delta / prev_delta).min(0.999_999)
        } else {
            0.999_999
        };
        prev_delta = delta;
        let tail = delta * ratio / (1.0 - ratio);
        if delta <= SPECTRAL_REL_TOL * est && tail <= SPECTRAL_REL_TOL * est {
            break;
        }
    }
    est.sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularExtremes {
    pub sigma_max: f64,
    pub sigma_min: f64,
}

/// Extreme singular values of a factor from the eigenvalues of its
/// `r × r` Gram matrix.
pub fn singular_extremes(x: &FactorMatrix) -> SingularExtremes {
    if x.r() == 0 {
        return SingularExtremes {
            sigma_max: 0.0,
            sigma_min: 0.0,
        };
    }
    let (vals, _) = symmetric_eigen(&x.gram());
    SingularExtremes {
        sigma_max: vals[vals.len() - 1].max(0.0).sqrt(),
        sigma_min: vals[0].max(0.0).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Orthonormal `R` minimizing `‖X − Z R‖_F`.
    pub rotation: DenseMatrix,
    pub residual: f64,
}

/// Orthogonal Procrustes: the rotation of `z` closest to `x`.
///
/// `R` is the polar factor `U Vᵀ` of `Zᵀ X = U Σ Vᵀ`.
pub fn procrustes_align(x: &FactorMatrix, z: &FactorMatrix) -> Result<Alignment> {
    if x.shape() != z.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", z.d(), z.r()),
            found: format!("{}x{}", x.d(), x.r()),
        });
    }
    let svd = small_svd(&z.transpose_mul(x));
    let rotation = svd.u.matmul(&svd.v.transpose())?;
    let residual = x.sub(&z.mul_small(&rotation)?).frobenius_norm();
    Ok(Alignment { rotation, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_factor, random_orthonormal};
    use approx::assert_relative_eq;

    #[test]
    fn norms_of_identity() {
        let n = matrix_norms(&DenseMatrix::identity(3));
        assert_relative_eq!(n.fro, 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(n.spectral, 1.0, epsilon = 1e-12);
        assert_eq!(n.two_to_inf, 1.0);
        assert_eq!(n.elem_inf, 1.0);
    }

    #[test]
    fn norms_of_ones() {
        let n = matrix_norms(&DenseMatrix::from_fn(2, 2, |_, _| 1.0));
        assert_relative_eq!(n.fro, 2.0, epsilon = 1e-15);
        assert_relative_eq!(n.spectral, 2.0, epsilon = 1e-12);
        assert_relative_eq!(n.two_to_inf, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(n.elem_inf, 1.0);
    }

    #[test]
    fn norms_of_zero() {
        let n = matrix_norms(&DenseMatrix::zeros(3, 2));
        assert_eq!((n.fro, n.spectral, n.two_to_inf, n.elem_inf), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn singular_extremes_isometry_and_diagonal() {
        let q = random_orthonormal(6, 3, 1);
        let s = singular_extremes(&q);
        assert_relative_eq!(s.sigma_max, 1.0, epsilon = 1e-12);
        assert_relative_eq!(s.sigma_min, 1.0, epsilon = 1e-12);

        let mut x = FactorMatrix::zeros(4, 2);
        x.set(0, 0, 3.0);
        x.set(1, 1, 1.0);
        let s = singular_extremes(&x);
        assert_relative_eq!(s.sigma_max, 3.0, epsilon = 1e-14);
        assert_relative_eq!(s.sigma_min, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn procrustes_self_alignment() {
        let z = random_factor(10, 3, 2);
        let a = procrustes_align(&z, &z).unwrap();
        assert!(a.rotation.sub(&DenseMatrix::identity(3)).unwrap().frobenius_norm() < 1e-12);
        assert!(a.residual < 1e-12);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let z = random_factor(12, 3, 3);
        let r0 = random_orthonormal(3, 3, 4);
        let x = z.mul_small(&DenseMatrix::from_fn(3, 3, |i, j| r0.get(i, j))).unwrap();
        assert!(procrustes_align(&x, &z).unwrap().residual <= 1e-10);
    }

    #[test]
    fn procrustes_rank_deficient_cross_product() {
        // Zᵀ X has rank one; any completion must give an orthonormal R
        let mut z = FactorMatrix::zeros(4, 2);
        z.set(0, 0, 1.0);
        z.set(1, 1, 1.0);
        let mut x = FactorMatrix::zeros(4, 2);
        x.set(0, 0, 2.0);
        x.set(2, 1, 1.0);
        let a = procrustes_align(&x, &z).unwrap();
        let rtr = a.rotation.transpose().matmul(&a.rotation).unwrap();
        assert!(rtr.sub(&DenseMatrix::identity(2)).unwrap().frobenius_norm() < 1e-12);
        // ‖X‖² + ‖Z‖² − 2·nuclear(ZᵀX) = 5 + 2 − 4
        assert_relative_eq!(a.residual, 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn procrustes_shape_mismatch() {
        let err = procrustes_align(&random_factor(4, 2, 1), &random_factor(5, 2, 1));
        assert!(err.is_err());
    }
}
