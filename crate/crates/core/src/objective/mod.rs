//! The regularized completion objective
//!
//! ```text
//! f(X) = ½ Σ_{(i,j)∈Ω} (M_ij − ⟨X_i, X_j⟩)² + λ Σ_i r(‖X_i‖)
//! ```
//!
//! with its gradient, Hessian quadratic form, Hessian-vector product and
//! smallest Hessian eigenvalue. Sums run over the mask's stored ordered
//! pairs, so only the observed Gram entries are ever formed.

mod eig;
mod regularizer;

pub use eig::{HessianEig, EIG_ITERS_PER_DIM};
pub use regularizer::{reg_gradient, reg_row, regularizer, RowPenalty};

use crate::error::{Error, Result};
use crate::instance::{HyperParams, Observation};
use crate::linalg::{dot, FactorMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalBreakdown {
    pub data_term: f64,
    /// Unweighted `R(X)`.
    pub reg_term: f64,
    pub total: f64,
}

/// Binds the hyperparameters and the observation into `f`.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveConfig<'a> {
    pub hyper: HyperParams,
    pub obs: &'a Observation,
}

impl<'a> ObjectiveConfig<'a> {
    pub fn new(hyper: HyperParams, obs: &'a Observation) -> Result<Self> {
        hyper.validate()?;
        Ok(Self { hyper, obs })
    }

    pub fn d(&self) -> usize {
        self.obs.d()
    }

    pub fn lambda(&self) -> f64 {
        self.hyper.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.hyper.alpha
    }

    /// Number of stored ordered pairs, i.e. entry gradients per full gradient.
    pub fn n_entries(&self) -> usize {
        self.obs.mask().len()
    }

    fn check(&self, x: &FactorMatrix) -> Result<()> {
        if x.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", self.d()),
                found: format!("{} rows", x.d()),
            });
        }
        Ok(())
    }

    fn check_pair(&self, x: &FactorMatrix, v: &FactorMatrix) -> Result<()> {
        self.check(x)?;
        if v.shape() != x.shape() {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", x.d(), x.r()),
                found: format!("{}x{}", v.d(), v.r()),
            });
        }
        Ok(())
    }

    pub fn objective(&self, x: &FactorMatrix) -> Result<EvalBreakdown> {
        self.check(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &FactorMatrix) -> EvalBreakdown {
        let mask = self.obs.mask();
        let vals = self.obs.values();
        let mut data = 0.0;
        for i in 0..mask.d() {
            let xi = x.row(i);
            for k in mask.row_range(i) {
                let e = vals[k] - dot(xi, x.row(mask.col_of(k)));
                data += e * e;
            }
        }
        let data_term = 0.5 * data;
        let reg_term = regularizer(x, self.hyper.alpha);
        EvalBreakdown {
            data_term,
            reg_term,
            total: data_term + self.hyper.lambda * reg_term,
        }
    }

    /// `∇f(X) = 2 P_Ω(XXᵀ − M) X + λ ∇R(X)`.
    pub fn gradient(&self, x: &FactorMatrix) -> Result<FactorMatrix> {
        self.check(x)?;
        Ok(self.value_and_gradient_unchecked(x).1)
    }

    pub fn value_and_gradient(&self, x: &FactorMatrix) -> Result<(EvalBreakdown, FactorMatrix)> {
        self.check(x)?;
        Ok(self.value_and_gradient_unchecked(x))
    }

    pub(crate) fn value_and_gradient_unchecked(&self, x: &FactorMatrix) -> (EvalBreakdown, FactorMatrix) {
        let mask = self.obs.mask();
        let vals = self.obs.values();
        let mut g = FactorMatrix::zeros(x.d(), x.r());
        let mut data = 0.0;
        for i in 0..mask.d() {
            let xi = x.row(i);
            let gi = g.row_mut(i);
            for k in mask.row_range(i) {
                let xj = x.row(mask.col_of(k));
                let s = dot(xi, xj) - vals[k];
                data += s * s;
                let c = 2.0 * s;
                for (gv, xv) in gi.iter_mut().zip(xj) {
                    *gv += c * xv;
                }
            }
        }
        regularizer::add_reg_gradient(x, self.hyper.alpha, self.hyper.lambda, &mut g);
        let data_term = 0.5 * data;
        let reg_term = regularizer(x, self.hyper.alpha);
        (
            EvalBreakdown {
                data_term,
                reg_term,
                total: data_term + self.hyper.lambda * reg_term,
            },
            g,
        )
    }

    /// Adds `weight ×` the gradient of the single ordered-pair term
    /// `½(M_ij − ⟨X_i, X_j⟩)²` (flat entry `k`) into `out`.
    ///
    /// Summing over every stored entry reproduces the data part of
    /// [`ObjectiveConfig::gradient`].
    pub fn add_entry_gradient(&self, x: &FactorMatrix, k: usize, weight: f64, out: &mut FactorMatrix) {
        let mask = self.obs.mask();
        let i = mask.row_of(k);
        let j = mask.col_of(k);
        let s = dot(x.row(i), x.row(j)) - self.obs.values()[k];
        let c = weight * s;
        if i == j {
            for (o, xv) in out.row_mut(i).iter_mut().zip(x.row(i)) {
                *o += 2.0 * c * xv;
            }
            return;
        }
        for l in 0..x.r() {
            let xi = x.get(i, l);
            let xj = x.get(j, l);
            out.set(i, l, out.get(i, l) + c * xj);
            out.set(j, l, out.get(j, l) + c * xi);
        }
    }

    /// Adds `λ ∇R(X)` into `out`.
    pub fn add_reg_gradient(&self, x: &FactorMatrix, out: &mut FactorMatrix) {
        regularizer::add_reg_gradient(x, self.hyper.alpha, self.hyper.lambda, out);
    }

    /// `⟨V, ∇²f(X) V⟩ = ‖P_Ω(VXᵀ + XVᵀ)‖_F² − 2⟨P_Ω(M − XXᵀ), VVᵀ⟩ + λ⟨V, ∇²R(X)V⟩`.
    pub fn hessian_quadratic(&self, x: &FactorMatrix, v: &FactorMatrix) -> Result<f64> {
        self.check_pair(x, v)?;
        Ok(self.hessian_quadratic_unchecked(x, v))
    }

    pub(crate) fn hessian_quadratic_unchecked(&self, x: &FactorMatrix, v: &FactorMatrix) -> f64 {
        let mask = self.obs.mask();
        let vals = self.obs.values();
        let mut sym = 0.0;
        let mut curv = 0.0;
        for (k, (i, j)) in mask.pairs().enumerate() {
            let a = dot(v.row(i), x.row(j)) + dot(x.row(i), v.row(j));
            sym += a * a;
            let resid = vals[k] - dot(x.row(i), x.row(j));
            curv += resid * dot(v.row(i), v.row(j));
        }
        let reg = if self.hyper.lambda == 0.0 {
            0.0
        } else {
            self.hyper.lambda * regularizer::reg_hessian_quadratic(x, v, self.hyper.alpha)
        };
        sym - 2.0 * curv + reg
    }

    /// `H[V] = 2 P_Ω(VXᵀ + XVᵀ) X + 2 P_Ω(XXᵀ − M) V + λ ∇²R(X)[V]`.
    pub fn hessian_vecprod(&self, x: &FactorMatrix, v: &FactorMatrix) -> Result<FactorMatrix> {
        self.check_pair(x, v)?;
        let mut out = FactorMatrix::zeros(x.d(), x.r());
        self.hessian_vecprod_into(x, v, &mut out);
        Ok(out)
    }

    pub(crate) fn hessian_vecprod_into(&self, x: &FactorMatrix, v: &FactorMatrix, out: &mut FactorMatrix) {
        out.as_mut_slice().iter_mut().for_each(|o| *o = 0.0);
        let mask = self.obs.mask();
        let vals = self.obs.values();
        for i in 0..mask.d() {
            let xi = x.row(i);
            let vi = v.row(i);
            let oi = out.row_mut(i);
            for k in mask.row_range(i) {
                let j = mask.col_of(k);
                let xj = x.row(j);
                let vj = v.row(j);
                let a = 2.0 * (dot(vi, xj) + dot(xi, vj));
                let s = 2.0 * (dot(xi, xj) - vals[k]);
                for ((o, &xv), &vv) in oi.iter_mut().zip(xj).zip(vj) {
                    *o += a * xv + s * vv;
                }
            }
        }
        regularizer::add_reg_hessian_vec(x, v, self.hyper.alpha, self.hyper.lambda, out);
    }

    /// Smallest eigenvalue of the `dr × dr` Hessian by shifted power
    /// iteration. `tol = None` uses `1e-6·(1 + ‖H‖)`.
    pub fn min_hessian_eig(&self, x: &FactorMatrix, tol: Option<f64>) -> Result<HessianEig> {
        self.check(x)?;
        if let Some(t) = tol {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("tol must be > 0, got {t}")));
            }
        }
        Ok(eig::min_hessian_eig(self, x, tol, None))
    }

    /// As [`ObjectiveConfig::min_hessian_eig`] with an explicit iteration cap.
    pub fn min_hessian_eig_capped(&self, x: &FactorMatrix, tol: Option<f64>, max_iters: usize) -> Result<HessianEig> {
        self.check(x)?;
        Ok(eig::min_hessian_eig(self, x, tol, Some(max_iters)))
    }

    /// Estimate of `‖∇²f(X)‖` from a short power iteration.
    pub fn hessian_norm_estimate(&self, x: &FactorMatrix) -> Result<f64> {
        self.check(x)?;
        Ok(eig::hessian_norm(self, x, 1e-3, 200))
    }
}
