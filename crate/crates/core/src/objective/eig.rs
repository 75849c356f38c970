use rand_distr::{Distribution, StandardNormal};

use super::ObjectiveConfig;
use crate::linalg::FactorMatrix;
use crate::rng;

/// Iteration cap per Hessian dimension `dr`.
pub const EIG_ITERS_PER_DIM: usize = 50;

/// Slack on the power-iteration norm estimate used as the shift.
const SHIFT_SLACK: f64 = 1.1;

#[derive(Debug, Clone)]
pub struct HessianEig {
    /// Smallest Rayleigh quotient found; an upper bound on `λ_min(∇²f)`.
    pub lambda_min: f64,
    /// Unit-norm direction attaining `lambda_min`.
    pub witness: FactorMatrix,
    /// False when the iteration cap was hit before the residual test passed.
    pub converged: bool,
    pub iterations: usize,
    pub norm_estimate: f64,
}

fn unit_start(x: &FactorMatrix, tag: &str) -> FactorMatrix {
    let (d, r) = x.shape();
    let mut rng = rng::substream(0xe16e_5eed, tag, (d * 1_000 + r) as u64);
    let mut v = FactorMatrix::from_fn(d, r, |_, _| StandardNormal.sample(&mut rng));
    let n = v.frobenius_norm();
    v.scale_in_place(1.0 / n);
    v
}

/// Dominant `|eigenvalue|` of the Hessian by plain power iteration.
pub(crate) fn hessian_norm(cfg: &ObjectiveConfig<'_>, x: &FactorMatrix, rel_tol: f64, max_iters: usize) -> f64 {
    if x.d() * x.r() == 0 {
        return 0.0;
    }
    let mut v = unit_start(x, "hessian-norm");
    let mut hv = FactorMatrix::zeros(x.d(), x.r());
    let mut est = 0.0;
    for _ in 0..max_iters {
        cfg.hessian_vecprod_into(x, &v, &mut hv);
        let n = hv.frobenius_norm();
        if n == 0.0 {
            return 0.0;
        }
        std::mem::swap(&mut v, &mut hv);
        v.scale_in_place(1.0 / n);
        let done = (n - est).abs() <= rel_tol * n;
        est = n;
        if done {
            break;
        }
    }
    est
}

/// Power iteration on `cI − H` with `c` slightly above `‖H‖`; its dominant
/// eigenvalue is `c − λ_min(H)`.
pub(crate) fn min_hessian_eig(
    cfg: &ObjectiveConfig<'_>,
    x: &FactorMatrix,
    tol: Option<f64>,
    max_iters: Option<usize>,
) -> HessianEig {
    let (d, r) = x.shape();
    let dim = d * r;
    if dim == 0 {
        return HessianEig {
            lambda_min: 0.0,
            witness: FactorMatrix::zeros(d, r),
            converged: true,
            iterations: 0,
            norm_estimate: 0.0,
        };
    }
    let norm = hessian_norm(cfg, x, 1e-3, 200);
    let shift = if norm > 0.0 { SHIFT_SLACK * norm } else { 1.0 };
    let tol = tol.unwrap_or(1e-6 * (1.0 + norm));
    let cap = max_iters.unwrap_or(EIG_ITERS_PER_DIM * dim);

    let mut v = unit_start(x, "hessian-min-eig");
    let mut hv = FactorMatrix::zeros(d, r);
    let mut best = f64::INFINITY;
    let mut witness = v.clone();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cap {
        iterations += 1;
        cfg.hessian_vecprod_into(x, &v, &mut hv);
        let rayleigh = v.inner(&hv);
        if rayleigh < best {
            best = rayleigh;
            witness.clone_from(&v);
        }
        // residual of the Rayleigh pair
        let resid = hv.added(-rayleigh, &v).frobenius_norm();
        if resid <= tol {
            converged = true;
            break;
        }
        // v ← (c v − H v) / ‖·‖
        let mut next = v.scale(shift);
        next.axpy(-1.0, &hv);
        let n = next.frobenius_norm();
        if n == 0.0 {
            converged = true;
            break;
        }
        next.scale_in_place(1.0 / n);
        v = next;
    }

    HessianEig {
        lambda_min: best,
        witness,
        converged,
        iterations,
        norm_estimate: norm,
    }
}
