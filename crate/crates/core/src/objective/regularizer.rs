//! Row-wise quartic hinge `R(X) = Σ_i r(‖X_i‖)`, `r(t) = (t − α)⁴·𝟙[t ≥ α]`.

use crate::linalg::{dot, FactorMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowPenalty {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// `r(t)` and its first two derivatives. All three vanish at `t = α`.
pub fn reg_row(t: f64, alpha: f64) -> RowPenalty {
    if t <= alpha {
        return RowPenalty {
            value: 0.0,
            d1: 0.0,
            d2: 0.0,
        };
    }
    let s = t - alpha;
    let s2 = s * s;
    RowPenalty {
        value: s2 * s2,
        d1: 4.0 * s2 * s,
        d2: 12.0 * s2,
    }
}

pub fn regularizer(x: &FactorMatrix, alpha: f64) -> f64 {
    (0..x.d()).map(|i| reg_row(x.row_norm(i), alpha).value).sum()
}

/// `∇R(X) = ΓX` with `Γ_ii = r'(‖X_i‖)/‖X_i‖ = 4(‖X_i‖ − α)³/‖X_i‖` on
/// active rows.
pub fn reg_gradient(x: &FactorMatrix, alpha: f64) -> FactorMatrix {
    let mut g = FactorMatrix::zeros(x.d(), x.r());
    add_reg_gradient(x, alpha, 1.0, &mut g);
    g
}

/// `out += weight · ∇R(X)`.
pub(crate) fn add_reg_gradient(x: &FactorMatrix, alpha: f64, weight: f64, out: &mut FactorMatrix) {
    if weight == 0.0 {
        return;
    }
    for i in 0..x.d() {
        let t = x.row_norm(i);
        let pen = reg_row(t, alpha);
        if pen.d1 == 0.0 {
            continue;
        }
        let gamma = weight * pen.d1 / t;
        for (o, xi) in out.row_mut(i).iter_mut().zip(x.row(i)) {
            *o += gamma * xi;
        }
    }
}

/// `out += weight · ∇²R(X)[V]`, row by row:
/// `r''(t)·P_∥ V_i + (r'(t)/t)·P_⊥ V_i`.
pub(crate) fn add_reg_hessian_vec(
    x: &FactorMatrix,
    v: &FactorMatrix,
    alpha: f64,
    weight: f64,
    out: &mut FactorMatrix,
) {
    if weight == 0.0 {
        return;
    }
    for i in 0..x.d() {
        let xi = x.row(i);
        let t = dot(xi, xi).sqrt();
        let pen = reg_row(t, alpha);
        if pen.d1 == 0.0 && pen.d2 == 0.0 {
            continue;
        }
        let vi = v.row(i);
        let along = dot(xi, vi) / t; // ⟨u, V_i⟩ with u = X_i/t
        let perp_coef = pen.d1 / t;
        for ((o, &xk), &vk) in out.row_mut(i).iter_mut().zip(xi).zip(vi) {
            let par = along * xk / t;
            *o += weight * (pen.d2 * par + perp_coef * (vk - par));
        }
    }
}

/// `⟨V, ∇²R(X) V⟩` evaluated from the quadratic form directly.
pub(crate) fn reg_hessian_quadratic(x: &FactorMatrix, v: &FactorMatrix, alpha: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.d() {
        let xi = x.row(i);
        let t = dot(xi, xi).sqrt();
        let pen = reg_row(t, alpha);
        if pen.d1 == 0.0 && pen.d2 == 0.0 {
            continue;
        }
        let vi = v.row(i);
        let along = dot(xi, vi) / t;
        let along_sq = along * along;
        let perp_sq = (dot(vi, vi) - along_sq).max(0.0);
        acc += pen.d2 * along_sq + pen.d1 / t * perp_sq;
    }
    acc
}
