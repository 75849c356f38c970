//! Small dense decompositions used on `r × r` blocks.

use crate::linalg::DenseMatrix;

const JACOBI_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the second matrix.
pub fn symmetric_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    assert!(a.is_square(), "symmetric_eigen needs a square matrix");
    let n = a.rows();
    let mut m: Vec<f64> = a.as_slice().to_vec();
    let mut v = DenseMatrix::identity(n);
    let idx = |i: usize, j: usize| i * n + j;

    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[idx(i, j)] * m[idx(i, j)])
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
        if off <= f64::EPSILON * f64::EPSILON * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[idx(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[idx(p, p)];
                let aqq = m[idx(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[idx(k, p)];
                    let mkq = m[idx(k, q)];
                    m[idx(k, p)] = c * mkp - s * mkq;
                    m[idx(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[idx(p, k)];
                    let mqk = m[idx(q, k)];
                    m[idx(p, k)] = c * mpk - s * mqk;
                    m[idx(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[idx(i, i)].total_cmp(&m[idx(j, j)]));
    let values = order.iter().map(|&i| m[idx(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |row, col| v.get(row, order[col]));
    (values, vectors)
}

/// Thin SVD `A = U diag(s) Vᵀ` of a square matrix by one-sided Jacobi.
///
/// `U` is always completed to a full orthonormal matrix: columns belonging
/// to zero singular values are filled from the standard basis by
/// Gram–Schmidt against the determined columns.
pub struct SmallSvd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

pub fn small_svd(a: &DenseMatrix) -> SmallSvd {
    assert!(a.is_square(), "small_svd needs a square matrix");
    let n = a.rows();
    // work on columns
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| a.get(i, j)).collect()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let x = cols[p][k];
                    let y = cols[q][k];
                    cols[p][k] = c * x - s * y;
                    cols[q][k] = s * x + c * y;
                    let x = vcols[p][k];
                    let y = vcols[q][k];
                    vcols[p][k] = c * x - s * y;
                    vcols[q][k] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * n as f64 * f64::EPSILON;

    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > cutoff && norms[j] > 0.0 {
            ucols.push(cols[j].iter().map(|x| x / norms[j]).collect());
        } else {
            ucols.push(vec![0.0; n]);
            pending.push(slot);
        }
    }
    // complete the null-space columns from the standard basis
    let mut basis = 0;
    for slot in pending {
        while basis < n {
            let mut e: Vec<f64> = (0..n).map(|i| if i == basis { 1.0 } else { 0.0 }).collect();
            basis += 1;
            for (other, col) in ucols.iter().enumerate() {
                if other == slot {
                    continue;
                }
                let proj: f64 = e.iter().zip(col).map(|(x, y)| x * y).sum();
                for (ei, ci) in e.iter_mut().zip(col) {
                    *ei -= proj * ci;
                }
            }
            let nrm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 1e-8 {
                ucols[slot] = e.iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }

    SmallSvd {
        u: DenseMatrix::from_fn(n, n, |i, j| ucols[j][i]),
        singular_values: order.iter().map(|&j| norms[j]).collect(),
        v: DenseMatrix::from_fn(n, n, |i, j| vcols[order[j]][i]),
    }
}
