use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries for {rows}x{cols}", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense matrix entry"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows on the right operand", self.cols),
                found: format!("{}", other.rows),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `y = Aᵀ x`.
    pub fn mul_vec_transposed(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (yj, a) in y.iter_mut().zip(self.row(i)) {
                *yj += a * xi;
            }
        }
        y
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn inner(&self, other: &DenseMatrix) -> f64 {
        dot(&self.data, &other.data)
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.rows, self.cols),
                found: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(())
    }
}

/// A `d × r` factor (ground truth `Z` or iterate `X`), stored row-major so
/// that row `i` is the embedding of coordinate `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMatrix {
    d: usize,
    r: usize,
    data: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(d: usize, r: usize) -> Self {
        Self {
            d,
            r,
            data: vec![0.0; d * r],
        }
    }

    pub fn from_row_major(d: usize, r: usize, data: Vec<f64>) -> Result<Self> {
        if r > d {
            return Err(Error::InvalidParameter(format!(
                "factor rank {r} exceeds dimension {d}"
            )));
        }
        if data.len() != d * r {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries for {d}x{r}", d * r),
                found: format!("{} entries", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("factor entry"));
        }
        Ok(Self { d, r, data })
    }

    pub fn from_fn(d: usize, r: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(d * r);
        for i in 0..d {
            for k in 0..r {
                data.push(f(i, k));
            }
        }
        Self { d, r, data }
    }

    /// Single column factor from a vector.
    pub fn from_column(x: &[f64]) -> Self {
        Self {
            d: x.len(),
            r: 1,
            data: x.to_vec(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d, self.r)
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.r + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[i * self.r + k] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        norm2(self.row(i))
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.d).map(|i| self.row_norm(i)).collect()
    }

    /// `‖X‖_{2→∞}`, the largest row norm.
    pub fn max_row_norm(&self) -> f64 {
        (0..self.d).map(|i| self.row_norm(i)).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    /// Frobenius inner product `⟨X, Y⟩`.
    pub fn inner(&self, other: &FactorMatrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        dot(&self.data, &other.data)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            d: self.d,
            r: self.r,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|a| *a *= s);
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &FactorMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// `self + s · other` as a new matrix.
    pub fn added(&self, s: f64, other: &FactorMatrix) -> Self {
        let mut out = self.clone();
        out.axpy(s, other);
        out
    }

    pub fn sub(&self, other: &FactorMatrix) -> Self {
        self.added(-1.0, other)
    }

    /// `Xᵀ Y` (an `r × r'` matrix).
    pub fn transpose_mul(&self, other: &FactorMatrix) -> DenseMatrix {
        debug_assert_eq!(self.d, other.d);
        let mut out = DenseMatrix::zeros(self.r, other.r);
        for i in 0..self.d {
            let a = self.row(i);
            let b = other.row(i);
            for (k, &ak) in a.iter().enumerate() {
                for (l, &bl) in b.iter().enumerate() {
                    let v = out.get(k, l) + ak * bl;
                    out.set(k, l, v);
                }
            }
        }
        out
    }

    /// `XᵀX`.
    pub fn gram(&self) -> DenseMatrix {
        self.transpose_mul(self)
    }

    /// `X R` for a small `r × r'` matrix `R`.
    pub fn mul_small(&self, m: &DenseMatrix) -> Result<FactorMatrix> {
        if m.rows() != self.r {
            return Err(Error::DimensionMismatch {
                expected: format!("{} rows", self.r),
                found: format!("{}", m.rows()),
            });
        }
        let c = m.cols();
        let mut out = FactorMatrix::zeros(self.d, c);
        for i in 0..self.d {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (k, &a) in src.iter().enumerate() {
                for (l, v) in dst.iter_mut().enumerate() {
                    *v += a * m.get(k, l);
                }
            }
        }
        Ok(out)
    }

    /// The full `d × d` outer product `X Yᵀ`.
    pub fn outer(&self, other: &FactorMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(self.d, other.d, |i, j| dot(self.row(i), other.row(j)))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_non_finite() {
        assert!(DenseMatrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::from_row_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(FactorMatrix::from_row_major(2, 3, vec![0.0; 6]).is_err());
        assert!(FactorMatrix::from_row_major(2, 1, vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn gram_and_outer_agree_on_traces() {
        let x = FactorMatrix::from_fn(5, 2, |i, k| (i as f64 + 1.0) * if k == 0 { 1.0 } else { -0.5 });
        let g = x.gram();
        let o = x.outer(&x);
        let tr_o: f64 = (0..5).map(|i| o.get(i, i)).sum();
        assert!((g.get(0, 0) + g.get(1, 1) - tr_o).abs() < 1e-12);
        assert!((x.frobenius_norm_sq() - tr_o).abs() < 1e-12);
    }

    #[test]
    fn matmul_identity() {
        let a = DenseMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64);
        let b = a.matmul(&DenseMatrix::identity(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.matmul(&DenseMatrix::identity(3)).is_err());
    }
}
