use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Symmetric set of observed index pairs `Ω ⊆ [d] × [d]`.
///
/// Pairs are stored as ordered pairs in compressed-row form: both `(i, j)`
/// and `(j, i)` appear for every off-diagonal observation, so a sum over
/// the stored entries is a sum over ordered pairs. Column indices are sorted
/// within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMask {
    d: usize,
    p: f64,
    include_diagonal: bool,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl ObservationMask {
    /// Builds a mask from unordered pairs; each `(i, j)` is stored in both
    /// orders. Duplicates are collapsed.
    pub fn from_pairs(
        d: usize,
        p: f64,
        include_diagonal: bool,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "sampling probability {p} outside [0, 1]"
            )));
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); d];
        for (i, j) in pairs {
            if i >= d || j >= d {
                return Err(Error::InvalidParameter(format!(
                    "pair ({i}, {j}) out of range for dimension {d}"
                )));
            }
            rows[i].push(j);
            if i != j {
                rows[j].push(i);
            }
        }
        let mut row_ptr = Vec::with_capacity(d + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            cols.extend(row);
            row_ptr.push(cols.len());
        }
        Ok(Self {
            d,
            p,
            include_diagonal,
            row_ptr,
            cols,
        })
    }

    /// Every ordered pair, including the diagonal.
    pub fn full(d: usize) -> Self {
        let pairs = (0..d).flat_map(|i| (i..d).map(move |j| (i, j)));
        Self::from_pairs(d, 1.0, true, pairs).expect("full mask is valid")
    }

    pub fn empty(d: usize) -> Self {
        Self::from_pairs(d, 0.0, true, std::iter::empty()).expect("empty mask is valid")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Nominal sampling probability.
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn include_diagonal(&self) -> bool {
        self.include_diagonal
    }

    /// `|Ω|` counted as ordered pairs.
    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    /// Number of unordered pairs `{i, j}` (diagonal pairs count once).
    pub fn unordered_len(&self) -> usize {
        let diag = self.diagonal_count();
        (self.len() - diag) / 2 + diag
    }

    pub fn diagonal_count(&self) -> usize {
        (0..self.d).filter(|&i| self.contains(i, i)).count()
    }

    /// Column indices observed in row `i` (the row support `S_i`).
    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Range of flat entry indices for row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Column index of flat entry `k`.
    #[inline]
    pub fn col_of(&self, k: usize) -> usize {
        self.cols[k]
    }

    /// Row index of flat entry `k`.
    pub fn row_of(&self, k: usize) -> usize {
        self.row_ptr.partition_point(|&start| start <= k) - 1
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.d && j < self.d && self.row(i).binary_search(&j).is_ok()
    }

    /// Flat index of the stored pair `(i, j)`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i)
            .binary_search(&j)
            .ok()
            .map(|off| self.row_ptr[i] + off)
    }

    /// Iterator over stored ordered pairs `(i, j)` in flat-index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.d).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j)))
    }

    pub fn is_symmetric(&self) -> bool {
        self.pairs().all(|(i, j)| self.contains(j, i))
    }

    /// `P_Ω(A)`: `A` on the observed pairs and zero elsewhere.
    pub fn project(&self, a: &DenseMatrix) -> Result<DenseMatrix> {
        if a.rows() != self.d || a.cols() != self.d {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", self.d, self.d),
                found: format!("{}x{}", a.rows(), a.cols()),
            });
        }
        let mut out = DenseMatrix::zeros(self.d, self.d);
        for (i, j) in self.pairs() {
            out.set(i, j, a.get(i, j));
        }
        Ok(out)
    }
}

/// `P_Ω(A)`.
pub fn project_mask(a: &DenseMatrix, mask: &ObservationMask) -> Result<DenseMatrix> {
    mask.project(a)
}
