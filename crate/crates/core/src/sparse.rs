//! Row-compressed sparse matrices.
//!
//! Assembly accumulates (row, col, value) triplets; duplicates are summed
//! during compression, and structural entries are kept even when their value
//! is zero so that repeated assemblies of the same operator produce the same
//! sparsity pattern (the direct solver caches symbolic factorizations on it).

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Compressed pattern of a fixed triplet layout, with the scatter map from
/// triplet index to value slot.
#[derive(Debug, Clone)]
pub struct CsrPattern {
    n_rows: usize,
    n_cols: usize,
    layout: Vec<(usize, usize)>,
    slots: Vec<usize>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrPattern {
    fn matches(&self, n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> bool {
        self.n_rows == n_rows
            && self.n_cols == n_cols
            && self.layout.len() == triplets.len()
            && self
                .layout
                .iter()
                .zip(triplets)
                .all(|(&(r, c), &(tr, tc, _))| r == tr && c == tc)
    }
}

impl SparseMatrix {
    /// Builds a CSR matrix from triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> SparseMatrix {
        let mut cache = None;
        SparseMatrix::from_triplets_cached(n_rows, n_cols, triplets, &mut cache)
    }

    /// Like [`SparseMatrix::from_triplets`], but reuses the compressed
    /// pattern of a previous call with the same triplet layout: sorting
    /// happens once, later assemblies only scatter values. The cached layout
    /// is verified against the input, so a changed layout falls back to a
    /// rebuild.
    pub fn from_triplets_cached(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
        cache: &mut Option<CsrPattern>,
    ) -> SparseMatrix {
        if let Some(pat) = cache {
            if pat.matches(n_rows, n_cols, triplets) {
                let mut values = vec![0.0; pat.col_idx.len()];
                for (slot, &(_, _, v)) in pat.slots.iter().zip(triplets) {
                    values[*slot] += v;
                }
                return SparseMatrix {
                    n_rows,
                    n_cols,
                    row_ptr: pat.row_ptr.clone(),
                    col_idx: pat.col_idx.clone(),
                    values,
                };
            }
        }

        let mut order: Vec<u32> = (0..triplets.len() as u32).collect();
        order.sort_unstable_by_key(|&i| {
            let (r, c, _) = triplets[i as usize];
            (r, c)
        });
        let mut row_counts = vec![0usize; n_rows];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut slots = vec![0usize; triplets.len()];
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i as usize];
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_counts[r] += 1;
                last = Some((r, c));
            }
            slots[i as usize] = values.len() - 1;
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for r in 0..n_rows {
            row_ptr[r + 1] = row_ptr[r] + row_counts[r];
        }
        *cache = Some(CsrPattern {
            n_rows,
            n_cols,
            layout: triplets.iter().map(|&(r, c, _)| (r, c)).collect(),
            slots,
            row_ptr: row_ptr.clone(),
            col_idx: col_idx.clone(),
        });
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            y[r] = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn matvec_alloc(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// ‖A − Aᵀ‖_max, for symmetry checks.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            let (ca, va) = self.row(r);
            let (cb, vb) = t.row(r);
            // Patterns of A and Aᵀ may differ; walk both sorted rows.
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                match (ca.get(i), cb.get(j)) {
                    (Some(&c1), Some(&c2)) if c1 == c2 => {
                        worst = worst.max((va[i] - vb[j]).abs());
                        i += 1;
                        j += 1;
                    }
                    (Some(&c1), Some(&c2)) if c1 < c2 => {
                        worst = worst.max(va[i].abs());
                        i += 1;
                    }
                    (Some(_), Some(_)) => {
                        worst = worst.max(vb[j].abs());
                        j += 1;
                    }
                    (Some(_), None) => {
                        worst = worst.max(va[i].abs());
                        i += 1;
                    }
                    (None, Some(_)) => {
                        worst = worst.max(vb[j].abs());
                        j += 1;
                    }
                    (None, None) => break,
                }
            }
        }
        worst
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((c, r, v));
            }
        }
        SparseMatrix::from_triplets(self.n_cols, self.n_rows, &triplets)
    }

    /// Σ coefᵢ · Aᵢ over the union sparsity pattern.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix> {
        let mut cache = None;
        SparseMatrix::linear_combination_cached(terms, &mut cache)
    }

    /// [`SparseMatrix::linear_combination`] with a reusable pattern cache
    /// for repeated combinations of matrices with fixed patterns.
    pub fn linear_combination_cached(
        terms: &[(f64, &SparseMatrix)],
        cache: &mut Option<CsrPattern>,
    ) -> Result<SparseMatrix> {
        let (n_rows, n_cols) = match terms.first() {
            Some((_, a)) => (a.n_rows, a.n_cols),
            None => return Err(Error::invalid_argument("empty linear combination")),
        };
        for (_, a) in terms {
            if a.n_rows != n_rows || a.n_cols != n_cols {
                return Err(Error::invalid_argument(
                    "dimension mismatch in linear combination",
                ));
            }
        }
        let nnz: usize = terms.iter().map(|(_, a)| a.nnz()).sum();
        let mut triplets = Vec::with_capacity(nnz);
        for (coef, a) in terms {
            for r in 0..n_rows {
                let (cols, vals) = a.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    triplets.push((r, c, coef * v));
                }
            }
        }
        Ok(SparseMatrix::from_triplets_cached(
            n_rows, n_cols, &triplets, cache,
        ))
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d[r][c] += v;
            }
        }
        d
    }

    /// Same sparsity pattern as `other` (identical row pointers and column
    /// indices).
    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        self.n_rows == other.n_rows
            && self.n_cols == other.n_cols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub(crate) fn csr_parts(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }

    /// Writes the matrix in MatrixMarket coordinate format (ASCII, 1-based).
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_compress_and_sum() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 1.0), (1, 2, 2.0), (0, 0, 3.0), (2, 1, -1.0), (1, 2, 0.5)],
        );
        assert_eq!(a.nnz(), 3);
        let d = a.to_dense();
        assert_eq!(d[0][0], 4.0);
        assert_eq!(d[1][2], 2.5);
        assert_eq!(d[2][1], -1.0);
    }

    #[test]
    fn empty_rows_have_valid_pointers() {
        let a = SparseMatrix::from_triplets(4, 4, &[(0, 1, 1.0), (3, 0, 2.0)]);
        let y = a.matvec_alloc(&[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(y, vec![1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = SparseMatrix::from_triplets(
            2,
            3,
            &[(0, 0, 2.0), (0, 2, -1.0), (1, 1, 4.0)],
        );
        let y = a.matvec_alloc(&[1.0, 2.0, 3.0]);
        assert_eq!(y, vec![-1.0, 8.0]);
    }

    #[test]
    fn asymmetry_of_symmetric_matrix_is_zero() {
        let a = SparseMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 5.0), (1, 0, 5.0), (1, 1, 2.0)],
        );
        assert_eq!(a.asymmetry(), 0.0);
        let b = SparseMatrix::from_triplets(2, 2, &[(0, 1, 5.0)]);
        assert_eq!(b.asymmetry(), 5.0);
    }

    #[test]
    fn linear_combination_union_pattern() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]);
        let b = SparseMatrix::from_triplets(2, 2, &[(1, 1, 1.0)]);
        let c = SparseMatrix::linear_combination(&[(2.0, &a), (3.0, &b)]).unwrap();
        let d = c.to_dense();
        assert_eq!(d[0][0], 2.0);
        assert_eq!(d[1][1], 3.0);
    }

    #[test]
    fn matrix_market_output() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.5), (1, 0, -2.0)]);
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("%%MatrixMarket matrix coordinate real general\n2 2 2\n"));
        assert!(s.contains("2 1 -2"));
    }
}
