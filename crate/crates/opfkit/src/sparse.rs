//! Minimal sparse matrix containers (COO and CSR) used by the network
//! model, the QCQP converter, and the solvers.
//!
//! These are storage types with matrix-vector products; factorization of
//! `f64` systems is delegated to `faer` via [`Csr::to_faer`].

use num_traits::Zero;

use crate::error::{Error, Result};

/// Coordinate-format sparse matrix builder. Duplicate entries are summed
/// when compressed.
#[derive(Debug, Clone, PartialEq)]
pub struct Coo<S> {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, S)>,
}

impl<S: Copy + Zero + std::ops::AddAssign> Coo<S> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Coo {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn push(&mut self, row: usize, col: usize, value: S) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn entries(&self) -> &[(usize, usize, S)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        self.entries.iter().copied()
    }

    /// Sort entries by `(row, column)` and merge duplicates in place.
    /// After this the COO form is a canonical triplet list, usable where
    /// CSR row pointers would dominate memory (many small matrices of
    /// large dimension).
    pub fn canonicalize(&mut self) {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut out: Vec<(usize, usize, S)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match out.last_mut() {
                Some(&mut (lr, lc, ref mut lv)) if lr == r && lc == c => *lv += v,
                _ => out.push((r, c, v)),
            }
        }
        self.entries = out;
    }

    /// Compress to CSR, summing duplicates and dropping exact zeros that
    /// result from cancellation is deliberately *not* done: structural
    /// zeros are kept so sparsity patterns stay stable.
    pub fn to_csr(&self) -> Csr<S> {
        let mut counts = vec![0usize; self.nrows + 1];
        for &(r, _, _) in &self.entries {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; self.entries.len()];
        let mut vals = vec![S::zero(); self.entries.len()];
        let mut next = counts.clone();
        for &(r, c, v) in &self.entries {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }
        // Sort each row by column and merge duplicates.
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut out_cols = Vec::with_capacity(cols.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        for r in 0..self.nrows {
            let lo = counts[r];
            let hi = counts[r + 1];
            let mut idx: Vec<usize> = (lo..hi).collect();
            idx.sort_by_key(|&k| cols[k]);
            for k in idx {
                if let Some(&last) = out_cols.last() {
                    if out_cols.len() > row_ptr[r] && last == cols[k] {
                        *out_vals.last_mut().unwrap() += vals[k];
                        continue;
                    }
                }
                out_cols.push(cols[k]);
                out_vals.push(vals[k]);
            }
            row_ptr[r + 1] = out_cols.len();
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx: out_cols,
            values: out_vals,
        }
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<S> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<S>,
}

impl<S: Copy + Zero + std::ops::AddAssign> Csr<S> {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `r` as `(column, value)` pairs, sorted by column.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, S)> + '_ {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.values[lo..hi])
            .map(|(&c, &v)| (c, v))
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        self.row(r)
            .find(|&(col, _)| col == c)
            .map(|(_, v)| v)
            .unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }
}

impl<S> Csr<S>
where
    S: Copy + Zero + std::ops::AddAssign + std::ops::Mul<Output = S>,
{
    /// `y = A x`.
    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = vec![S::zero(); self.nrows];
        for r in 0..self.nrows {
            let mut acc = S::zero();
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }
}

impl Csr<f64> {
    /// Convert to a `faer` column-major sparse matrix for factorization.
    pub fn to_faer(&self) -> Result<faer::sparse::SparseColMat<usize, f64>> {
        let triplets: Vec<faer::sparse::Triplet<usize, usize, f64>> = self
            .iter()
            .map(|(r, c, v)| faer::sparse::Triplet::new(r, c, v))
            .collect();
        faer::sparse::SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::Model(format!("sparse conversion failed: {e:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn duplicates_are_summed() {
        let mut coo = Coo::new(2, 2);
        coo.push(0, 0, 1.0);
        coo.push(0, 0, 2.5);
        coo.push(1, 1, -1.0);
        let csr = coo.to_csr();
        assert_eq!(csr.nnz(), 2);
        assert_eq!(csr.get(0, 0), 3.5);
        assert_eq!(csr.get(1, 1), -1.0);
        assert_eq!(csr.get(0, 1), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let mut coo = Coo::new(3, 2);
        coo.push(0, 0, 2.0);
        coo.push(0, 1, -1.0);
        coo.push(2, 1, 4.0);
        let csr = coo.to_csr();
        let y = csr.matvec(&[1.0, 3.0]);
        assert_eq!(y, vec![-1.0, 0.0, 12.0]);
    }

    #[test]
    fn complex_matvec() {
        let mut coo = Coo::new(1, 1);
        coo.push(0, 0, Complex64::new(0.0, 1.0));
        let csr = coo.to_csr();
        let y = csr.matvec(&[Complex64::new(1.0, 0.0)]);
        assert_eq!(y[0], Complex64::new(0.0, 1.0));
    }

    #[test]
    fn faer_solve_roundtrip() {
        use faer::linalg::solvers::Solve;
        let mut coo = Coo::new(2, 2);
        coo.push(0, 0, 4.0);
        coo.push(0, 1, 1.0);
        coo.push(1, 0, 1.0);
        coo.push(1, 1, 3.0);
        let a = coo.to_csr().to_faer().unwrap();
        let lu = a.sp_lu().unwrap();
        let rhs = faer::Mat::from_fn(2, 1, |i, _| [1.0, 2.0][i]);
        let x = lu.solve(&rhs);
        assert!((4.0 * x[(0, 0)] + x[(1, 0)] - 1.0).abs() < 1e-12);
        assert!((x[(0, 0)] + 3.0 * x[(1, 0)] - 2.0).abs() < 1e-12);
    }
}
