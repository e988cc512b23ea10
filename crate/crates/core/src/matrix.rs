//! Minimal row-major dense matrix used as the sample-by-feature container.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![S::zero(); n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix { n_rows, n_cols, data }
    }

    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols);
        Matrix { n_rows, n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.n_cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.n_cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    pub fn column(&self, c: usize) -> Vec<S> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix<S> {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Matrix<S> {
        let mut out = Matrix::zeros(self.n_rows, idx.len());
        for r in 0..self.n_rows {
            for (j, &c) in idx.iter().enumerate() {
                out.set(r, j, self.get(r, c));
            }
        }
        out
    }
}
