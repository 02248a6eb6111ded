use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// `rows x cols` matrix with ones on the main diagonal and zeros elsewhere.
    pub fn identity_padded(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.values[i * cols + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::Config(format!(
                "matvec: matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok(self.values.chunks_exact(self.cols).map(|row| dot(row, x)).collect())
    }

    /// `selfᵀ · y`.
    pub fn matvec_transposed(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.rows {
            return Err(Error::Config(format!(
                "matvec_transposed: matrix has {} rows, vector has {} entries",
                self.rows,
                y.len()
            )));
        }
        let mut out = vec![T::zero(); self.cols];
        for (row, &yi) in self.values.chunks_exact(self.cols).zip(y) {
            if yi == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
        Ok(out)
    }

    /// `self += scale · u vᵀ`.
    pub fn add_outer(&mut self, u: &[T], v: &[T], scale: T) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (row, &ui) in self.values.chunks_exact_mut(self.cols).zip(u) {
            let s = ui * scale;
            if s == T::zero() {
                continue;
            }
            for (w, &vj) in row.iter_mut().zip(v) {
                *w += s * vj;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
