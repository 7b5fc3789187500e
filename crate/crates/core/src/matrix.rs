//! Dense row-major feature matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::ClippingBounds;

/// Row-major `n_rows × n_cols` matrix. Optional per-column bounds come from schema
/// metadata and are what data-independent (random) tree splits draw thresholds from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    bounds: Option<Vec<ClippingBounds>>,
}

impl Matrix {
    pub fn new(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::params(format!(
                "matrix of {n_rows}×{n_cols} needs {} values, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        Ok(Matrix {
            n_rows,
            n_cols,
            values,
            bounds: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::WidthMismatch {
                expected: n_cols,
                actual: bad.len(),
            });
        }
        Matrix::new(rows.len(), n_cols, rows.concat())
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<ClippingBounds>) -> Result<Self> {
        if bounds.len() != self.n_cols {
            return Err(Error::WidthMismatch {
                expected: self.n_cols,
                actual: bounds.len(),
            });
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> Option<&[ClippingBounds]> {
        self.bounds.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    /// Rows at `indices`, in the given order. Bounds carry over.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Matrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            values,
            bounds: self.bounds.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.column(0), vec![1.0, 3.0]);
        assert_eq!(m.select_rows(&[1]).row(0), &[3.0, 4.0]);
    }
}
