use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense real `rows × cols` matrix with finite entries.
///
/// Observations, signals and noise all live in this type. A vector is the
/// single-column case.
#[derive(Clone, PartialEq)]
pub struct DataMatrix {
    inner: DMatrix<f64>,
}

impl DataMatrix {
    /// Builds a matrix from row-major data.
    pub fn new(rows: usize, cols: usize, row_major: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dims(format!("empty shape {rows}x{cols}")));
        }
        if row_major.len() != rows * cols {
            return Err(Error::dims(format!(
                "{} values supplied for a {rows}x{cols} matrix",
                row_major.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, row_major))
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::dims("ragged rows"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(n, p, &flat)
    }

    /// Column vector `n × 1`.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    /// Wraps an `nalgebra` matrix, rejecting empty shapes and non-finite entries.
    pub fn from_matrix(inner: DMatrix<f64>) -> Result<Self> {
        if inner.nrows() == 0 || inner.ncols() == 0 {
            return Err(Error::dims(format!(
                "empty shape {}x{}",
                inner.nrows(),
                inner.ncols()
            )));
        }
        for j in 0..inner.ncols() {
            for i in 0..inner.nrows() {
                if !inner[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { inner })
    }

    /// Wraps a matrix known to be finite and non-empty (results of internal
    /// arithmetic on valid inputs).
    pub(crate) fn from_matrix_unchecked(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.nrows() > 0 && inner.ncols() > 0);
        Self { inner }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape");
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "empty shape");
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape");
        let inner = DMatrix::from_fn(rows, cols, f);
        debug_assert!(inner.iter().all(|v| v.is_finite()));
        Self { inner }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::dims("empty diagonal"));
        }
        Self::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            values,
        )))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    pub fn is_vector(&self) -> bool {
        self.cols() == 1
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.inner[(i, j)]);
            }
        }
        out
    }

    /// Column `j` as a plain vector.
    pub fn column_values(&self, j: usize) -> Vec<f64> {
        self.inner.column(j).iter().copied().collect()
    }

    pub fn row_values(&self, i: usize) -> Vec<f64> {
        self.inner.row(i).iter().copied().collect()
    }

    pub fn transpose(&self) -> Self {
        Self {
            inner: self.inner.transpose(),
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols() != rhs.rows() {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(Self {
            inner: &self.inner * &rhs.inner,
        })
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(Self {
            inner: &self.inner + &rhs.inner,
        })
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.check_same_shape(rhs)?;
        Ok(Self {
            inner: &self.inner - &rhs.inner,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            inner: &self.inner * c,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Mean of each column.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows() as f64;
        (0..self.cols())
            .map(|j| self.inner.column(j).sum() / n)
            .collect()
    }

    pub(crate) fn check_same_shape(&self, rhs: &Self) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::dims(format!(
                "shapes {:?} and {:?} differ",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(())
    }

    pub(crate) fn as_matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.inner
    }
}

impl Index<(usize, usize)> for DataMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.inner[idx]
    }
}

impl fmt::Debug for DataMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DataMatrix({}x{}) {:?}", self.rows(), self.cols(), self.to_row_major())
    }
}
