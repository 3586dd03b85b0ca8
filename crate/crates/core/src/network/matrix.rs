use std::ops::{Index, IndexMut};

use nalgebra::{DMatrix, Schur, SVD};

use crate::error::{Error, Result};
use crate::C64;

/// Square complex scattering matrix with a fixed port count.
#[derive(Debug, Clone, PartialEq)]
pub struct PortMatrix(DMatrix<C64>);

impl PortMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "port matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("port matrix has non-finite entries"));
        }
        Ok(Self(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self(DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                diag[r]
            } else {
                C64::new(0.0, 0.0)
            }
        }))
    }

    /// Two-port `[[s11, s12], [s21, s22]]`.
    pub fn two_port(s11: C64, s12: C64, s21: C64, s22: C64) -> Self {
        Self(DMatrix::from_row_slice(2, 2, &[s11, s12, s21, s22]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn scale(&self, k: C64) -> Self {
        Self(&self.0 * k)
    }

    pub fn singular_values(&self) -> Vec<f64> {
        SVD::new(self.0.clone(), false, false)
            .singular_values
            .iter()
            .copied()
            .collect()
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values().into_iter().fold(0.0, f64::max)
    }

    /// Ratio of largest to smallest singular value (infinite when singular).
    pub fn condition_number(&self) -> f64 {
        condition_number(&self.0)
    }

    /// Largest singular value is at most `1 + tol`.
    pub fn is_passive(&self, tol: f64) -> bool {
        self.max_singular_value() <= 1.0 + tol
    }

    /// Largest entry magnitude of `S†S − I`.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        let g = self.0.adjoint() * &self.0 - DMatrix::<C64>::identity(n, n);
        max_entry(&g)
    }

    /// Largest entry magnitude of `self − other`.
    pub fn max_abs_diff(&self, other: &PortMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        max_entry(&(&self.0 - &other.0))
    }
}

impl Index<(usize, usize)> for PortMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for PortMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

pub(crate) fn max_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = SVD::new(m.clone(), false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Largest eigenvalue magnitude, read off the complex Schur form.
pub(crate) fn spectral_radius(m: &DMatrix<C64>) -> f64 {
    let (_, t) = Schur::new(m.clone()).unpack();
    (0..t.nrows()).map(|i| t[(i, i)].norm()).fold(0.0, f64::max)
}
