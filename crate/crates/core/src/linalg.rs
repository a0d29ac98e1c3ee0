//! Small dense complex matrix kernels (M ≤ 8).
//!
//! Matrices live on the stack in a fixed 8×8 buffer; only the leading
//! `dim × dim` block is meaningful. LU factorization uses partial pivoting.

use std::fmt;
use std::ops::{Index, IndexMut, Mul};

use num_complex::Complex64;
use thiserror::Error;

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

/// Condition-number estimate above which a matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("matrix dimension {0} outside 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// Square complex matrix of dimension at most [`MAX_DIM`].
#[derive(Clone, Copy, PartialEq)]
pub struct SmallComplexMatrix {
    dim: usize,
    data: [Complex64; MAX_DIM * MAX_DIM],
}

impl fmt::Debug for SmallComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<Complex64>> = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)]).collect())
            .collect();
        f.debug_struct("SmallComplexMatrix")
            .field("dim", &self.dim)
            .field("rows", &rows)
            .finish()
    }
}

impl Index<(usize, usize)> for SmallComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.dim && j < self.dim);
        &self.data[i * MAX_DIM + j]
    }
}

impl IndexMut<(usize, usize)> for SmallComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.dim && j < self.dim);
        &mut self.data[i * MAX_DIM + j]
    }
}

impl SmallComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&dim),
            "matrix dimension {dim} outside 1..={MAX_DIM}"
        );
        Self {
            dim,
            data: [Complex64::new(0.0, 0.0); MAX_DIM * MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(dim: usize, entries: &[Complex64]) -> Result<Self, LinalgError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(LinalgError::BadDimension(dim));
        }
        assert_eq!(entries.len(), dim * dim, "entry count must be dim²");
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = entries[i * dim + j];
            }
        }
        Ok(m)
    }

    pub fn to_row_major(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_finite(&self) -> bool {
        self.to_row_major().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] *= c;
            }
        }
        out
    }

    /// Trace of `A A^H`, i.e. the squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self[(i, j)].norm_sqr();
            }
        }
        acc
    }

    /// Max-abs entry, used for residual checks.
    pub fn max_abs(&self) -> f64 {
        self.to_row_major()
            .iter()
            .fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn row(&self, i: usize) -> Vec<Complex64> {
        (0..self.dim).map(|j| self[(i, j)]).collect()
    }

    pub fn set_row(&mut self, i: usize, row: &[Complex64]) {
        assert_eq!(row.len(), self.dim);
        for (j, &v) in row.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    fn one_norm(&self) -> f64 {
        (0..self.dim)
            .map(|j| (0..self.dim).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu, LinalgError> {
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let n = self.dim;
        let mut a = *self;
        let mut perm = [0usize; MAX_DIM];
        for (i, p) in perm.iter_mut().enumerate().take(n) {
            *p = i;
        }
        let mut swaps = 0usize;
        for k in 0..n {
            let (piv, piv_abs) = (k..n)
                .map(|i| (i, a[(i, k)].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if piv_abs == 0.0 {
                return Err(LinalgError::Singular {
                    condition: f64::INFINITY,
                });
            }
            if piv != k {
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(piv, j)];
                    a[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
                swaps += 1;
            }
            let inv_pivot = a[(k, k)].inv();
            for i in (k + 1)..n {
                let factor = a[(i, k)] * inv_pivot;
                a[(i, k)] = factor;
                for j in (k + 1)..n {
                    let upd = factor * a[(k, j)];
                    a[(i, j)] -= upd;
                }
            }
        }
        Ok(Lu {
            factors: a,
            perm,
            swaps,
            norm1: self.one_norm(),
        })
    }

    /// Inverse via LU. Fails when the condition estimate exceeds [`MAX_CONDITION`].
    pub fn invert(&self) -> Result<Self, LinalgError> {
        let lu = self.lu()?;
        let inv = lu.inverse();
        let condition = lu.norm1 * inv.one_norm();
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(LinalgError::Singular { condition });
        }
        Ok(inv)
    }

    /// Solves `A x = e_m`, i.e. returns column `m` of `A^{-1}`.
    pub fn solve_column(&self, m: usize) -> Result<Vec<Complex64>, LinalgError> {
        let inv = self.invert()?;
        Ok((0..self.dim).map(|i| inv[(i, m)]).collect())
    }

    /// `log |A A^H| = 2 Σ log |u_ii|`.
    pub fn log_abs_det_gram(&self) -> Result<f64, LinalgError> {
        let lu = self.lu()?;
        Ok(2.0 * (0..self.dim).map(|i| lu.factors[(i, i)].norm().ln()).sum::<f64>())
    }
}

impl Mul for SmallComplexMatrix {
    type Output = SmallComplexMatrix;

    #[allow(clippy::op_ref)]
    fn mul(self, rhs: SmallComplexMatrix) -> SmallComplexMatrix {
        // delegate to the by-reference product
        &self * &rhs
    }
}

impl Mul for &SmallComplexMatrix {
    type Output = SmallComplexMatrix;

    fn mul(self, rhs: &SmallComplexMatrix) -> SmallComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let n = self.dim;
        let mut out = SmallComplexMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

/// Packed LU factors `P A = L U`.
#[derive(Debug, Clone, Copy)]
pub struct Lu {
    factors: SmallComplexMatrix,
    perm: [usize; MAX_DIM],
    swaps: usize,
    norm1: f64,
}

impl Lu {
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.factors.dim;
        let a = &self.factors;
        let mut x: Vec<Complex64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            for k in 0..i {
                let upd = a[(i, k)] * x[k];
                x[i] -= upd;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let upd = a[(i, k)] * x[k];
                x[i] -= upd;
            }
            x[i] /= a[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> SmallComplexMatrix {
        let n = self.factors.dim;
        let mut inv = SmallComplexMatrix::zeros(n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }

    pub fn determinant(&self) -> Complex64 {
        let n = self.factors.dim;
        let prod: Complex64 = (0..n).map(|i| self.factors[(i, i)]).product();
        if self.swaps.is_multiple_of(2) {
            prod
        } else {
            -prod
        }
    }
}

impl std::ops::Sub for &SmallComplexMatrix {
    type Output = SmallComplexMatrix;

    fn sub(self, rhs: &SmallComplexMatrix) -> SmallComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[(i, j)] -= rhs[(i, j)];
            }
        }
        out
    }
}
