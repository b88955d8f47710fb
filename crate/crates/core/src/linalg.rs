//! Small dense linear-algebra layer over `faer`.
//!
//! Everything in the crate talks to matrices through [`LinearOperator`] so the
//! Krylov solvers only ever see matrix-vector products.

use faer::linalg::solvers::Solve;
use faer::{Col, ColRef, Mat, MatRef, Side};

use crate::error::{Error, Result};

/// A symmetric linear map on `R^n` accessed only through products.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: ColRef<'_, f64>) -> Col<f64>;
}

impl LinearOperator for Mat<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: ColRef<'_, f64>) -> Col<f64> {
        self * x
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, x: ColRef<'_, f64>) -> Col<f64> {
        (**self).apply(x)
    }
}

/// `K + shift * I`, the regularized kernel matrix `K_sigma`.
#[derive(Clone, Copy)]
pub struct Shifted<'a> {
    pub matrix: &'a Mat<f64>,
    pub shift: f64,
}

impl<'a> Shifted<'a> {
    pub fn new(matrix: &'a Mat<f64>, shift: f64) -> Self {
        Self { matrix, shift }
    }
}

impl LinearOperator for Shifted<'_> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: ColRef<'_, f64>) -> Col<f64> {
        let mut y = self.matrix * x;
        for i in 0..y.nrows() {
            y[i] += self.shift * x[i];
        }
        y
    }
}

/// `factor * M`; used for the normalized kernel matrix `A = K / n`.
#[derive(Clone, Copy)]
pub struct Scaled<'a> {
    pub matrix: &'a Mat<f64>,
    pub factor: f64,
}

impl<'a> Scaled<'a> {
    pub fn new(matrix: &'a Mat<f64>, factor: f64) -> Self {
        Self { matrix, factor }
    }
}

impl LinearOperator for Scaled<'_> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: ColRef<'_, f64>) -> Col<f64> {
        let mut y = self.matrix * x;
        for i in 0..y.nrows() {
            y[i] *= self.factor;
        }
        y
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(ColRef<'_, f64>) -> Col<f64>> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(ColRef<'_, f64>) -> Col<f64>> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: ColRef<'_, f64>) -> Col<f64> {
        (self.f)(x)
    }
}

pub fn dot(a: ColRef<'_, f64>, b: ColRef<'_, f64>) -> f64 {
    a.transpose() * b
}

pub fn col_from_slice(values: &[f64]) -> Col<f64> {
    Col::from_fn(values.len(), |i| values[i])
}

pub fn col_to_vec(col: ColRef<'_, f64>) -> Vec<f64> {
    col.iter().copied().collect()
}

/// Largest absolute entry of `m - m^T`.
pub fn max_asymmetry(m: MatRef<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max(m[(i, j)].abs());
        }
    }
    worst
}

/// Copies the lower triangle onto the upper one.
pub fn symmetrize_from_lower(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = m[(i, j)];
            m[(j, i)] = v;
        }
    }
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

/// Largest singular value via the symmetric eigenproblem of `m^T m`.
pub fn operator_norm(m: MatRef<'_, f64>) -> Result<f64> {
    let gram = m.transpose() * m;
    let values = gram
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenConvergence)?;
    Ok(values.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Cholesky factor holder for a symmetric positive-definite matrix.
pub struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl Cholesky {
    pub fn new(m: MatRef<'_, f64>) -> Result<Self> {
        match m.llt(Side::Lower) {
            Ok(llt) => Ok(Self { llt }),
            Err(faer::linalg::solvers::LltError::NonPositivePivot { index }) => {
                Err(Error::Factorization { pivot: index })
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.llt.L().nrows()
    }

    pub fn solve_col(&self, b: ColRef<'_, f64>) -> Col<f64> {
        self.llt.solve(b)
    }

    pub fn solve_mat(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        self.llt.solve(b)
    }

    /// `L^{-1} B` for the lower factor `L`.
    pub fn solve_lower(&self, b: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = b.to_owned();
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            self.llt.L(),
            out.as_mut(),
            faer::Par::Seq,
        );
        out
    }

    pub fn inverse(&self) -> Mat<f64> {
        let n = self.dim();
        let mut inv = self.solve_mat(Mat::<f64>::identity(n, n).as_ref());
        // solves are not exactly symmetric
        for j in 0..n {
            for i in (j + 1)..n {
                let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = v;
                inv[(j, i)] = v;
            }
        }
        inv
    }

    pub fn log_det(&self) -> f64 {
        let l = self.llt.L();
        (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
    }
}
