//! Dense complex vectors/matrices, Hermitian quadratic forms, and the real
//! embedding that bridges complex subproblems to the real-variable QCQP
//! solver.
//!
//! All tolerances are expressed relative to Frobenius norms so checks stay
//! scale-free.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Conjugate transpose.
pub fn hermitian(m: &CMat) -> CMat {
    m.adjoint()
}

/// Square matrix with `v` on the diagonal, zeros elsewhere.
pub fn diag_embed(v: &CVec) -> CMat {
    let n = v.len();
    CMat::from_fn(n, n, |i, j| if i == j { v[i] } else { C64::new(0.0, 0.0) })
}

fn hermitian_residual(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

/// `q(x) = x^H A x + 2 Re{b^H x} + c` with Hermitian `A`, so the value is
/// real for every `x`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub a: CMat,
    pub b: CVec,
    pub c: f64,
}

impl QuadraticForm {
    pub fn new(a: CMat, b: CVec, c: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "quadratic form: A is {}x{}, b has length {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        let scale = a.norm().max(1.0);
        let residual = hermitian_residual(&a);
        if residual > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian {
                residual,
                tol: HERMITIAN_TOL * scale,
            });
        }
        // Symmetrize so downstream evaluation is exactly real up to rounding.
        let a = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        Ok(Self { a, b, c })
    }

    /// Constant form of dimension `n`.
    pub fn constant(n: usize, c: f64) -> Self {
        Self {
            a: CMat::zeros(n, n),
            b: CVec::zeros(n),
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Evaluates the form; the imaginary residue of `x^H A x` is discarded.
    pub fn eval(&self, x: &CVec) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "quad_eval: form has dim {}, x has dim {}",
                self.dim(),
                x.len()
            )));
        }
        let quad = (x.adjoint() * &self.a * x)[(0, 0)];
        let lin = (self.b.adjoint() * x)[(0, 0)];
        Ok(quad.re + 2.0 * lin.re + self.c)
    }

    /// Real 2n-dimensional embedding preserving evaluation exactly:
    /// `q(x) == q_real(embed(x))` for all `x`.
    pub fn real_embed(&self) -> RealQuad {
        let n = self.dim();
        let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.a[(i, j)];
                a[(i, j)] = z.re;
                a[(i, j + n)] = -z.im;
                a[(i + n, j)] = z.im;
                a[(i + n, j + n)] = z.re;
            }
        }
        let mut b = DVector::<f64>::zeros(2 * n);
        for i in 0..n {
            b[i] = self.b[i].re;
            b[i + n] = self.b[i].im;
        }
        RealQuad { a, b, c: self.c }
    }
}

/// Real quadratic `q(z) = z^T A z + 2 b^T z + c` with symmetric `A`.
#[derive(Debug, Clone)]
pub struct RealQuad {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl RealQuad {
    pub fn zeros(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(n, n),
            b: DVector::zeros(n),
            c: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.a * z)[(0, 0)] + 2.0 * self.b.dot(z) + self.c
    }

    pub fn grad(&self, z: &DVector<f64>) -> DVector<f64> {
        (&self.a + self.a.transpose()) * z + 2.0 * &self.b
    }

    /// Rescales the form by `1/s` in place.
    pub fn scale(&mut self, s: f64) {
        self.a /= s;
        self.b /= s;
        self.c /= s;
    }
}

/// Stacks `x` as `(Re x; Im x)`.
pub fn real_embed_vec(x: &CVec) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(2 * n, |i, _| if i < n { x[i].re } else { x[i - n].im })
}

/// Inverse of [`real_embed_vec`].
pub fn complex_from_embedding(z: &DVector<f64>) -> CVec {
    let n = z.len() / 2;
    CVec::from_fn(n, |i, _| C64::new(z[i], z[i + n]))
}

/// Eigen-decomposition of a Hermitian matrix: eigenvalues sorted descending,
/// columns of the returned matrix are the matching orthonormal eigenvectors.
pub fn hermitian_eigen(a: &CMat) -> Result<(DVector<f64>, CMat)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "hermitian_eigen: {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let scale = a.norm().max(1.0);
    let residual = hermitian_residual(a);
    let tol = 1e-10 * scale;
    if residual > tol {
        return Err(Error::NotHermitian { residual, tol });
    }
    let sym = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

/// Smallest eigenvalue of a Hermitian matrix (0 for an empty matrix).
pub fn min_eigenvalue(a: &CMat) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let (values, _) = hermitian_eigen(a)?;
    Ok(values[values.len() - 1])
}
