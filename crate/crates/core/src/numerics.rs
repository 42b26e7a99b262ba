//! Dense complex-matrix kernels shared by the rest of the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Tolerances are relative to
//! `max(1, ‖M‖_F)` unless a function says otherwise.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Dense complex matrix.
pub type CMat = DMatrix<C64>;

/// Dense complex column vector.
pub type CVec = DVector<C64>;

/// Relative tolerance for the Hermitian symmetry check.
pub const HERMITIAN_TOL: f64 = 1e-9;

/// Relative tolerance below zero that is still treated as a zero eigenvalue.
pub const PSD_CLAMP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (‖M − M†‖_F = {residual:e})")]
    NotHermitian { residual: f64 },
    #[error("matrix has non-finite entries")]
    NotFinite,
    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is not square: {0:?}")]
    NotSquare((usize, usize)),
}

/// Eigendecomposition `M = V Λ V†` of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `eigenvalues`.
    pub eigenvectors: CMat,
}

impl HermitianEig {
    /// Rebuild `V Λ V†`.
    pub fn reconstruct(&self) -> CMat {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (mut col, &lam) in scaled.column_iter_mut().zip(&self.eigenvalues) {
            col *= C64::from(lam);
        }
        &scaled * v.adjoint()
    }
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `max(1, ‖M‖_F)`, the scale all relative tolerances are measured against.
pub fn tol_scale(m: &CMat) -> f64 {
    frobenius(m).max(1.0)
}

pub fn is_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn ensure_finite(m: &CMat) -> Result<(), NumericsError> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(NumericsError::NotFinite)
    }
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Build a complex matrix from real row-major entries.
pub fn from_real_rows(rows: usize, cols: usize, entries: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)))
}

/// Real diagonal matrix lifted to complex.
pub fn real_diag(entries: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(
        entries.len(),
        entries.iter().map(|&x| C64::new(x, 0.0)),
    ))
}

/// `‖M − M†‖_F`.
pub fn hermitian_residual(m: &CMat) -> f64 {
    frobenius(&(m - m.adjoint()))
}

fn ensure_square(m: &CMat) -> Result<(), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare(m.shape()));
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues in ascending order.
pub fn hermitian_eig(m: &CMat) -> Result<HermitianEig, NumericsError> {
    ensure_finite(m)?;
    ensure_square(m)?;
    let residual = hermitian_residual(m);
    if residual >= HERMITIAN_TOL * tol_scale(m) {
        return Err(NumericsError::NotHermitian { residual });
    }
    let dim = m.nrows();
    if dim == 0 {
        return Ok(HermitianEig {
            eigenvalues: Vec::new(),
            eigenvectors: CMat::zeros(0, 0),
        });
    }
    // Feed the exactly Hermitian part so the solver never sees the asymmetric noise.
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = CMat::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
///
/// Returns real eigenvectors as columns.
pub fn real_symmetric_eig(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare(m.shape()));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(NumericsError::NotFinite);
    }
    let scale = m.norm().max(1.0);
    let residual = (m - m.transpose()).norm();
    if residual >= HERMITIAN_TOL * scale {
        return Err(NumericsError::NotHermitian { residual });
    }
    let dim = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[−1e-10·scale, 0)` are clamped to zero; anything lower is
/// rejected.
pub fn psd_sqrt(m: &CMat) -> Result<CMat, NumericsError> {
    let scale = tol_scale(m);
    let eig = hermitian_eig(m)?;
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &lam in &eig.eigenvalues {
        if lam < -PSD_CLAMP_TOL * scale {
            return Err(NumericsError::NotPsd {
                min_eigenvalue: lam,
            });
        }
        roots.push(lam.max(0.0).sqrt());
    }
    let root = HermitianEig {
        eigenvalues: roots,
        eigenvectors: eig.eigenvectors,
    }
    .reconstruct();
    // Symmetrize away rounding so downstream Hermitian checks see an exact adjoint.
    Ok((&root + root.adjoint()) * C64::new(0.5, 0.0))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> Result<f64, NumericsError> {
    let eig = hermitian_eig(m)?;
    Ok(eig.eigenvalues.first().copied().unwrap_or(0.0))
}

/// Hilbert–Schmidt inner product `tr(A†B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> Result<C64, NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::ShapeMismatch {
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(hs_inner_slices(a.as_slice(), b.as_slice()))
}

/// `Σ conj(a_i) b_i` over two equally long slices.
pub(crate) fn hs_inner_slices(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Kronecker product `A ⊗ B`.
pub fn dense_kron(a: &CMat, b: &CMat) -> Result<CMat, NumericsError> {
    ensure_finite(a)?;
    ensure_finite(b)?;
    Ok(a.kronecker(b))
}

/// Orthonormalize the given vectors in place by modified Gram–Schmidt.
///
/// Vectors whose residual norm falls below `drop_tol` are discarded. Returns
/// the surviving orthonormal set.
pub fn gram_schmidt(vectors: Vec<CVec>, drop_tol: f64) -> Vec<CVec> {
    let mut basis: Vec<CVec> = Vec::with_capacity(vectors.len());
    for mut v in vectors {
        // two passes keep the loss of orthogonality at roundoff level
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > drop_tol {
            basis.push(v / C64::from(norm));
        }
    }
    basis
}
