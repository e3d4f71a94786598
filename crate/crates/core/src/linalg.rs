//! Dense numerical kernel: Moore-Penrose inverse, PSD validation and a
//! rank-revealing symmetric factor used to sample singular Gaussians.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. Covariance-like inputs
//! are symmetrized before any eigen work. Singular systems come from
//! symmetric eigendecompositions.

use nalgebra::{DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Default relative singular-value cutoff for [`mp_inverse`].
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Relative tolerance used when validating covariance inputs as PSD.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// Eigenpairs of `a` if it is exactly symmetric, otherwise of the embedding
/// `[[0, A], [A^T, 0]]`, whose eigenvalues are `±sigma_i` padded with zeros.
fn spectrum(a: &Matrix) -> (SymmetricEigen<f64, Dyn>, bool) {
    if a.is_square() && *a == a.transpose() {
        return (a.clone().symmetric_eigen(), true);
    }
    let (m, n) = a.shape();
    let mut h = Matrix::zeros(m + n, m + n);
    h.view_mut((0, m), (m, n)).copy_from(a);
    h.view_mut((m, 0), (n, m)).copy_from(&a.transpose());
    (h.symmetric_eigen(), false)
}

/// Moore-Penrose inverse.
///
/// Singular values at or below `rel_tol * sigma_max` are treated as zero, so
/// the zero matrix maps to the zero matrix of transposed shape. The singular
/// system comes from a symmetric eigendecomposition.
pub fn mp_inverse(a: &Matrix, rel_tol: f64) -> Matrix {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Matrix::zeros(cols, rows);
    }
    let (eig, symmetric) = spectrum(a);
    let sigma_max = eig.eigenvalues.amax();
    if sigma_max.is_nan() || sigma_max <= 0.0 {
        return Matrix::zeros(cols, rows);
    }
    let cutoff = rel_tol * sigma_max;
    let mut out = Matrix::zeros(cols, rows);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= cutoff {
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        if symmetric {
            out.ger(1.0 / lambda, &v, &v, 1.0);
        } else {
            // lower-left block of the embedding's inverse
            out.ger(1.0 / lambda, &v.rows(rows, cols), &v.rows(0, rows), 1.0);
        }
    }
    out
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

fn ensure_square(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::shape(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_finite(a: &Matrix, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn sym_eigen(sym: &Matrix) -> SymmetricEigen<f64, Dyn> {
    sym.clone().symmetric_eigen()
}

fn psd_threshold(eigenvalues: &[f64], rel_tol: f64) -> f64 {
    let max_abs = eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    -rel_tol * max_abs.max(1.0)
}

/// Smallest eigenvalue of the symmetrized input, `+inf` for an empty matrix.
pub fn min_eigenvalue(a: &Matrix) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    sym_eigen(&symmetrize(a)).eigenvalues.min()
}

/// Returns `(is_psd, (A + A^T) / 2)`.
///
/// `is_psd` holds iff every eigenvalue of the symmetrized matrix is at least
/// `-rel_tol * max(|lambda|_max, 1)`.
pub fn psd_project_check(a: &Matrix, rel_tol: f64) -> Result<(bool, Matrix)> {
    ensure_square(a, "matrix")?;
    let sym = symmetrize(a);
    if sym.is_empty() {
        return Ok((true, sym));
    }
    let eig = sym_eigen(&sym);
    let vals = eig.eigenvalues.as_slice();
    let ok = vals.iter().all(|&v| v >= psd_threshold(vals, rel_tol));
    Ok((ok, sym))
}

/// Rank-revealing factor `base` with `base * base^T ~= (A + A^T) / 2`.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    pub base: Matrix,
    pub tolerance_used: f64,
}

impl PsdFactor {
    pub fn rank(&self) -> usize {
        self.base.ncols()
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.base * self.base.transpose()
    }
}

/// Eigendecomposition-based factor of a PSD matrix.
///
/// Eigenvalues at or below `rel_tol * lambda_max` are dropped, so the column
/// count is the numerical rank (zero for the zero matrix). Indefinite input is
/// rejected with the most negative eigenvalue.
pub fn psd_factor(a: &Matrix, rel_tol: f64) -> Result<PsdFactor> {
    ensure_square(a, "matrix")?;
    let n = a.nrows();
    let sym = symmetrize(a);
    if n == 0 {
        return Ok(PsdFactor {
            base: Matrix::zeros(0, 0),
            tolerance_used: rel_tol,
        });
    }
    let eig = sym_eigen(&sym);
    let vals = eig.eigenvalues.as_slice();
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min < psd_threshold(vals, rel_tol) {
        return Err(Error::Indefinite {
            what: "matrix".into(),
            min_eigenvalue: min,
        });
    }
    let lambda_max = vals.iter().copied().fold(0.0_f64, f64::max);
    let cutoff = rel_tol * lambda_max;
    let keep: Vec<usize> = (0..n)
        .filter(|&i| lambda_max > 0.0 && vals[i] > cutoff)
        .collect();
    let mut base = Matrix::zeros(n, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let scale = vals[i].sqrt();
        base.set_column(col, &(eig.eigenvectors.column(i) * scale));
    }
    Ok(PsdFactor {
        base,
        tolerance_used: rel_tol,
    })
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &Matrix, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let (eig, symmetric) = spectrum(a);
    let smax = eig.eigenvalues.amax();
    if smax.is_nan() || smax <= 0.0 {
        return 0;
    }
    let cutoff = rel_tol * smax;
    if symmetric {
        eig.eigenvalues.iter().filter(|l| l.abs() > cutoff).count()
    } else {
        eig.eigenvalues.iter().filter(|&&l| l > cutoff).count()
    }
}

/// Symmetrizes and clips small negative eigenvalues to zero.
///
/// Eigenvalues below `-abs_tol` are an error; the matrix is only rebuilt when
/// some eigenvalue is actually negative.
pub(crate) fn clip_psd(a: &Matrix, abs_tol: f64, what: &str) -> Result<Matrix> {
    let sym = symmetrize(a);
    if sym.is_empty() {
        return Ok(sym);
    }
    let eig = sym_eigen(&sym);
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(sym);
    }
    if min < -abs_tol {
        return Err(Error::Indefinite {
            what: what.to_string(),
            min_eigenvalue: min,
        });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let v = &eig.eigenvectors;
    Ok(symmetrize(
        &(v * Matrix::from_diagonal(&clipped) * v.transpose()),
    ))
}

pub fn frobenius(a: &Matrix) -> f64 {
    a.norm()
}

pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
