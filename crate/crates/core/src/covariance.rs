use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Covariance matrix of a whole sequence `x_0, ..., x_N` of `d`-vectors,
/// with block accessor `block(i, j) = Cov(x_i, x_j)`.
///
/// Stored symmetrized; construction rejects non-finite or indefinite input.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCovariance {
    horizon: usize,
    dim: usize,
    matrix: Matrix,
}

impl BlockCovariance {
    pub fn new(horizon: usize, dim: usize, matrix: Matrix) -> Result<Self> {
        Self::with_tolerance(horizon, dim, matrix, linalg::DEFAULT_PSD_TOL)
    }

    pub fn with_tolerance(horizon: usize, dim: usize, matrix: Matrix, rel_tol: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("state dimension must be at least 1"));
        }
        let side = (horizon + 1) * dim;
        if matrix.shape() != (side, side) {
            return Err(Error::shape(format!(
                "covariance for N={horizon}, d={dim} must be {side}x{side}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        linalg::ensure_finite(&matrix, "covariance")?;
        let (ok, sym) = linalg::psd_project_check(&matrix, rel_tol)?;
        if !ok {
            return Err(Error::Indefinite {
                what: "covariance".into(),
                min_eigenvalue: linalg::min_eigenvalue(&sym),
            });
        }
        Ok(BlockCovariance {
            horizon,
            dim,
            matrix: sym,
        })
    }

    /// Builds from a block function evaluated on `i <= j`; the lower triangle
    /// is mirrored.
    pub fn from_upper_blocks(
        horizon: usize,
        dim: usize,
        mut block: impl FnMut(usize, usize) -> Matrix,
    ) -> Result<Self> {
        let side = (horizon + 1) * dim;
        let mut m = Matrix::zeros(side, side);
        for i in 0..=horizon {
            for j in i..=horizon {
                let b = block(i, j);
                if b.shape() != (dim, dim) {
                    return Err(Error::shape(format!("block ({i},{j}) is not {dim}x{dim}")));
                }
                m.view_mut((i * dim, j * dim), (dim, dim)).copy_from(&b);
                if i != j {
                    m.view_mut((j * dim, i * dim), (dim, dim))
                        .copy_from(&b.transpose());
                }
            }
        }
        Self::new(horizon, dim, m)
    }

    /// Wraps a matrix that is PSD by construction; only symmetrizes.
    pub(crate) fn from_psd_unchecked(horizon: usize, dim: usize, matrix: Matrix) -> Self {
        debug_assert_eq!(matrix.nrows(), (horizon + 1) * dim);
        BlockCovariance {
            horizon,
            dim,
            matrix: linalg::symmetrize(&matrix),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of time steps, `N + 1`.
    pub fn len(&self) -> usize {
        self.horizon + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn block(&self, i: usize, j: usize) -> Matrix {
        let d = self.dim;
        self.matrix.view((i * d, j * d), (d, d)).into_owned()
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.norm()
    }

    /// `1 + ||C||_F`, the scale that residual thresholds are relative to.
    pub fn residual_scale(&self) -> f64 {
        1.0 + self.frobenius()
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::Precondition(format!("scale factor must be positive, got {alpha}")));
        }
        Ok(BlockCovariance {
            horizon: self.horizon,
            dim: self.dim,
            matrix: &self.matrix * alpha,
        })
    }

    /// Joint covariance of `(x_{rows[0]}, ...)` against `(x_{cols[0]}, ...)`.
    pub fn joint(&self, rows: &[usize], cols: &[usize]) -> Matrix {
        let d = self.dim;
        let mut out = Matrix::zeros(rows.len() * d, cols.len() * d);
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.view_mut((a * d, b * d), (d, d))
                    .copy_from(&self.matrix.view((i * d, j * d), (d, d)));
            }
        }
        out
    }

    /// Covariance of the augmented sequence `y_t = [x_t; x_anchor]` over `times`.
    pub fn augmented(&self, times: &[usize], anchor: usize) -> BlockCovariance {
        let d = self.dim;
        let dd = 2 * d;
        let n = times.len();
        let mut m = Matrix::zeros(n * dd, n * dd);
        for (a, &i) in times.iter().enumerate() {
            for (b, &j) in times.iter().enumerate() {
                m.view_mut((a * dd, b * dd), (dd, dd))
                    .copy_from(&self.joint(&[i, anchor], &[j, anchor]));
            }
        }
        BlockCovariance {
            horizon: n.saturating_sub(1),
            dim: dd,
            matrix: m,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_shape_and_indefinite() {
        assert!(matches!(
            BlockCovariance::new(1, 1, Matrix::identity(3, 3)),
            Err(Error::Shape(_))
        ));
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match BlockCovariance::new(1, 1, m) {
            Err(Error::Indefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
        let mut nan = Matrix::identity(2, 2);
        nan[(0, 1)] = f64::NAN;
        assert!(matches!(BlockCovariance::new(1, 1, nan), Err(Error::NonFinite(_))));
    }

    #[test]
    fn block_access_and_symmetry() {
        let c = BlockCovariance::from_upper_blocks(2, 1, |i, j| {
            Matrix::from_element(1, 1, if i == j { 2.0 } else { 0.5 })
        })
        .unwrap();
        assert_eq!(c.block(0, 2), c.block(2, 0).transpose());
        assert_eq!(c.block(1, 1)[(0, 0)], 2.0);
        assert_eq!(c.joint(&[0, 2], &[1]).shape(), (2, 1));
    }

    #[test]
    fn augmented_layout() {
        let c = BlockCovariance::new(2, 1, Matrix::identity(3, 3)).unwrap();
        let y = c.augmented(&[0, 1], 2);
        assert_eq!(y.dim(), 2);
        assert_eq!(y.horizon(), 1);
        // Cov(y_0, y_1) = [[C01, C02], [C21, C22]]
        assert_eq!(y.block(0, 1), Matrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
    }
}
