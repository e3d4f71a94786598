//! Markov-plus-independent-vector structure of CM_c covariances:
//! `x_k = y_k + Γ_k x_c` with `[y_k]` Markov and uncorrelated with `x_c`,
//! and the matching covariance construction `C = B + Γ D Γ^T`.

use crate::characterize::{self, ClassificationReport, DEFAULT_REL_TOL};
use crate::covariance::BlockCovariance;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, DEFAULT_PINV_TOL, DEFAULT_PSD_TOL};
use crate::model::Direction;

/// Builds `C = B + Γ D Γ^T` on the horizon `N = b1.len()`.
///
/// For `Last`, `B = diag(B1, 0)` and `Γ = [S; I]`; for `First`,
/// `B = diag(0, B1)` and `Γ = [I; S]`. `b1` must be Markov, `s` is `N d x d`
/// and `dmat` is a `d x d` PSD matrix.
pub fn build_cm_covariance(
    b1: &BlockCovariance,
    s: &Matrix,
    dmat: &Matrix,
    direction: Direction,
) -> Result<BlockCovariance> {
    let d = b1.dim();
    let blocks = b1.len();
    let horizon = blocks;
    if s.shape() != (blocks * d, d) {
        return Err(Error::shape(format!(
            "S must be {}x{d}, got {}x{}",
            blocks * d,
            s.nrows(),
            s.ncols()
        )));
    }
    if dmat.shape() != (d, d) {
        return Err(Error::shape(format!("D must be {d}x{d}, got {}x{}", dmat.nrows(), dmat.ncols())));
    }
    linalg::ensure_finite(s, "S")?;
    linalg::ensure_finite(dmat, "D")?;
    let (ok, dsym) = linalg::psd_project_check(dmat, DEFAULT_PSD_TOL)?;
    if !ok {
        return Err(Error::Indefinite {
            what: "D".into(),
            min_eigenvalue: linalg::min_eigenvalue(&dsym),
        });
    }
    let markov = characterize::is_markov(b1, DEFAULT_REL_TOL);
    if !markov.passed {
        return Err(Error::Characterization(Box::new(markov)));
    }

    let side = (horizon + 1) * d;
    let (b1_offset, s_offset, anchor_offset) = match direction {
        Direction::Last => (0, 0, horizon * d),
        Direction::First => (d, d, 0),
    };
    let mut gamma = Matrix::zeros(side, d);
    gamma.view_mut((s_offset, 0), (blocks * d, d)).copy_from(s);
    gamma.view_mut((anchor_offset, 0), (d, d)).fill_with_identity();

    let mut c = &gamma * &dsym * gamma.transpose();
    let mut sub = c.view_mut((b1_offset, b1_offset), (blocks * d, blocks * d));
    sub += b1.matrix();
    BlockCovariance::new(horizon, d, c)
}

/// Canonical decoupling gains `Γ_k = C_{k,c} C_c^+` for `k in [0, N] \ {c}`,
/// in time order.
pub fn canonical_gamma(c: &BlockCovariance, direction: Direction) -> Vec<Matrix> {
    let n = c.horizon();
    let anchor = direction.anchor(n);
    let cc_plus = linalg::mp_inverse(&c.block(anchor, anchor), DEFAULT_PINV_TOL);
    (0..=n)
        .filter(|&k| k != anchor)
        .map(|k| c.block(k, anchor) * &cc_plus)
        .collect()
}

#[derive(Debug, Clone)]
pub struct MarkovPartReport {
    /// Largest `||Cov(y_k, x_c)||_F`.
    pub cross_residual: f64,
    pub cross_threshold: f64,
    /// Markov check of `[y_k] \ {y_c}`.
    pub markov: ClassificationReport,
    pub passed: bool,
}

/// Checks that `y_k = x_k - Γ_k x_c`, `k != c`, is Markov and uncorrelated
/// with `x_c`. `gamma` lists `Γ_k` in time order with `k = c` skipped.
pub fn markov_part_report(
    c: &BlockCovariance,
    gamma: &[Matrix],
    direction: Direction,
    rel_tol: f64,
) -> Result<MarkovPartReport> {
    let n = c.horizon();
    let d = c.dim();
    if gamma.len() != n {
        return Err(Error::shape(format!("expected {n} gain blocks, got {}", gamma.len())));
    }
    let anchor = direction.anchor(n);
    let times: Vec<usize> = (0..=n).filter(|&k| k != anchor).collect();
    let mut lift = Matrix::zeros(n * d, (n + 1) * d);
    for (a, (&k, g)) in times.iter().zip(gamma).enumerate() {
        if g.shape() != (d, d) {
            return Err(Error::shape(format!("Γ_{k} must be {d}x{d}")));
        }
        lift.view_mut((a * d, k * d), (d, d)).fill_with_identity();
        lift.view_mut((a * d, anchor * d), (d, d)).copy_from(&(-g));
    }
    let cross = &lift * c.matrix().columns(anchor * d, d);
    let cross_residual = (0..n)
        .map(|a| cross.rows(a * d, d).norm())
        .fold(0.0, f64::max);
    let gamma_scale = gamma.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let cross_threshold = rel_tol * c.residual_scale() * (1.0 + gamma_scale);

    let y_cov = BlockCovariance::from_psd_unchecked(
        n - 1,
        d,
        &lift * c.matrix() * lift.transpose(),
    );
    let mut markov = characterize::is_markov(&y_cov, rel_tol);
    // report original time indices
    markov.worst_indices = markov.worst_indices.iter().map(|&p| times[p]).collect();
    let passed = markov.passed && cross_residual <= cross_threshold;
    Ok(MarkovPartReport {
        cross_residual,
        cross_threshold,
        markov,
        passed,
    })
}

pub fn markov_part_check(
    c: &BlockCovariance,
    gamma: &[Matrix],
    direction: Direction,
    rel_tol: f64,
) -> Result<bool> {
    markov_part_report(c, gamma, direction, rel_tol).map(|r| r.passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ar1_b1(blocks: usize, a: f64) -> BlockCovariance {
        BlockCovariance::from_upper_blocks(blocks - 1, 1, |i, j| {
            Matrix::from_element(1, 1, a.powi((j - i) as i32))
        })
        .unwrap()
    }

    #[test]
    fn identity_build() {
        let b1 = BlockCovariance::new(2, 2, Matrix::identity(6, 6)).unwrap();
        let c = build_cm_covariance(&b1, &Matrix::zeros(6, 2), &Matrix::identity(2, 2), Direction::Last)
            .unwrap();
        assert_eq!(*c.matrix(), Matrix::identity(8, 8));
        assert!(characterize::is_cm(&c, Direction::Last, DEFAULT_REL_TOL).passed);
    }

    #[test]
    fn independent_anchor_is_block_diagonal() {
        let b1 = ar1_b1(4, 0.6);
        let dmat = Matrix::from_element(1, 1, 2.5);
        for dir in [Direction::Last, Direction::First] {
            let c = build_cm_covariance(&b1, &Matrix::zeros(4, 1), &dmat, dir).unwrap();
            let (inner, anchor) = match dir {
                Direction::Last => (c.joint(&[0, 1, 2, 3], &[0, 1, 2, 3]), 4),
                Direction::First => (c.joint(&[1, 2, 3, 4], &[1, 2, 3, 4]), 0),
            };
            assert_abs_diff_eq!(inner, b1.matrix().clone(), epsilon = 0.0);
            assert_eq!(c.block(anchor, anchor)[(0, 0)], 2.5);
            assert!(characterize::is_cm(&c, dir, DEFAULT_REL_TOL).passed);
        }
    }

    #[test]
    fn rejects_non_markov_and_bad_shapes() {
        let m = Matrix::from_row_slice(3, 3, &[1.0, 0.0, 0.9, 0.0, 1.0, 0.0, 0.9, 0.0, 1.0]);
        let b1 = BlockCovariance::new(2, 1, m).unwrap();
        let err = build_cm_covariance(&b1, &Matrix::zeros(3, 1), &Matrix::identity(1, 1), Direction::Last);
        assert!(matches!(err, Err(Error::Characterization(_))));

        let b1 = ar1_b1(3, 0.5);
        assert!(build_cm_covariance(&b1, &Matrix::zeros(2, 1), &Matrix::identity(1, 1), Direction::Last).is_err());
        let neg = Matrix::from_element(1, 1, -1.0);
        assert!(matches!(
            build_cm_covariance(&b1, &Matrix::zeros(3, 1), &neg, Direction::Last),
            Err(Error::Indefinite { .. })
        ));
    }

    #[test]
    fn gamma_zero_on_block_diagonal_passes() {
        let b1 = ar1_b1(4, 0.6);
        let c = build_cm_covariance(&b1, &Matrix::zeros(4, 1), &Matrix::identity(1, 1), Direction::Last).unwrap();
        let gamma = vec![Matrix::zeros(1, 1); 4];
        assert!(markov_part_check(&c, &gamma, Direction::Last, DEFAULT_REL_TOL).unwrap());
    }

    #[test]
    fn gamma_zero_on_coupled_fails_cross() {
        let b1 = ar1_b1(4, 0.6);
        let s = Matrix::from_column_slice(4, 1, &[0.5, -1.0, 0.3, 2.0]);
        let c = build_cm_covariance(&b1, &s, &Matrix::identity(1, 1), Direction::Last).unwrap();
        let gamma = vec![Matrix::zeros(1, 1); 4];
        let r = markov_part_report(&c, &gamma, Direction::Last, DEFAULT_REL_TOL).unwrap();
        assert!(!r.passed);
        assert!(r.cross_residual > 1.0);

        let canon = canonical_gamma(&c, Direction::Last);
        assert_abs_diff_eq!(canon[1][(0, 0)], -1.0, epsilon = 1e-14);
        assert!(markov_part_check(&c, &canon, Direction::Last, DEFAULT_REL_TOL).unwrap());
    }
}
