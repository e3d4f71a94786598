//! The CM_c dynamic model
//!
//! ```text
//! x_k = G_{k,k-1} x_{k-1} + G_{k,c} x_c + e_k,   k in [1, N] \ {c}
//! ```
//!
//! with white zero-mean Gaussian `e_k`, `Cov(e_k) = G_k`, and boundary
//! condition `x_0 = e_0` (c = 0) or `x_N = e_N, x_0 = G_{0,N} x_N + e_0`
//! (c = N). Any noise covariance may be singular, including zero.

use serde::{Deserialize, Serialize};

use crate::characterize::{self, ClassificationReport};
use crate::covariance::BlockCovariance;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, DEFAULT_PINV_TOL, DEFAULT_PSD_TOL};
use crate::trajectory::{self, TrajectoryEnsemble};

/// Default tolerance for the singularity diagnostics.
pub const DEFAULT_SINGULARITY_TOL: f64 = 1e-10;

/// Time at which a CM sequence is conditioned: the first or last index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    First,
    Last,
}

impl Direction {
    /// Conditioning time `c` on the horizon `[0, n]`.
    pub fn anchor(self, n: usize) -> usize {
        match self {
            Direction::First => 0,
            Direction::Last => n,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::First => "first",
            Direction::Last => "last",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "first" | "f" | "0" => Ok(Direction::First),
            "last" | "l" | "n" => Ok(Direction::Last),
            other => Err(Error::Parse(format!("unknown direction {other:?} (expected first|last)"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of a CM_c model.
///
/// Blocks are indexed by time. `transition(k)` is `G_{k,k-1}` and
/// `coupling(k)` is `G_{k,c}`; for `c = N` the boundary gain `G_{0,N}` is
/// stored as `coupling(0)`. Unset gains are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CmModel {
    horizon: usize,
    dim: usize,
    direction: Direction,
    transition: Vec<Matrix>,
    coupling: Vec<Matrix>,
    noise_cov: Vec<Matrix>,
}

impl CmModel {
    /// Model with every gain and every noise covariance zero.
    pub fn zeros(horizon: usize, dim: usize, direction: Direction) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::shape("horizon N must be at least 1"));
        }
        if dim < 1 {
            return Err(Error::shape("state dimension d must be at least 1"));
        }
        let z = Matrix::zeros(dim, dim);
        Ok(CmModel {
            horizon,
            dim,
            direction,
            transition: vec![z.clone(); horizon + 1],
            coupling: vec![z.clone(); horizon + 1],
            noise_cov: vec![z; horizon + 1],
        })
    }

    /// Zero-gain model with the given noise covariances (a white sequence).
    pub fn white(horizon: usize, dim: usize, direction: Direction, noise: &[Matrix]) -> Result<Self> {
        let mut m = Self::zeros(horizon, dim, direction)?;
        if noise.len() != horizon + 1 {
            return Err(Error::shape(format!(
                "expected {} noise covariances, got {}",
                horizon + 1,
                noise.len()
            )));
        }
        for (k, g) in noise.iter().enumerate() {
            m.set_noise_cov(k, g)?;
        }
        Ok(m)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn anchor(&self) -> usize {
        self.direction.anchor(self.horizon)
    }

    /// Times `k` that carry a transition gain `G_{k,k-1}`.
    pub fn transition_times(&self) -> std::ops::RangeInclusive<usize> {
        match self.direction {
            Direction::First => 1..=self.horizon,
            Direction::Last => 1..=self.horizon - 1,
        }
    }

    /// Times `k` that carry a coupling gain `G_{k,c}` (including `G_{0,N}`).
    pub fn coupling_times(&self) -> std::ops::RangeInclusive<usize> {
        match self.direction {
            Direction::First => 1..=self.horizon,
            Direction::Last => 0..=self.horizon - 1,
        }
    }

    pub fn transition(&self, k: usize) -> Option<&Matrix> {
        self.transition_times().contains(&k).then(|| &self.transition[k])
    }

    pub fn coupling(&self, k: usize) -> Option<&Matrix> {
        self.coupling_times().contains(&k).then(|| &self.coupling[k])
    }

    pub fn noise_cov(&self, k: usize) -> Option<&Matrix> {
        self.noise_cov.get(k)
    }

    fn check_gain(&self, what: &str, k: usize, g: &Matrix) -> Result<()> {
        if g.shape() != (self.dim, self.dim) {
            return Err(Error::shape(format!(
                "{what}[{k}] must be {0}x{0}, got {1}x{2}",
                self.dim,
                g.nrows(),
                g.ncols()
            )));
        }
        linalg::ensure_finite(g, &format!("{what}[{k}]"))
    }

    pub fn set_transition(&mut self, k: usize, g: &Matrix) -> Result<()> {
        if !self.transition_times().contains(&k) {
            return Err(Error::shape(format!(
                "no transition gain at time {k} for N={}, c={}",
                self.horizon, self.direction
            )));
        }
        self.check_gain("transition", k, g)?;
        self.transition[k] = g.clone();
        Ok(())
    }

    pub fn set_coupling(&mut self, k: usize, g: &Matrix) -> Result<()> {
        if !self.coupling_times().contains(&k) {
            return Err(Error::shape(format!(
                "no coupling gain at time {k} for N={}, c={}",
                self.horizon, self.direction
            )));
        }
        self.check_gain("coupling", k, g)?;
        self.coupling[k] = g.clone();
        Ok(())
    }

    /// Sets `Cov(e_k)`; the block is symmetrized and must be PSD.
    pub fn set_noise_cov(&mut self, k: usize, g: &Matrix) -> Result<()> {
        if k > self.horizon {
            return Err(Error::shape(format!("noise time {k} beyond horizon {}", self.horizon)));
        }
        self.check_gain("noise_cov", k, g)?;
        let (ok, sym) = linalg::psd_project_check(g, DEFAULT_PSD_TOL)?;
        if !ok {
            return Err(Error::Indefinite {
                what: format!("noise_cov[{k}]"),
                min_eigenvalue: linalg::min_eigenvalue(&sym),
            });
        }
        self.noise_cov[k] = sym;
        Ok(())
    }

    /// Installs the origin-first boundary `x_0 = e_0`, `x_N = G_{N,0} x_0 + e_N`
    /// by converting it to the canonical `x_N = e_N`, `x_0 = G_{0,N} x_N + e_0`
    /// with the same joint law of `(x_0, x_N)`. Only valid for `c = N`.
    pub fn set_origin_boundary(
        &mut self,
        gain_n0: &Matrix,
        noise_0: &Matrix,
        noise_n: &Matrix,
    ) -> Result<()> {
        if self.direction != Direction::Last {
            return Err(Error::Precondition(
                "origin boundary form only applies to last-anchored models".into(),
            ));
        }
        self.check_gain("boundary gain", 0, gain_n0)?;
        // validate the two noise blocks through the regular setter path
        let mut probe = self.clone();
        probe.set_noise_cov(0, noise_0)?;
        probe.set_noise_cov(self.horizon, noise_n)?;
        let q0 = &probe.noise_cov[0];
        let qn = &probe.noise_cov[self.horizon];

        let c0 = q0.clone();
        let cn0 = gain_n0 * q0;
        let cn = &cn0 * gain_n0.transpose() + qn;
        let cn_plus = linalg::mp_inverse(&linalg::symmetrize(&cn), DEFAULT_PINV_TOL);
        let g0n = cn0.transpose() * &cn_plus;
        let resid = &c0 - &g0n * &cn0;
        let scale = 1.0 + c0.norm() + cn.norm();
        let e0 = linalg::clip_psd(&resid, DEFAULT_PSD_TOL * scale, "converted noise_cov[0]")?;

        self.coupling[0] = g0n;
        self.noise_cov[0] = e0;
        self.noise_cov[self.horizon] = linalg::symmetrize(&cn);
        Ok(())
    }

    /// Evaluation order of the recursion: the conditioning state first.
    pub(crate) fn order(&self) -> Vec<usize> {
        match self.direction {
            Direction::First => (0..=self.horizon).collect(),
            Direction::Last => std::iter::once(self.horizon)
                .chain(0..self.horizon)
                .collect(),
        }
    }

    /// `(parent time, gain)` pairs feeding `x_k`.
    pub(crate) fn parents(&self, k: usize) -> Vec<(usize, &Matrix)> {
        let n = self.horizon;
        match self.direction {
            Direction::First if k == 0 => vec![],
            Direction::First => vec![(k - 1, &self.transition[k]), (0, &self.coupling[k])],
            Direction::Last if k == n => vec![],
            Direction::Last if k == 0 => vec![(n, &self.coupling[0])],
            Direction::Last => vec![(k - 1, &self.transition[k]), (n, &self.coupling[k])],
        }
    }

    /// The square block matrix `𝒢` with `𝒢 x = e`: identity diagonal blocks
    /// and the negated gains at their parent columns.
    pub fn assemble_g(&self) -> Matrix {
        let d = self.dim;
        let side = (self.horizon + 1) * d;
        let mut g = Matrix::identity(side, side);
        for k in 0..=self.horizon {
            for (p, gain) in self.parents(k) {
                let mut blk = g.view_mut((k * d, p * d), (d, d));
                blk -= gain;
            }
        }
        g
    }

    /// `𝒢^{-1}` by forward block substitution in recursion order.
    pub fn g_inverse(&self) -> Matrix {
        let d = self.dim;
        let side = (self.horizon + 1) * d;
        let mut t = Matrix::zeros(side, side);
        for k in self.order() {
            let mut row = Matrix::zeros(d, side);
            row.view_mut((0, k * d), (d, d)).fill_with_identity();
            for (p, gain) in self.parents(k) {
                row += gain * t.rows(p * d, d);
            }
            t.rows_mut(k * d, d).copy_from(&row);
        }
        t
    }

    /// `C = 𝒢^{-1} diag(G_0, ..., G_N) 𝒢^{-T}`.
    pub fn covariance_of(&self) -> BlockCovariance {
        let d = self.dim;
        let t = self.g_inverse();
        let mut tg = t.clone();
        for (m, noise) in self.noise_cov.iter().enumerate() {
            let cols = t.columns(m * d, d) * noise;
            tg.columns_mut(m * d, d).copy_from(&cols);
        }
        let c = tg * t.transpose();
        BlockCovariance::from_psd_unchecked(self.horizon, d, c)
    }

    /// Draws `count` paths; path `p` uses its own stream of the seeded
    /// generator, so results do not depend on thread scheduling.
    pub fn sample(&self, count: usize, seed: u64) -> Result<TrajectoryEnsemble> {
        trajectory::sample(self, count, seed)
    }

    /// Per-time singularity flags for `k in [1, N-1]` of a last-anchored model.
    ///
    /// `noise_degenerate` marks `Cov(e_k) ~ 0`, i.e. `x_k` is an a.s. linear
    /// function of `(x_{k-1}, x_N)`. `state_as_zero` additionally requires the
    /// conditional-mean term `C^{xy}_{k,k-1} (C^y_{k-1})^+ y_{k-1}` to have
    /// zero covariance. Both use `tol * (1 + ||P||_F)` as the zero threshold.
    pub fn singularity_report(&self, tol: f64) -> Result<SingularityReport> {
        if self.direction != Direction::Last {
            return Err(Error::Precondition(
                "singularity report is defined for last-anchored models".into(),
            ));
        }
        let p = self.covariance_of();
        let n = self.horizon;
        let zero = tol * p.residual_scale();
        let entries = (1..n)
            .map(|k| {
                let noise = &self.noise_cov[k];
                let noise_degenerate = noise.norm() <= zero;
                let y = [k - 1, n];
                let cross = p.joint(&[k], &y);
                let explained = &cross
                    * linalg::mp_inverse(&p.joint(&y, &y), DEFAULT_PINV_TOL)
                    * cross.transpose();
                SingularityEntry {
                    time: k,
                    noise_degenerate,
                    state_as_zero: noise_degenerate && explained.norm() <= zero,
                    rank_noise: linalg::numerical_rank(noise, DEFAULT_PINV_TOL),
                }
            })
            .collect();
        Ok(SingularityReport { entries })
    }

    /// For each `k in [0, N-2]`, whether `[[P_k, P_{k,N}], [P_{N,k}, P_N]]` is
    /// nonsingular (smallest eigenvalue above `tol` times the largest).
    pub fn boundary_nonsingular(&self, tol: f64) -> Result<Vec<bool>> {
        if self.direction != Direction::Last {
            return Err(Error::Precondition(
                "boundary nonsingularity is defined for last-anchored models".into(),
            ));
        }
        let p = self.covariance_of();
        let n = self.horizon;
        Ok((0..n.saturating_sub(1))
            .map(|k| {
                let m = p.joint(&[k, n], &[k, n]);
                let eig = m.symmetric_eigenvalues();
                let max = eig.max();
                max > 0.0 && eig.min() > tol * max
            })
            .collect())
    }

    /// Checks whether the implied covariance `P` is reciprocal, i.e. whether
    /// this is a reciprocal CM_c model.
    pub fn is_reciprocal_model(&self, rel_tol: f64) -> ClassificationReport {
        characterize::reciprocal_model_report(&self.covariance_of(), self.direction, rel_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityEntry {
    pub time: usize,
    pub noise_degenerate: bool,
    pub state_as_zero: bool,
    pub rank_noise: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub entries: Vec<SingularityEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m2(v: [f64; 4]) -> Matrix {
        Matrix::from_row_slice(2, 2, &v)
    }

    #[test]
    fn g_trivial_cases() {
        let m = CmModel::zeros(1, 2, Direction::Last).unwrap();
        assert_eq!(m.assemble_g(), Matrix::identity(4, 4));
        let m = CmModel::zeros(2, 2, Direction::Last).unwrap();
        assert_eq!(m.assemble_g(), Matrix::identity(6, 6));
    }

    #[test]
    fn g_last_pattern() {
        let a = m2([1.0, 2.0, 3.0, 4.0]);
        let b = m2([5.0, 6.0, 7.0, 8.0]);
        let d = m2([9.0, 10.0, 11.0, 12.0]);
        let mut m = CmModel::zeros(2, 2, Direction::Last).unwrap();
        m.set_transition(1, &a).unwrap();
        m.set_coupling(1, &b).unwrap();
        m.set_coupling(0, &d).unwrap();
        let g = m.assemble_g();
        let i = Matrix::identity(2, 2);
        let z = Matrix::zeros(2, 2);
        let blk = |r: usize, c: usize| g.view((2 * r, 2 * c), (2, 2)).into_owned();
        assert_eq!(blk(0, 0), i);
        assert_eq!(blk(0, 1), z);
        assert_eq!(blk(0, 2), -&d);
        assert_eq!(blk(1, 0), -&a);
        assert_eq!(blk(1, 1), i);
        assert_eq!(blk(1, 2), -&b);
        assert_eq!(blk(2, 0), z);
        assert_eq!(blk(2, 1), z);
        assert_eq!(blk(2, 2), i);
    }

    #[test]
    fn g_first_sums_both_gains_on_x0() {
        let mut m = CmModel::zeros(3, 1, Direction::First).unwrap();
        let g = Matrix::from_element(1, 1, 0.3);
        m.set_transition(1, &g).unwrap();
        m.set_coupling(1, &g).unwrap();
        let big = m.assemble_g();
        assert_abs_diff_eq!(big[(1, 0)], -0.6);
    }

    #[test]
    fn g_inverse_is_inverse() {
        let mut m = CmModel::zeros(4, 2, Direction::Last).unwrap();
        for k in m.transition_times() {
            m.set_transition(k, &m2([0.5, -0.1, 0.2, 0.3 * k as f64])).unwrap();
        }
        for k in m.coupling_times() {
            m.set_coupling(k, &m2([0.1, 0.4, -0.7, 0.2])).unwrap();
        }
        let prod = m.assemble_g() * m.g_inverse();
        assert_abs_diff_eq!(prod, Matrix::identity(10, 10), epsilon = 1e-12);
    }

    #[test]
    fn covariance_trivial_cases() {
        let m = CmModel::white(3, 2, Direction::Last, &vec![Matrix::identity(2, 2); 4]).unwrap();
        assert_eq!(*m.covariance_of().matrix(), Matrix::identity(8, 8));
        let mut m = CmModel::zeros(3, 2, Direction::First).unwrap();
        m.set_transition(2, &m2([1.0, 1.0, 1.0, 1.0])).unwrap();
        assert_eq!(*m.covariance_of().matrix(), Matrix::zeros(8, 8));
    }

    #[test]
    fn covariance_one_step_expansion() {
        // x_1 = e_1, x_0 = A x_1 + e_0, expanded by hand:
        // C_1 = G_1, C_{0,1} = A G_1, C_0 = G_0 + A G_1 A^T
        let a = m2([0.7, -0.2, 0.4, 1.1]);
        let g0 = m2([1.0, 0.3, 0.3, 2.0]);
        let g1 = m2([0.5, 0.1, 0.1, 0.25]);
        let mut m = CmModel::zeros(1, 2, Direction::Last).unwrap();
        m.set_coupling(0, &a).unwrap();
        m.set_noise_cov(0, &g0).unwrap();
        m.set_noise_cov(1, &g1).unwrap();
        let c = m.covariance_of();
        assert_abs_diff_eq!(c.block(1, 1), g1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.block(0, 1), &a * &g1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.block(0, 0), &g0 + &a * &g1 * a.transpose(), epsilon = 1e-14);
    }

    #[test]
    fn setters_validate() {
        let mut m = CmModel::zeros(3, 2, Direction::Last).unwrap();
        assert!(m.set_transition(3, &Matrix::zeros(2, 2)).is_err());
        assert!(m.set_coupling(3, &Matrix::zeros(2, 2)).is_err());
        assert!(m.set_transition(1, &Matrix::zeros(3, 3)).is_err());
        assert!(matches!(
            m.set_noise_cov(1, &m2([1.0, 0.0, 0.0, -1.0])),
            Err(Error::Indefinite { .. })
        ));
        let mut f = CmModel::zeros(3, 2, Direction::First).unwrap();
        assert!(f.set_coupling(0, &Matrix::zeros(2, 2)).is_err());
        assert!(f.set_transition(3, &Matrix::zeros(2, 2)).is_ok());
        assert!(CmModel::zeros(0, 1, Direction::Last).is_err());
    }

    #[test]
    fn origin_boundary_preserves_endpoint_law() {
        let g = m2([0.8, 0.1, -0.3, 0.5]);
        let q0 = m2([1.0, 0.2, 0.2, 0.5]);
        let qn = m2([0.3, 0.0, 0.0, 0.0]);
        let mut m = CmModel::zeros(3, 2, Direction::Last).unwrap();
        m.set_origin_boundary(&g, &q0, &qn).unwrap();
        let c = m.covariance_of();
        assert_abs_diff_eq!(c.block(0, 0), q0.clone(), epsilon = 1e-12);
        assert_abs_diff_eq!(c.block(3, 0), &g * &q0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.block(3, 3), &g * &q0 * g.transpose() + &qn, epsilon = 1e-12);
    }

    #[test]
    fn singularity_flags() {
        let d = 1;
        let zero = CmModel::zeros(4, d, Direction::Last).unwrap();
        let rep = zero.singularity_report(DEFAULT_SINGULARITY_TOL).unwrap();
        assert_eq!(rep.entries.len(), 3);
        assert!(rep.entries.iter().all(|e| e.state_as_zero && e.noise_degenerate));

        let one = Matrix::identity(1, 1);
        let full = CmModel::white(4, d, Direction::Last, &vec![one.clone(); 5]).unwrap();
        let rep = full.singularity_report(DEFAULT_SINGULARITY_TOL).unwrap();
        assert!(rep.entries.iter().all(|e| !e.noise_degenerate && !e.state_as_zero));
        assert!(rep.entries.iter().all(|e| e.rank_noise == 1));

        // deterministic step at k = 2 driven by a random x_1
        let mut m = CmModel::white(4, d, Direction::Last, &vec![one.clone(); 5]).unwrap();
        m.set_noise_cov(2, &Matrix::zeros(1, 1)).unwrap();
        m.set_transition(2, &Matrix::from_element(1, 1, 0.8)).unwrap();
        let rep = m.singularity_report(DEFAULT_SINGULARITY_TOL).unwrap();
        let e2 = &rep.entries[1];
        assert_eq!(e2.time, 2);
        assert!(e2.noise_degenerate);
        assert!(!e2.state_as_zero);
        assert_eq!(e2.rank_noise, 0);

        let first = CmModel::zeros(4, d, Direction::First).unwrap();
        assert!(first.singularity_report(DEFAULT_SINGULARITY_TOL).is_err());
    }

    #[test]
    fn boundary_flags() {
        let one = Matrix::identity(2, 2);
        let m = CmModel::white(4, 2, Direction::Last, &vec![one.clone(); 5]).unwrap();
        assert_eq!(m.boundary_nonsingular(1e-10).unwrap(), vec![true; 3]);

        let mut m = m.clone();
        m.set_noise_cov(4, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(m.boundary_nonsingular(1e-10).unwrap(), vec![false; 3]);
    }

    #[test]
    fn white_model_is_reciprocal() {
        let m = CmModel::white(5, 1, Direction::Last, &vec![Matrix::identity(1, 1); 6]).unwrap();
        assert!(m.is_reciprocal_model(1e-8).passed);
    }

    #[test]
    fn direction_parsing() {
        assert_eq!("first".parse::<Direction>().unwrap(), Direction::First);
        assert_eq!("LAST".parse::<Direction>().unwrap(), Direction::Last);
        assert!("middle".parse::<Direction>().is_err());
    }
}
