//! Random and closed-form instances: CM models with mixed singular noise,
//! Markov covariances, and generic (non-CM) PSD covariances.

use rand::Rng;

use crate::covariance::BlockCovariance;
use crate::linalg::Matrix;
use crate::model::{CmModel, Direction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Nonsingular,
    /// Rank strictly between 0 and d; zero when d = 1.
    Singular,
    Zero,
}

impl NoiseKind {
    /// Uniform over the three kinds.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        match rng.random_range(0..3) {
            0 => NoiseKind::Nonsingular,
            1 => NoiseKind::Singular,
            _ => NoiseKind::Zero,
        }
    }
}

fn uniform_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, half_width: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-half_width..half_width))
}

pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, d: usize, kind: NoiseKind) -> Matrix {
    match kind {
        NoiseKind::Zero => Matrix::zeros(d, d),
        NoiseKind::Singular if d == 1 => Matrix::zeros(1, 1),
        NoiseKind::Singular => {
            let rank = rng.random_range(1..d);
            let b = uniform_matrix(rng, d, rank, 1.0);
            &b * b.transpose()
        }
        NoiseKind::Nonsingular => {
            let a = uniform_matrix(rng, d, d, 1.0);
            &a * a.transpose() + Matrix::identity(d, d) * 0.2
        }
    }
}

/// Random gain with entries in `[-scale, scale)`.
pub fn random_gain<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> Matrix {
    uniform_matrix(rng, d, d, scale)
}

/// CM_c model with dense random gains and independently drawn noise kinds.
pub fn random_cm_model<R: Rng + ?Sized>(
    rng: &mut R,
    horizon: usize,
    dim: usize,
    direction: Direction,
) -> CmModel {
    random_cm_model_with(rng, horizon, dim, direction, |r, _| NoiseKind::random(r))
}

pub fn random_cm_model_with<R: Rng + ?Sized>(
    rng: &mut R,
    horizon: usize,
    dim: usize,
    direction: Direction,
    mut noise_kind: impl FnMut(&mut R, usize) -> NoiseKind,
) -> CmModel {
    let mut m = CmModel::zeros(horizon, dim, direction).expect("valid dimensions");
    let gain_scale = 0.9 / (dim as f64).sqrt();
    for k in m.transition_times() {
        m.set_transition(k, &random_gain(rng, dim, gain_scale)).expect("valid block");
    }
    for k in m.coupling_times() {
        m.set_coupling(k, &random_gain(rng, dim, gain_scale)).expect("valid block");
    }
    for k in 0..=horizon {
        let kind = noise_kind(rng, k);
        m.set_noise_cov(k, &random_psd(rng, dim, kind)).expect("PSD block");
    }
    m
}

/// Covariance of `x_0 ~ N(0, Q_0)`, `x_k = F_k x_{k-1} + w_k`, computed by
/// the direct recursion `C_k = F_k C_{k-1} F_k^T + Q_k`,
/// `C_{k,i} = F_k C_{k-1,i}`.
pub fn markov_covariance(transitions: &[Matrix], noise: &[Matrix]) -> BlockCovariance {
    let horizon = transitions.len();
    assert_eq!(noise.len(), horizon + 1);
    let d = noise[0].nrows();
    // cov[k][i] for i <= k
    let mut cov: Vec<Vec<Matrix>> = Vec::with_capacity(horizon + 1);
    cov.push(vec![noise[0].clone()]);
    for k in 1..=horizon {
        let f = &transitions[k - 1];
        let mut row: Vec<Matrix> = (0..k).map(|i| f * &cov[k - 1][i]).collect();
        let diag = f * &cov[k - 1][k - 1] * f.transpose() + &noise[k];
        row.push(diag);
        cov.push(row);
    }
    BlockCovariance::from_upper_blocks(horizon, d, |i, j| cov[j][i].transpose())
        .expect("Markov covariance is PSD")
}

/// Markov covariance with random transitions and noise kinds.
pub fn random_markov_covariance<R: Rng + ?Sized>(rng: &mut R, horizon: usize, dim: usize) -> BlockCovariance {
    let gain_scale = 1.1 / (dim as f64).sqrt();
    let transitions: Vec<Matrix> = (0..horizon).map(|_| random_gain(rng, dim, gain_scale)).collect();
    let mut noise: Vec<Matrix> = (0..=horizon)
        .map(|_| {
            let kind = NoiseKind::random(rng);
            random_psd(rng, dim, kind)
        })
        .collect();
    // keep the sequence from being identically zero
    noise[0] = random_psd(rng, dim, NoiseKind::Nonsingular);
    markov_covariance(&transitions, &noise)
}

/// Reciprocal, generically non-Markov covariance: the bridge of a random
/// nonsingular Markov sequence between `x_0` and `x_N`, with the endpoint
/// pair redrawn from an arbitrary joint law.
pub fn random_reciprocal_covariance<R: Rng + ?Sized>(rng: &mut R, horizon: usize, dim: usize) -> BlockCovariance {
    let gain_scale = 1.1 / (dim as f64).sqrt();
    let transitions: Vec<Matrix> = (0..horizon).map(|_| random_gain(rng, dim, gain_scale)).collect();
    let noise: Vec<Matrix> = (0..=horizon)
        .map(|_| random_psd(rng, dim, NoiseKind::Nonsingular))
        .collect();
    let markov = markov_covariance(&transitions, &noise);
    let ends = [0, horizon];
    let end_gram = markov.joint(&ends, &ends);
    let all: Vec<usize> = (0..=horizon).collect();
    // x = H [x_0; x_N] + r, r independent of the endpoints
    let h = markov.joint(&all, &ends) * crate::linalg::mp_inverse(&end_gram, crate::linalg::DEFAULT_PINV_TOL);
    let bridge = markov.matrix() - &h * &end_gram * h.transpose();
    let endpoint_law = random_psd(rng, 2 * dim, NoiseKind::Nonsingular);
    let m = &h * endpoint_law * h.transpose() + bridge;
    BlockCovariance::new(horizon, dim, crate::linalg::symmetrize(&m)).expect("reciprocal covariance is PSD")
}

/// `C_{k,i} = a^{|k-i|} I_d`.
pub fn ar1_covariance(horizon: usize, dim: usize, a: f64) -> BlockCovariance {
    BlockCovariance::from_upper_blocks(horizon, dim, |i, j| {
        Matrix::identity(dim, dim) * a.powi((j - i) as i32)
    })
    .expect("AR(1) covariance is PSD for |a| <= 1")
}

/// `C_{i,j} = (min(i, j) + 1) I_d`.
pub fn brownian_covariance(horizon: usize, dim: usize) -> BlockCovariance {
    BlockCovariance::from_upper_blocks(horizon, dim, |i, _| Matrix::identity(dim, dim) * (i + 1) as f64)
        .expect("Brownian covariance is PSD")
}

pub fn white_covariance(horizon: usize, dim: usize) -> BlockCovariance {
    let side = (horizon + 1) * dim;
    BlockCovariance::new(horizon, dim, Matrix::identity(side, side)).expect("identity is PSD")
}

/// Generic full-rank PSD covariance; almost surely neither Markov nor CM
/// once the horizon leaves room for an index triple.
pub fn random_psd_covariance<R: Rng + ?Sized>(rng: &mut R, horizon: usize, dim: usize) -> BlockCovariance {
    let side = (horizon + 1) * dim;
    let a = uniform_matrix(rng, side, side, 1.0);
    let m = &a * a.transpose() / side as f64 + Matrix::identity(side, side) * 0.1;
    BlockCovariance::new(horizon, dim, m).expect("Gram matrix is PSD")
}
