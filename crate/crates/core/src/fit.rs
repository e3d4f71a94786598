//! Recovering CM_c model parameters from a covariance function.
//!
//! Each gain is the minimum-norm solution `C^{xy} (C^y)^+` of the normal
//! equations of `E[x_k | y_{k-1}]`, and each noise covariance is the
//! corresponding residual covariance. With singular `C^y` the parameters are
//! not unique, but every member of the solution family reproduces the same
//! covariance; the round trip through [`CmModel::covariance_of`] is the
//! contract.

use crate::characterize::{self, DEFAULT_REL_TOL};
use crate::covariance::BlockCovariance;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, DEFAULT_PINV_TOL, DEFAULT_PSD_TOL};
use crate::model::{CmModel, Direction};

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Require the input to pass the CM_c characterization first.
    pub enforce: bool,
    pub rel_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            enforce: true,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

pub fn fit_cm(c: &BlockCovariance, direction: Direction) -> Result<CmModel> {
    fit_cm_with(c, direction, &FitOptions::default())
}

struct Regression {
    gain: Matrix,
    residual_cov: Matrix,
}

/// `E[x_k | x_given] = gain * x_given` and its residual covariance.
fn regress(c: &BlockCovariance, k: usize, given: &[usize], clip_tol: f64) -> Result<Regression> {
    let cross = c.joint(&[k], given);
    let gram = c.joint(given, given);
    let gain = &cross * linalg::mp_inverse(&gram, DEFAULT_PINV_TOL);
    let resid = c.block(k, k) - &gain * cross.transpose();
    let residual_cov = linalg::clip_psd(&resid, clip_tol, &format!("residual covariance at k={k}"))?;
    Ok(Regression { gain, residual_cov })
}

pub fn fit_cm_with(c: &BlockCovariance, direction: Direction, opts: &FitOptions) -> Result<CmModel> {
    let n = c.horizon();
    let d = c.dim();
    if n < 1 {
        return Err(Error::shape("fitting needs a horizon N >= 1"));
    }
    if opts.enforce {
        let report = characterize::is_cm(c, direction, opts.rel_tol);
        if !report.passed {
            return Err(Error::Characterization(Box::new(report)));
        }
    }
    let clip_tol = DEFAULT_PSD_TOL * c.residual_scale();
    let mut model = CmModel::zeros(n, d, direction)?;
    let anchor = direction.anchor(n);

    let anchor_cov = linalg::clip_psd(&c.block(anchor, anchor), clip_tol, "anchor covariance")?;
    model.set_noise_cov(anchor, &anchor_cov)?;

    match direction {
        Direction::Last => {
            let r = regress(c, 0, &[n], clip_tol)?;
            model.set_coupling(0, &r.gain)?;
            model.set_noise_cov(0, &r.residual_cov)?;
        }
        Direction::First => {
            let r = regress(c, 1, &[0], clip_tol)?;
            model.set_transition(1, &r.gain)?;
            model.set_noise_cov(1, &r.residual_cov)?;
        }
    }

    let interior = match direction {
        Direction::Last => 1..n,
        Direction::First => 2..n + 1,
    };
    for k in interior {
        let r = regress(c, k, &[k - 1, anchor], clip_tol)?;
        let transition = r.gain.columns(0, d).into_owned();
        let coupling = r.gain.columns(d, d).into_owned();
        model.set_transition(k, &transition)?;
        model.set_coupling(k, &coupling)?;
        model.set_noise_cov(k, &r.residual_cov)?;
    }
    Ok(model)
}

/// Fits a last-anchored model to a reciprocal covariance. The result is a
/// reciprocal CM_L model: its implied covariance passes
/// [`CmModel::is_reciprocal_model`].
pub fn fit_reciprocal(c: &BlockCovariance, rel_tol: f64) -> Result<CmModel> {
    let report = characterize::is_reciprocal(c, rel_tol);
    if !report.passed {
        return Err(Error::Characterization(Box::new(report)));
    }
    // reciprocal implies CM_L, already covered by condition (b)
    fit_cm_with(
        c,
        Direction::Last,
        &FitOptions {
            enforce: false,
            rel_tol,
        },
    )
}
