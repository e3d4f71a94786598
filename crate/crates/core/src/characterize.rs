//! Covariance-function tests for the Markov, CM_c, interval CM_c and
//! reciprocal properties of a (possibly singular) Gaussian sequence.
//!
//! Every test evaluates block identities of the form
//!
//! ```text
//! C_{k,i} = [C_{k,j} C_{k,a}] [[C_j, C_{j,a}], [C_{a,j}, C_a]]^+ [C_{j,i}; C_{a,i}]
//! ```
//!
//! (or `C_{k,i} = C_{k,j} C_j^+ C_{j,i}` without an anchor `a`) over an index
//! range, using Moore-Penrose inverses so singular blocks need no special
//! casing. The Frobenius norm of the defect is the residual; a check passes
//! when the worst residual is at most `rel_tol * (1 + ||C||_F)`.
//!
//! Two independent routes are provided next to the direct identities: the
//! Markov property of augmented sequences `y_k = [x_k; x_anchor]`, and a
//! brute-force mean-square-error comparison of nested projections
//! ([`cm_oracle`]).

use serde::{Deserialize, Serialize};

use crate::covariance::BlockCovariance;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, DEFAULT_PINV_TOL};
use crate::model::Direction;

/// Default relative residual tolerance for exactly computed covariances.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// Largest `(N+1)*d` accepted by [`cm_oracle`].
pub const ORACLE_MAX_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub property: String,
    pub passed: bool,
    /// Largest Frobenius-norm defect over all evaluated index tuples.
    pub worst_residual: f64,
    /// Index tuple achieving `worst_residual`; empty when nothing was checked.
    pub worst_indices: Vec<usize>,
    pub rel_tol: f64,
    /// `rel_tol * (1 + ||C||_F)`.
    pub threshold: f64,
    /// Number of index tuples evaluated.
    pub checks: usize,
}

#[derive(Debug, Default)]
struct Sweep {
    worst: f64,
    worst_indices: Vec<usize>,
    checks: usize,
}

impl Sweep {
    fn record(&mut self, residual: f64, indices: impl FnOnce() -> Vec<usize>) {
        self.checks += 1;
        // NaN residuals must surface as failures.
        if residual > self.worst || residual.is_nan() && !self.worst.is_nan() {
            self.worst = residual;
            self.worst_indices = indices();
        }
    }

    fn finish(self, property: impl Into<String>, rel_tol: f64, scale: f64) -> ClassificationReport {
        let threshold = rel_tol * scale;
        ClassificationReport {
            property: property.into(),
            passed: self.worst <= threshold,
            worst_residual: self.worst,
            worst_indices: self.worst_indices,
            rel_tol,
            threshold,
            checks: self.checks,
        }
    }
}

/// Sweeps `i < j < k` over `times` (ascending), conditioning on `x_j` and,
/// when given, `x_anchor`. `label` turns positions `(i, j, k)` in `times`
/// into the reported index tuple.
fn projection_sweep(
    c: &BlockCovariance,
    times: &[usize],
    anchor: Option<usize>,
    sweep: &mut Sweep,
    label: &dyn Fn(usize, usize, usize) -> Vec<usize>,
) {
    let n = times.len();
    if n < 3 {
        return;
    }
    for jp in 1..n - 1 {
        let j = times[jp];
        let cond: Vec<usize> = match anchor {
            Some(a) => vec![j, a],
            None => vec![j],
        };
        let m_plus = linalg::mp_inverse(&c.joint(&cond, &cond), DEFAULT_PINV_TOL);
        let rights: Vec<Matrix> = times[..jp].iter().map(|&i| c.joint(&cond, &[i])).collect();
        for kp in jp + 1..n {
            let k = times[kp];
            let left = c.joint(&[k], &cond) * &m_plus;
            for (ip, right) in rights.iter().enumerate() {
                let i = times[ip];
                let defect = c.block(k, i) - &left * right;
                sweep.record(defect.norm(), || label(ip, jp, kp));
            }
        }
    }
}

fn positions_to_times<'a>(
    times: &'a [usize],
    tail: &'a [usize],
) -> impl Fn(usize, usize, usize) -> Vec<usize> + 'a {
    move |i, j, k| {
        let mut v = vec![times[i], times[j], times[k]];
        v.extend_from_slice(tail);
        v
    }
}

/// Markov test: `C_{k,i} = C_{k,j} C_j^+ C_{j,i}` for all `i < j < k`.
///
/// Reported indices are `(i, j, k)`.
pub fn is_markov(c: &BlockCovariance, rel_tol: f64) -> ClassificationReport {
    markov_with_scale(c, rel_tol, c.residual_scale(), "markov")
}

fn markov_with_scale(c: &BlockCovariance, rel_tol: f64, scale: f64, property: &str) -> ClassificationReport {
    let times: Vec<usize> = (0..c.len()).collect();
    let mut sweep = Sweep::default();
    projection_sweep(c, &times, None, &mut sweep, &positions_to_times(&times, &[]));
    sweep.finish(property, rel_tol, scale)
}

fn window_times(lo: usize, hi: usize, anchor: usize) -> Vec<usize> {
    (lo..=hi).filter(|&t| t != anchor).collect()
}

fn cm_window_sweep(c: &BlockCovariance, lo: usize, hi: usize, anchor: usize, sweep: &mut Sweep) {
    let times = window_times(lo, hi, anchor);
    projection_sweep(c, &times, Some(anchor), sweep, &positions_to_times(&times, &[anchor]));
}

pub(crate) fn cm_property_name(direction: Direction) -> &'static str {
    match direction {
        Direction::First => "cm_first",
        Direction::Last => "cm_last",
    }
}

/// CM_c test over the whole horizon, `c = 0` for [`Direction::First`] and
/// `c = N` for [`Direction::Last`].
///
/// Checks the anchored identity for all `i < j < k` in `[0, N] \ {c}`.
/// Reported indices are `(i, j, k, c)`.
pub fn is_cm(c: &BlockCovariance, direction: Direction, rel_tol: f64) -> ClassificationReport {
    let n = c.horizon();
    let mut sweep = Sweep::default();
    cm_window_sweep(c, 0, n, direction.anchor(n), &mut sweep);
    sweep.finish(cm_property_name(direction), rel_tol, c.residual_scale())
}

/// `[k1, k2]`-CM_c test with the anchor at `k1` (first) or `k2` (last).
///
/// Windows with `k2 - k1 < 3` have no index triple and pass.
pub fn is_interval_cm(
    c: &BlockCovariance,
    k1: usize,
    k2: usize,
    direction: Direction,
    rel_tol: f64,
) -> Result<ClassificationReport> {
    if k1 >= k2 || k2 > c.horizon() {
        return Err(Error::InvalidWindow {
            k1,
            k2,
            horizon: c.horizon(),
        });
    }
    let anchor = match direction {
        Direction::First => k1,
        Direction::Last => k2,
    };
    let mut sweep = Sweep::default();
    cm_window_sweep(c, k1, k2, anchor, &mut sweep);
    Ok(sweep.finish(
        format!("interval_{}[{k1}:{k2}]", cm_property_name(direction)),
        rel_tol,
        c.residual_scale(),
    ))
}

/// Reciprocal test on the reduced condition pair: (a) every `l < i < j < k`
/// and (b) every `i < j < k < l = N`.
///
/// Reported indices are `(i, j, k, l)`.
pub fn is_reciprocal(c: &BlockCovariance, rel_tol: f64) -> ClassificationReport {
    let n = c.horizon();
    let mut sweep = Sweep::default();
    // (a): anchored at l, forward window [l, N]
    for l in 0..=n {
        cm_window_sweep(c, l, n, l, &mut sweep);
    }
    // (b): anchored at N
    cm_window_sweep(c, 0, n, n, &mut sweep);
    sweep.finish("reciprocal", rel_tol, c.residual_scale())
}

/// Reciprocity residuals of a model-implied covariance: `l < i < j < k` for
/// a last-anchored model, `i < j < k < l` for a first-anchored one.
pub(crate) fn reciprocal_model_report(
    p: &BlockCovariance,
    direction: Direction,
    rel_tol: f64,
) -> ClassificationReport {
    let n = p.horizon();
    let mut sweep = Sweep::default();
    for l in 0..=n {
        match direction {
            Direction::Last => cm_window_sweep(p, l, n, l, &mut sweep),
            Direction::First => cm_window_sweep(p, 0, l, l, &mut sweep),
        }
    }
    sweep.finish("reciprocal_model", rel_tol, p.residual_scale())
}

fn augmented_markov_sweep(
    c: &BlockCovariance,
    times: &[usize],
    anchor: usize,
    sweep: &mut Sweep,
) {
    if times.len() < 3 {
        return;
    }
    let y = c.augmented(times, anchor);
    let positions: Vec<usize> = (0..times.len()).collect();
    projection_sweep(
        &y,
        &positions,
        None,
        sweep,
        &positions_to_times(times, &[anchor]),
    );
}

/// CM_c test through the Markov property of `y_k = [x_k; x_c]`,
/// `k in [0, N] \ {c}`.
///
/// The residual threshold uses the scale of `C` itself so verdicts are
/// comparable with [`is_cm`].
pub fn is_cm_via_markov(
    c: &BlockCovariance,
    direction: Direction,
    rel_tol: f64,
) -> ClassificationReport {
    let n = c.horizon();
    let anchor = direction.anchor(n);
    let times = window_times(0, n, anchor);
    let mut sweep = Sweep::default();
    augmented_markov_sweep(c, &times, anchor, &mut sweep);
    sweep.finish(
        format!("{}_via_markov", cm_property_name(direction)),
        rel_tol,
        c.residual_scale(),
    )
}

/// Reciprocal test through Markov properties of augmented sequences: for
/// every `k1`, `[x_k; x_{k1}]` over `[k1+1, N]`, plus `[x_k; x_N]` over
/// `[0, N-1]`.
pub fn is_reciprocal_via_markov(c: &BlockCovariance, rel_tol: f64) -> ClassificationReport {
    let n = c.horizon();
    let mut sweep = Sweep::default();
    for k1 in 0..=n {
        let times: Vec<usize> = (k1 + 1..=n).collect();
        augmented_markov_sweep(c, &times, k1, &mut sweep);
    }
    let times: Vec<usize> = (0..n).collect();
    augmented_markov_sweep(c, &times, n, &mut sweep);
    sweep.finish("reciprocal_via_markov", rel_tol, c.residual_scale())
}

fn prediction_mse(c: &BlockCovariance, k: usize, given: &[usize]) -> f64 {
    let cross = c.joint(&[k], given);
    let gram = c.joint(given, given);
    let explained = &cross * linalg::mp_inverse(&gram, DEFAULT_PINV_TOL) * cross.transpose();
    c.block(k, k).trace() - explained.trace()
}

/// Brute-force CM_c check by projection.
///
/// For every `j < k` in `[0, N] \ {c}` compares the mean-square error of the
/// linear prediction of `x_k` from `(x_0, ..., x_j, x_c)` with that from
/// `(x_j, x_c)`. The sequence is CM_c iff the two coincide everywhere.
/// Residuals are the absolute trace differences, reported as `(j, k, c)`.
pub fn cm_oracle(
    c: &BlockCovariance,
    direction: Direction,
    rel_tol: f64,
) -> Result<ClassificationReport> {
    let size = c.len() * c.dim();
    if size > ORACLE_MAX_SIZE {
        return Err(Error::ScaleGuard {
            size,
            limit: ORACLE_MAX_SIZE,
        });
    }
    let n = c.horizon();
    let anchor = direction.anchor(n);
    let times = window_times(0, n, anchor);
    let mut sweep = Sweep::default();
    for (jp, &j) in times.iter().enumerate() {
        let mut full: Vec<usize> = (0..=j).collect();
        if !full.contains(&anchor) {
            full.push(anchor);
        }
        let pair = [j, anchor];
        for &k in &times[jp + 1..] {
            let diff = prediction_mse(c, k, &pair) - prediction_mse(c, k, &full);
            sweep.record(diff.abs(), || vec![j, k, anchor]);
        }
    }
    Ok(sweep.finish(
        format!("{}_oracle", cm_property_name(direction)),
        rel_tol,
        c.residual_scale(),
    ))
}
