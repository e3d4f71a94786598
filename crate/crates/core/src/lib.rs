//! Gaussian conditionally Markov (CM), reciprocal and Markov sequences,
//! singular or not.
//!
//! * [`model`]: the CM_c dynamic model, its implied covariance, sampling and
//!   singularity diagnostics.
//! * [`characterize`]: covariance-function tests for the Markov, CM_c,
//!   interval CM_c and reciprocal properties, with independent cross-checks.
//! * [`fit`]: model parameters from a covariance function.
//! * [`decompose`]: Markov-plus-independent-vector structure of CM_c
//!   covariances.
//! * [`io`]: model, covariance and trajectory file formats.

pub mod characterize;
pub mod covariance;
pub mod decompose;
pub mod error;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod model;
pub mod synth;
pub mod trajectory;

pub use characterize::{
    cm_oracle, is_cm, is_cm_via_markov, is_interval_cm, is_markov, is_reciprocal,
    is_reciprocal_via_markov, ClassificationReport, DEFAULT_REL_TOL,
};
pub use covariance::BlockCovariance;
pub use decompose::{build_cm_covariance, canonical_gamma, markov_part_check};
pub use error::{Error, Result};
pub use fit::{fit_cm, fit_cm_with, fit_reciprocal, FitOptions};
pub use linalg::{mp_inverse, psd_factor, psd_project_check, Matrix, PsdFactor};
pub use model::{CmModel, Direction, SingularityReport};
pub use trajectory::TrajectoryEnsemble;
