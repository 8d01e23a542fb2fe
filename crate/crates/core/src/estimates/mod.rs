//! Decay fits, the finite-dimensional eigenvalue lemmas, and checks of the
//! decay theorems on computed solutions.

mod fit;
mod lemmas;
mod suites;
mod theorems;

use thiserror::Error;

use crate::model::ModelError;
use crate::solver::SolverError;

pub use fit::{
    fit_decay, least_squares, power_law_fit, DecayFit, DecayFits, DyadicWindows, SkipReason,
    WindowFit,
};
pub use lemmas::{
    check_sqrteps, hermitian_entry_bound, operator_norm, pinch_constant, pinch_from_laplacian,
    project_unit_product, sqrteps_constant, sqrteps_extremes, sqrteps_proof_inequality,
    HERMITIAN_TOL, PROJECTION_TOL,
};
pub use suites::{
    reproduce, run_all, run_suite, sample_hermitian, sample_pinch, sample_seed,
    sample_unit_product, LemmaKind, LemmaReport, PinchSample,
};
pub use theorems::{
    verify_main_theorem, verify_ueps_scaling, PinchReport, ScalingPoint, ScalingReport,
    EXPONENT_SLACK, SLOPE_SLACK, TRIVIAL_BOUND_TOL,
};

#[derive(Debug, Error, Clone)]
pub enum EstimateError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sample outside the lemma's hypotheses: {0}")]
    Infeasible(String),
    #[error("matrix is not hermitian (defect {defect:e})")]
    NonHermitian { defect: f64 },
    #[error("solution not converged (residual {residual:e})")]
    NotConverged { residual: f64 },
    #[error("delta = {delta} outside the admissible range (0, {max})")]
    DeltaOutOfRange { delta: f64, max: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
