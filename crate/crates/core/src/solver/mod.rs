//! The radially reduced Monge-Ampere problem
//! `d/dt[(t^(1/n) + u')^n] = e^(f + eps u)` on `[t0, T]`, written as the
//! first-order system
//!
//! ```text
//! h' = e^(f + eps u),    u' = h^(1/n) - t^(1/n),
//! h(t0) = t0 + c0,       u(T) = 0,
//! ```
//!
//! and solved by damped Newton with continuation in `eps`.

mod discretization;
mod newton;
mod oracle;

use std::sync::Arc;

use thiserror::Error;

use crate::banded::BandError;
use crate::grid::{RadialField, RadialGrid};
use crate::model::{ModelEnd, ModelError};

pub use discretization::{assemble_jacobian, residual_eps, Discretization};
pub use newton::{continue_to_limit, solve_eps, Continuation};
pub use oracle::closed_form_eps0;

/// Default collocation order; see [`SolverConfig::order`].
pub const DEFAULT_ORDER: usize = 6;

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("model mass is not normalized")]
    NotNormalized,
    #[error("eps must be finite and non-negative, got {0}")]
    NegativeEps(f64),
    #[error("warm start lives on a different grid")]
    GridMismatch,
    #[error("positivity lost at t = {t} (h = {h})")]
    Positivity { t: f64, h: f64 },
    #[error("positivity could not be restored at eps = {eps} (iteration {iteration})")]
    PositivityUnrecoverable { eps: f64, iteration: usize },
    #[error("Jacobian singular at eps = {eps}: zero pivot in column {pivot}")]
    Singular { eps: f64, pivot: usize },
    #[error(
        "Newton did not converge at eps = {eps} after {iterations} iterations (residual {:e})",
        residual_history.last().copied().unwrap_or(f64::NAN)
    )]
    NonConvergence {
        eps: f64,
        iterations: usize,
        residual_history: Vec<f64>,
        last_iterate: Box<Solution>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl SolverError {
    /// The `eps` at which the failure happened, when known.
    pub fn eps(&self) -> Option<f64> {
        match self {
            SolverError::PositivityUnrecoverable { eps, .. }
            | SolverError::Singular { eps, .. }
            | SolverError::NonConvergence { eps, .. } => Some(*eps),
            _ => None,
        }
    }
}

impl From<(f64, BandError)> for SolverError {
    fn from((eps, err): (f64, BandError)) -> Self {
        match err {
            BandError::Singular { pivot } => SolverError::Singular { eps, pivot },
            other => SolverError::InvalidConfig(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps_start: f64,
    pub eps_ratio: f64,
    pub eps_floor: f64,
    /// Sup-norm residual at which Newton stops.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub line_search_halvings: usize,
    /// Order of the cell quadrature: 2 is the midpoint rule, 4 and 6 use
    /// Gauss points on a 4- or 6-node Lagrange interpolant.
    pub order: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            eps_ratio: 0.5,
            eps_floor: 1e-10,
            newton_tol: 1e-11,
            newton_max_iter: 50,
            line_search_halvings: 30,
            order: DEFAULT_ORDER,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SolverError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("eps_start", self.eps_start)?;
        positive("eps_ratio", self.eps_ratio)?;
        positive("eps_floor", self.eps_floor)?;
        positive("newton_tol", self.newton_tol)?;
        if self.eps_ratio >= 1.0 {
            return Err(SolverError::InvalidConfig(format!(
                "eps_ratio must be below 1, got {}",
                self.eps_ratio
            )));
        }
        if self.newton_max_iter == 0 {
            return Err(SolverError::InvalidConfig(
                "newton_max_iter must be positive".into(),
            ));
        }
        if ![2, 4, 6].contains(&self.order) {
            return Err(SolverError::InvalidConfig(format!(
                "order must be 2, 4 or 6, got {}",
                self.order
            )));
        }
        Ok(())
    }

    /// The continuation schedule `eps_start * eps_ratio^k >= eps_floor`.
    pub fn schedule(&self) -> Vec<f64> {
        (0..)
            .map(|k| self.eps_start * self.eps_ratio.powi(k))
            .take_while(|&e| e >= self.eps_floor)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_residual: f64,
    /// Sup-norm residual before each iteration and after the last one.
    pub residual_history: Vec<f64>,
    /// Accepted step length per iteration.
    pub damping_history: Vec<f64>,
}

/// Eigenvalues of `omega + i ddbar u` relative to `omega`.
///
/// `base` has multiplicity `n - 1`, `fiber` multiplicity 1. The deviations
/// `lambda - 1` are kept separately because they fall below the spacing of
/// doubles near 1 in the far field.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueRatios {
    pub base: RadialField,
    pub fiber: RadialField,
    pub base_deviation: RadialField,
    pub fiber_deviation: RadialField,
}

/// A discrete solution `(u, h)` at one `eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    grid: Arc<RadialGrid>,
    u: RadialField,
    h: RadialField,
    /// `h - t`, stored exactly; `h` alone loses it to rounding at large `t`.
    excess: RadialField,
    eps: f64,
    order: usize,
    ratios: EigenvalueRatios,
    report: NewtonReport,
}

impl Solution {
    pub(crate) fn assemble(
        model: &ModelEnd,
        grid: Arc<RadialGrid>,
        u: Vec<f64>,
        excess: Vec<f64>,
        eps: f64,
        order: usize,
        report: NewtonReport,
    ) -> Result<Self, SolverError> {
        let u = RadialField::new(Arc::clone(&grid), u).map_err(ModelError::from)?;
        let excess = RadialField::new(Arc::clone(&grid), excess).map_err(ModelError::from)?;
        let h = excess.map(|t, g| t + g);
        let ratios = ratios_from_parts(model, &u, &excess, eps)?;
        Ok(Self {
            grid,
            u,
            h,
            excess,
            eps,
            order,
            ratios,
            report,
        })
    }

    /// Builds a solution from nodal `u` and `h`, e.g. a warm start or values
    /// read back from disk. The eigenvalue ratios are evaluated at `eps`.
    pub fn from_nodal(
        model: &ModelEnd,
        grid: Arc<RadialGrid>,
        u: Vec<f64>,
        h: Vec<f64>,
        eps: f64,
    ) -> Result<Self, SolverError> {
        let excess = h.iter().zip(grid.nodes()).map(|(h, t)| h - t).collect();
        Self::assemble(
            model,
            grid,
            u,
            excess,
            eps,
            DEFAULT_ORDER,
            NewtonReport::default(),
        )
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn u(&self) -> &RadialField {
        &self.u
    }

    /// `h = (t^(1/n) + u')^n`.
    pub fn h(&self) -> &RadialField {
        &self.h
    }

    /// `h - t`.
    pub fn excess(&self) -> &RadialField {
        &self.excess
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Collocation order the solution was computed (or checked) with.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda_base(&self) -> &RadialField {
        &self.ratios.base
    }

    pub fn lambda_fiber(&self) -> &RadialField {
        &self.ratios.fiber
    }

    pub fn ratios(&self) -> &EigenvalueRatios {
        &self.ratios
    }

    pub fn newton_report(&self) -> &NewtonReport {
        &self.report
    }

    /// `Delta_omega u = (n-1)(lambda_base - 1) + (lambda_fiber - 1)`.
    pub fn laplacian(&self, dim: u32) -> RadialField {
        let m = dim as f64 - 1.0;
        let values = self
            .ratios
            .base_deviation
            .values()
            .iter()
            .zip(self.ratios.fiber_deviation.values())
            .map(|(b, f)| m * b + f)
            .collect();
        RadialField::new(Arc::clone(&self.grid), values).expect("same grid")
    }

    /// `sup |u - other.u|` over shared nodes.
    pub fn sup_distance(&self, other: &Solution) -> f64 {
        self.u
            .values()
            .iter()
            .zip(other.u.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    #[cfg(test)]
    pub(crate) fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.u.values().to_vec(), self.excess.values().to_vec())
    }
}

fn ratios_from_parts(
    model: &ModelEnd,
    u: &RadialField,
    excess: &RadialField,
    eps: f64,
) -> Result<EigenvalueRatios, SolverError> {
    let inv_n = 1.0 / model.dim() as f64;
    let profile = *model.profile();
    let mut base = Vec::with_capacity(u.values().len());
    let mut fiber = Vec::with_capacity(u.values().len());
    for ((&t, &g), &uv) in u.nodes().iter().zip(excess.values()).zip(u.values()) {
        let rel = g / t;
        if !(1.0 + rel > 0.0) {
            return Err(SolverError::Positivity { t, h: t + g });
        }
        let log_ratio = rel.ln_1p();
        base.push((inv_n * log_ratio).exp_m1());
        // u'' through the system: (h^(1/n))' = h^(1/n - 1) h' / n
        fiber.push(((inv_n - 1.0) * log_ratio + profile.eval(t) + eps * uv).exp_m1());
    }
    let grid = u.grid();
    let field = |v: Vec<f64>| RadialField::new(Arc::clone(grid), v).map_err(ModelError::from);
    let base_deviation = field(base)?;
    let fiber_deviation = field(fiber)?;
    Ok(EigenvalueRatios {
        base: base_deviation.map(|_, d| 1.0 + d),
        fiber: fiber_deviation.map(|_, d| 1.0 + d),
        base_deviation,
        fiber_deviation,
    })
}

/// Eigenvalue ratios of the solution metric against the reference metric.
pub fn eigenvalue_ratios(
    model: &ModelEnd,
    sol: &Solution,
) -> Result<EigenvalueRatios, SolverError> {
    ratios_from_parts(model, &sol.u, &sol.excess, sol.eps)
}
