//! End-to-end checks of the decay theorems on computed solutions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::grid::RadialField;
use crate::model::ModelEnd;
use crate::solver::Solution;

use super::fit::{fit_decay, least_squares, DecayFit, DyadicWindows};
use super::EstimateError;

/// Residual above which a solution is treated as not converged.
const CONVERGED_RESIDUAL: f64 = 1e-8;

/// Slack on fitted exponents against an envelope.
pub const EXPONENT_SLACK: f64 = 0.02;

/// Slack on the fitted `eps`-slope against its envelope.
pub const SLOPE_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchReport {
    /// `1/(3n)`.
    pub delta_used: f64,
    /// `sup_t Delta u * t^delta`.
    pub sup_scaled_laplacian: f64,
    /// `sup_t |lambda - 1| * t^(delta/2)` over both eigenvalue fields.
    pub pinch_constant: f64,
    pub base_exponent: Option<f64>,
    pub fiber_exponent: Option<f64>,
    pub laplacian_exponent: Option<f64>,
    /// Slowest of the two eigenvalue decay rates; `None` when both fields
    /// vanish.
    pub fitted_pinch_exponent: Option<f64>,
    /// `-1/(6n)`.
    pub envelope: f64,
    pub envelope_holds: bool,
}

fn check_converged(sol: &Solution) -> Result<(), EstimateError> {
    let r = sol.newton_report().final_residual;
    if !(r.is_finite() && r <= CONVERGED_RESIDUAL) {
        return Err(EstimateError::NotConverged { residual: r });
    }
    Ok(())
}

fn scaled_sup(field: &RadialField, power: f64, abs: bool) -> f64 {
    field
        .nodes()
        .iter()
        .zip(field.values())
        .map(|(&t, &v)| if abs { v.abs() } else { v } * t.powf(power))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn asymptotic_exponent(field: &RadialField, windows: &DyadicWindows) -> Option<f64> {
    let abs = field.map(|_, v| v.abs());
    fit_decay(&abs, windows).asymptotic().map(|f| f.exponent)
}

/// Laplacian bound and eigenvalue pinch of the `eps = 0` solution with
/// `delta = 1/(3n)`.
pub fn verify_main_theorem(
    model: &ModelEnd,
    sol: &Solution,
    windows: &DyadicWindows,
) -> Result<PinchReport, EstimateError> {
    if sol.eps() != 0.0 {
        return Err(EstimateError::InvalidInput(format!(
            "expected the eps = 0 solution, got eps = {}",
            sol.eps()
        )));
    }
    check_converged(sol)?;
    let n = model.dim() as f64;
    let delta = 1.0 / (3.0 * n);
    let laplacian = sol.laplacian(model.dim());
    let ratios = sol.ratios();
    let sup_scaled_laplacian = scaled_sup(&laplacian, delta, false);
    let pinch_constant = scaled_sup(&ratios.base_deviation, 0.5 * delta, true).max(scaled_sup(
        &ratios.fiber_deviation,
        0.5 * delta,
        true,
    ));
    let base_exponent = asymptotic_exponent(&ratios.base_deviation, windows);
    let fiber_exponent = asymptotic_exponent(&ratios.fiber_deviation, windows);
    let laplacian_exponent = asymptotic_exponent(&laplacian, windows);
    let fitted_pinch_exponent = match (base_exponent, fiber_exponent) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    let envelope = -0.5 * delta;
    let envelope_holds = fitted_pinch_exponent.is_none_or(|p| p <= envelope + EXPONENT_SLACK);
    Ok(PinchReport {
        delta_used: delta,
        sup_scaled_laplacian,
        pinch_constant,
        base_exponent,
        fiber_exponent,
        laplacian_exponent,
        fitted_pinch_exponent,
        envelope,
        envelope_holds,
    })
}

/// Weighted suprema of one trace entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub eps: f64,
    pub newton_iterations: usize,
    pub sup_u: f64,
    /// `S(eps) = sup_t |u_eps| t^delta`.
    pub scaled_u: f64,
    /// `sup_t |du_eps|_omega t^delta` with `|du|^2 = u'^2 / b`.
    pub scaled_gradient: f64,
    /// `sup_t |Delta u_eps| t^delta`.
    pub scaled_laplacian: f64,
    /// `sup|f| / eps`.
    pub trivial_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub delta: f64,
    /// `1 + n delta - delta/(n+1)`.
    pub envelope: f64,
    pub points: Vec<ScalingPoint>,
    /// Slope of `log S` against `log(1/eps)`; the window is in `1/eps`.
    /// `None` when fewer than two entries have `S > 0`.
    pub fit: Option<DecayFit>,
    pub gradient_fit: Option<DecayFit>,
    pub laplacian_fit: Option<DecayFit>,
    pub envelope_holds: bool,
    pub trivial_bound_holds: bool,
    /// Max over the trace of `sup|u_eps| - sup|f|/eps`.
    pub trivial_bound_margin: f64,
}

/// Tolerance on the trivial bound `sup|u_eps| <= sup|f|/eps`.
pub const TRIVIAL_BOUND_TOL: f64 = 1e-10;

fn slope_fit(points: &[ScalingPoint], pick: impl Fn(&ScalingPoint) -> f64) -> Option<DecayFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| pick(p) > 0.0 && p.eps > 0.0)
        .map(|p| ((1.0 / p.eps).ln(), pick(p).ln()))
        .unzip();
    if x.len() < 2 {
        return None;
    }
    let (slope, intercept, r_squared) = least_squares(&x, &y);
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min).exp();
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
    Some(DecayFit {
        exponent: slope,
        constant: intercept.exp(),
        window: (lo, hi),
        r_squared,
    })
}

/// Growth of the weighted suprema of `u_eps` as `eps -> 0` along a trace.
pub fn verify_ueps_scaling(
    model: &ModelEnd,
    trace: &[Solution],
    delta: f64,
) -> Result<ScalingReport, EstimateError> {
    let n = model.dim() as f64;
    let max_delta = model
        .profile()
        .exponent()
        .map(|big_n| big_n - 1.0 - 1.0 / n)
        .unwrap_or(f64::INFINITY);
    if !(delta > 0.0 && delta < max_delta) {
        return Err(EstimateError::DeltaOutOfRange {
            delta,
            max: max_delta,
        });
    }
    let mut points = Vec::with_capacity(trace.len());
    for sol in trace {
        if !(sol.eps() > 0.0) {
            return Err(EstimateError::InvalidInput(format!(
                "trace entries need eps > 0, got {}",
                sol.eps()
            )));
        }
        check_converged(sol)?;
        let sup_f = model.sup_forcing(sol.grid());
        let inv_n = 1.0 / n;
        // u' = t^(1/n) (lambda_base - 1) and b = t^(1/n - 1) / n
        let gradient: Vec<f64> = sol
            .grid()
            .nodes()
            .iter()
            .zip(sol.ratios().base_deviation.values())
            .map(|(&t, &d)| {
                let slope = t.powf(inv_n) * d;
                slope / (t.powf(inv_n - 1.0) * inv_n).sqrt()
            })
            .collect();
        let gradient = RadialField::new(Arc::clone(sol.grid()), gradient)
            .expect("gradient sampled on the solution grid");
        points.push(ScalingPoint {
            eps: sol.eps(),
            newton_iterations: sol.newton_report().iterations,
            sup_u: sol.u().sup_abs(),
            scaled_u: scaled_sup(sol.u(), delta, true),
            scaled_gradient: scaled_sup(&gradient, delta, true),
            scaled_laplacian: scaled_sup(&sol.laplacian(model.dim()), delta, true),
            trivial_bound: sup_f / sol.eps(),
        });
    }
    let envelope = 1.0 + n * delta - delta / (n + 1.0);
    let fit = slope_fit(&points, |p| p.scaled_u);
    let gradient_fit = slope_fit(&points, |p| p.scaled_gradient);
    let laplacian_fit = slope_fit(&points, |p| p.scaled_laplacian);
    let envelope_holds = [&fit, &gradient_fit, &laplacian_fit].iter().all(|f| {
        f.as_ref()
            .is_none_or(|f| f.exponent <= envelope + SLOPE_SLACK)
    });
    let trivial_bound_margin = points
        .iter()
        .map(|p| p.sup_u - p.trivial_bound)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingReport {
        delta,
        envelope,
        trivial_bound_holds: points
            .iter()
            .all(|p| p.sup_u <= p.trivial_bound + TRIVIAL_BOUND_TOL),
        trivial_bound_margin,
        points,
        fit,
        gradient_fit,
        laplacian_fit,
        envelope_holds,
    })
}
