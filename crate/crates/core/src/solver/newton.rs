use std::sync::Arc;

use crate::grid::RadialGrid;
use crate::model::ModelEnd;

use super::discretization::{interleave, split, Discretization};
use super::{NewtonReport, Solution, SolverConfig, SolverError};

/// Output of [`continue_to_limit`].
#[derive(Debug, Clone)]
pub struct Continuation {
    /// The `eps = 0` solution, warm-started from the last schedule entry.
    pub limit: Solution,
    /// One solution per schedule entry, in decreasing `eps`.
    pub trace: Vec<Solution>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves the discrete system at a single `eps` by damped Newton.
///
/// Starts from `warm_start` when given, otherwise from the reference
/// metric `u = 0, h = t`.
pub fn solve_eps(
    model: &ModelEnd,
    grid: Arc<RadialGrid>,
    eps: f64,
    config: &SolverConfig,
    warm_start: Option<&Solution>,
) -> Result<Solution, SolverError> {
    config.validate()?;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(SolverError::NegativeEps(eps));
    }
    if !model.is_normalized() {
        return Err(SolverError::NotNormalized);
    }
    if (grid.start() - model.t0()).abs() > 1e-12 * model.t0() {
        return Err(SolverError::InvalidConfig(format!(
            "grid starts at {} but the model end is cut at {}",
            grid.start(),
            model.t0()
        )));
    }
    let disc = Discretization::new(model, &grid, config.order)?;
    let mut x = match warm_start {
        Some(prev) => {
            if prev.grid().nodes() != grid.nodes() {
                return Err(SolverError::GridMismatch);
            }
            interleave(prev.u().values(), prev.excess().values())
        }
        None => vec![0.0; disc.unknowns()],
    };

    let mut r = disc.residual(&x, eps)?;
    let mut report = NewtonReport {
        residual_history: vec![sup(&r)],
        ..NewtonReport::default()
    };
    let fail = |x: &[f64], mut report: NewtonReport| -> SolverError {
        report.final_residual = report.residual_history.last().copied().unwrap_or(f64::NAN);
        let (u, g) = split(x);
        let iterations = report.iterations;
        let residual_history = report.residual_history.clone();
        match Solution::assemble(model, Arc::clone(&grid), u, g, eps, config.order, report) {
            Ok(sol) => SolverError::NonConvergence {
                eps,
                iterations,
                residual_history,
                last_iterate: Box::new(sol),
            },
            Err(e) => e,
        }
    };

    while sup(&r) > config.newton_tol {
        if report.iterations == config.newton_max_iter {
            return Err(fail(&x, report));
        }
        let lu = disc
            .jacobian(&x, eps)?
            .factorize()
            .map_err(|e| SolverError::from((eps, e)))?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg).map_err(|e| SolverError::from((eps, e)))?;

        let merit = norm2(&r);
        let mut step = 1.0;
        let mut accepted = None;
        let mut only_positivity = true;
        for _ in 0..=config.line_search_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + step * d).collect();
            match disc.residual(&trial, eps) {
                Ok(rt) => {
                    only_positivity = false;
                    if norm2(&rt) <= (1.0 - 1e-4 * step) * merit {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
                Err(SolverError::Positivity { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        report.iterations += 1;
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
                report.damping_history.push(step);
                report.residual_history.push(sup(&r));
            }
            None if only_positivity => {
                return Err(SolverError::PositivityUnrecoverable {
                    eps,
                    iteration: report.iterations,
                });
            }
            None => return Err(fail(&x, report)),
        }
    }

    report.final_residual = sup(&r);
    let (u, g) = split(&x);
    Solution::assemble(model, grid, u, g, eps, config.order, report)
}

/// Runs the `eps` schedule of `config` with warm starts and finishes with a
/// solve at `eps = 0`.
pub fn continue_to_limit(
    model: &ModelEnd,
    grid: Arc<RadialGrid>,
    config: &SolverConfig,
) -> Result<Continuation, SolverError> {
    config.validate()?;
    let mut trace: Vec<Solution> = Vec::new();
    for eps in config.schedule() {
        let sol = solve_eps(model, Arc::clone(&grid), eps, config, trace.last())?;
        trace.push(sol);
    }
    let limit = solve_eps(model, grid, 0.0, config, trace.last())?;
    Ok(Continuation { limit, trace })
}
