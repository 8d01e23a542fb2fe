use std::cell::Cell;
use std::sync::Arc;

use crate::grid::RadialGrid;
use crate::model::{ModelEnd, ModelError};
use crate::quadrature::{self, Tolerance};

use super::{NewtonReport, Solution, SolverError, DEFAULT_ORDER};

/// The `eps = 0` problem in closed form up to quadrature.
///
/// `h` integrates forward from the mass condition, giving
/// `h(t) - t = -int_t^inf (e^f - 1)`, and `u` integrates `h^(1/n) - t^(1/n)`
/// backward from `u(T) = 0`. Independent of the collocation scheme, so it
/// serves as the reference for the Newton solver.
pub fn closed_form_eps0(model: &ModelEnd, grid: &Arc<RadialGrid>) -> Result<Solution, SolverError> {
    if !model.is_normalized() {
        return Err(SolverError::NotNormalized);
    }
    let nodes = grid.nodes();
    let excess: Vec<f64> = nodes
        .iter()
        .map(|&t| model.excess_tail(t).map(|tail| -tail))
        .collect::<Result<_, _>>()?;

    let inv_n = 1.0 / model.dim() as f64;
    let failure: Cell<Option<ModelError>> = Cell::new(None);
    let slope = |s: f64| -> f64 {
        match model.excess_tail(s) {
            Ok(tail) => s.powf(inv_n) * (inv_n * (-tail / s).ln_1p()).exp_m1(),
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        }
    };

    let mut u = vec![0.0; nodes.len()];
    for i in (0..nodes.len() - 1).rev() {
        let step =
            quadrature::integrate(slope, nodes[i], nodes[i + 1], Tolerance::new(1e-18, 1e-13));
        if let Some(e) = failure.take() {
            return Err(e.into());
        }
        u[i] = u[i + 1] - step.map_err(ModelError::from)?.value;
    }

    Solution::assemble(
        model,
        Arc::clone(grid),
        u,
        excess,
        0.0,
        DEFAULT_ORDER,
        NewtonReport::default(),
    )
}
