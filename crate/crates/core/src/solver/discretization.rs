//! Collocation of the first-order system on a [`RadialGrid`].
//!
//! Unknowns are interleaved as `[u_0, g_0, u_1, g_1, ...]` with `g = h - t`.
//! Each cell contributes two equations,
//!
//! ```text
//! (g_{i+1} - g_i) / dt = avg_q expm1(f + eps U)
//! (u_{i+1} - u_i) / dt = avg_q ((t + G)^(1/n) - t^(1/n))
//! ```
//!
//! where `avg_q` is a Gauss rule on the cell and `U`, `G` interpolate the
//! nodal values on a `K`-node stencil. `K = 2` with one Gauss point is the
//! midpoint rule. The boundary rows are `g_0 = c0` and `u_M = 0`.

use crate::banded::BandMatrix;
use crate::grid::RadialGrid;
use crate::model::{ModelEnd, ModelError};
use crate::quadrature::gauss_legendre;

use super::{Solution, SolverError};

struct QuadPoint {
    t: f64,
    /// Normalized so the weights of a cell sum to 1.
    weight: f64,
    forcing: f64,
    root: f64,
    lagrange: Vec<f64>,
}

struct Cell {
    stencil_start: usize,
    inv_width: f64,
    points: Vec<QuadPoint>,
}

/// Precomputed stencils and quadrature for one grid, model and order.
pub struct Discretization {
    dim: u32,
    mass: f64,
    nodes: Vec<f64>,
    cells: Vec<Cell>,
    kl: usize,
    ku: usize,
}

fn lagrange_weights(xs: &[f64], x: f64) -> Vec<f64> {
    (0..xs.len())
        .map(|j| {
            xs.iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| (x - xk) / (xs[j] - xk))
                .product()
        })
        .collect()
}

impl Discretization {
    pub fn new(model: &ModelEnd, grid: &RadialGrid, order: usize) -> Result<Self, SolverError> {
        if ![2, 4, 6].contains(&order) {
            return Err(SolverError::InvalidConfig(format!(
                "order must be 2, 4 or 6, got {order}"
            )));
        }
        if grid.start() < model.t0() {
            return Err(ModelError::Domain {
                t: grid.start(),
                t0: model.t0(),
            }
            .into());
        }
        let stencil = order;
        let (gx, gw) = gauss_legendre(order / 2);
        let nodes = grid.nodes().to_vec();
        let m = grid.cells();
        let inv_n = 1.0 / model.dim() as f64;
        let profile = *model.profile();

        let cells: Vec<Cell> = (0..m)
            .map(|i| {
                let start = (i + 1).saturating_sub(stencil / 2).min(m + 1 - stencil);
                let xs = &nodes[start..start + stencil];
                let (a, b) = (nodes[i], nodes[i + 1]);
                let points = gx
                    .iter()
                    .zip(gw)
                    .map(|(&x, &w)| {
                        let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                        QuadPoint {
                            t,
                            weight: 0.5 * w,
                            forcing: profile.eval(t),
                            root: t.powf(inv_n),
                            lagrange: lagrange_weights(xs, t),
                        }
                    })
                    .collect();
                Cell {
                    stencil_start: start,
                    inv_width: 1.0 / (b - a),
                    points,
                }
            })
            .collect();

        // Band limits from the actual sparsity pattern.
        let (mut kl, mut ku) = (1, 1);
        for (i, cell) in cells.iter().enumerate() {
            let first_col = 2 * cell.stencil_start.min(i);
            let last_col = 2 * (cell.stencil_start + stencil - 1).max(i + 1) + 1;
            for row in [1 + 2 * i, 2 + 2 * i] {
                kl = kl.max(row.saturating_sub(first_col));
                ku = ku.max(last_col.saturating_sub(row));
            }
        }

        Ok(Self {
            dim: model.dim(),
            mass: model.mass(),
            nodes,
            cells,
            kl,
            ku,
        })
    }

    pub fn unknowns(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[cfg(test)]
    pub(crate) fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn check_positivity(&self, x: &[f64]) -> Result<(), SolverError> {
        for (i, &t) in self.nodes.iter().enumerate() {
            let g = x[2 * i + 1];
            if !(t + g > 0.0) {
                return Err(SolverError::Positivity { t, h: t + g });
            }
        }
        Ok(())
    }

    fn interpolate(&self, cell: &Cell, p: &QuadPoint, x: &[f64]) -> (f64, f64) {
        let mut u = 0.0;
        let mut g = 0.0;
        for (j, &l) in p.lagrange.iter().enumerate() {
            let k = cell.stencil_start + j;
            u += l * x[2 * k];
            g += l * x[2 * k + 1];
        }
        (u, g)
    }

    /// Residual of the discrete system at the interleaved state `x`.
    pub fn residual(&self, x: &[f64], eps: f64) -> Result<Vec<f64>, SolverError> {
        self.check_positivity(x)?;
        let inv_n = 1.0 / self.dim as f64;
        let m = self.cells.len();
        let mut r = vec![0.0; self.unknowns()];
        r[0] = x[1] - self.mass;
        for (i, cell) in self.cells.iter().enumerate() {
            let mut src_h = 0.0;
            let mut src_u = 0.0;
            for p in &cell.points {
                let (u, g) = self.interpolate(cell, p, x);
                let rel = g / p.t;
                if !(1.0 + rel > 0.0) {
                    return Err(SolverError::Positivity { t: p.t, h: p.t + g });
                }
                src_h += p.weight * (p.forcing + eps * u).exp_m1();
                src_u += p.weight * p.root * (inv_n * rel.ln_1p()).exp_m1();
            }
            r[1 + 2 * i] = (x[2 * i + 3] - x[2 * i + 1]) * cell.inv_width - src_h;
            r[2 + 2 * i] = (x[2 * i + 2] - x[2 * i]) * cell.inv_width - src_u;
        }
        r[2 * m + 1] = x[2 * m];
        Ok(r)
    }

    /// Exact Jacobian of [`Discretization::residual`].
    pub fn jacobian(&self, x: &[f64], eps: f64) -> Result<BandMatrix, SolverError> {
        self.check_positivity(x)?;
        let inv_n = 1.0 / self.dim as f64;
        let m = self.cells.len();
        let mut jac = BandMatrix::zeros(self.unknowns(), self.kl, self.ku);
        let put = |jac: &mut BandMatrix, r: usize, c: usize, v: f64| {
            jac.add(r, c, v)
                .expect("stencil entry inside computed band");
        };
        put(&mut jac, 0, 1, 1.0);
        for (i, cell) in self.cells.iter().enumerate() {
            let (rh, ru) = (1 + 2 * i, 2 + 2 * i);
            put(&mut jac, rh, 2 * i + 3, cell.inv_width);
            put(&mut jac, rh, 2 * i + 1, -cell.inv_width);
            put(&mut jac, ru, 2 * i + 2, cell.inv_width);
            put(&mut jac, ru, 2 * i, -cell.inv_width);
            for p in &cell.points {
                let (u, g) = self.interpolate(cell, p, x);
                let rel = g / p.t;
                if !(1.0 + rel > 0.0) {
                    return Err(SolverError::Positivity { t: p.t, h: p.t + g });
                }
                // d/dU of exp(f + eps U) and d/dG of (t + G)^(1/n)
                let du = p.weight * eps * (p.forcing + eps * u).exp();
                let dg = p.weight * inv_n * p.root / p.t * ((inv_n - 1.0) * rel.ln_1p()).exp();
                for (j, &l) in p.lagrange.iter().enumerate() {
                    let k = cell.stencil_start + j;
                    if du != 0.0 {
                        put(&mut jac, rh, 2 * k, -du * l);
                    }
                    put(&mut jac, ru, 2 * k + 1, -dg * l);
                }
            }
        }
        put(&mut jac, 2 * m + 1, 2 * m, 1.0);
        Ok(jac)
    }
}

pub(crate) fn interleave(u: &[f64], g: &[f64]) -> Vec<f64> {
    u.iter().zip(g).flat_map(|(&a, &b)| [a, b]).collect()
}

pub(crate) fn split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        x.iter().step_by(2).copied().collect(),
        x.iter().skip(1).step_by(2).copied().collect(),
    )
}

fn state_of(sol: &Solution) -> Vec<f64> {
    interleave(sol.u().values(), sol.excess().values())
}

/// Residual of `sol` in the discrete `eps`-system (two boundary rows plus
/// two rows per cell), using the collocation order recorded in `sol`.
pub fn residual_eps(model: &ModelEnd, sol: &Solution, eps: f64) -> Result<Vec<f64>, SolverError> {
    let disc = Discretization::new(model, sol.grid(), sol.order())?;
    disc.residual(&state_of(sol), eps)
}

/// Banded Jacobian of [`residual_eps`] with respect to the interleaved
/// unknowns `(u_i, h_i)`.
pub fn assemble_jacobian(
    model: &ModelEnd,
    sol: &Solution,
    eps: f64,
) -> Result<BandMatrix, SolverError> {
    let disc = Discretization::new(model, sol.grid(), sol.order())?;
    disc.jacobian(&state_of(sol), eps)
}
