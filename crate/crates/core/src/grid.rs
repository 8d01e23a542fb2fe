//! Graded grids in the radial coordinate `t` and fields sampled on them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fewest cells a grid may have.
pub const MIN_CELLS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least {MIN_CELLS} cells, got {0}")]
    TooFewCells(usize),
    #[error("grid end {t_max} must exceed start {t_min}")]
    EmptyRange { t_min: f64, t_max: f64 },
    #[error("grid start must be positive and finite, got {0}")]
    BadStart(f64),
    #[error("nodes must be strictly increasing (violated at index {0})")]
    NotIncreasing(usize),
    #[error("field has {values} values but the grid has {nodes} nodes")]
    LengthMismatch { values: usize, nodes: usize },
    #[error("unknown grading `{0}` (expected uniform_t, uniform_quasi or geometric)")]
    UnknownGrading(String),
}

/// How nodes are distributed between the two ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    /// Uniform in `t`.
    UniformT,
    /// Uniform in the quasi-coordinate radius `t^((n+1)/(2n))`.
    UniformQuasi,
    /// Uniform in `log t`.
    Geometric,
    /// Supplied explicitly.
    Custom,
}

impl Grading {
    pub fn as_str(self) -> &'static str {
        match self {
            Grading::UniformT => "uniform_t",
            Grading::UniformQuasi => "uniform_quasi",
            Grading::Geometric => "geometric",
            Grading::Custom => "custom",
        }
    }
}

impl fmt::Display for Grading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grading {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform_t" => Ok(Grading::UniformT),
            "uniform_quasi" => Ok(Grading::UniformQuasi),
            "geometric" => Ok(Grading::Geometric),
            other => Err(GridError::UnknownGrading(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    grading: Grading,
}

impl RadialGrid {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, GridError> {
        Self::checked(nodes, Grading::Custom)
    }

    fn checked(nodes: Vec<f64>, grading: Grading) -> Result<Self, GridError> {
        if nodes.len() < MIN_CELLS + 1 {
            return Err(GridError::TooFewCells(nodes.len().saturating_sub(1)));
        }
        if !(nodes[0].is_finite() && nodes[0] > 0.0) {
            return Err(GridError::BadStart(nodes[0]));
        }
        if let Some(i) = nodes.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(GridError::NotIncreasing(i + 1));
        }
        Ok(Self { nodes, grading })
    }

    fn mapped(
        t_min: f64,
        t_max: f64,
        cells: usize,
        grading: Grading,
        forward: impl Fn(f64) -> f64,
        inverse: impl Fn(f64) -> f64,
    ) -> Result<Self, GridError> {
        if !(t_min.is_finite() && t_min > 0.0) {
            return Err(GridError::BadStart(t_min));
        }
        if !(t_max > t_min) {
            return Err(GridError::EmptyRange { t_min, t_max });
        }
        if cells < MIN_CELLS {
            return Err(GridError::TooFewCells(cells));
        }
        let (s0, s1) = (forward(t_min), forward(t_max));
        let mut nodes: Vec<f64> = (0..=cells)
            .map(|k| inverse(s0 + (s1 - s0) * k as f64 / cells as f64))
            .collect();
        // Pin the ends so round-off in the map does not move them.
        nodes[0] = t_min;
        nodes[cells] = t_max;
        Self::checked(nodes, grading)
    }

    pub fn uniform(t_min: f64, t_max: f64, cells: usize) -> Result<Self, GridError> {
        Self::mapped(t_min, t_max, cells, Grading::UniformT, |t| t, |s| s)
    }

    /// Nodes uniform in `sigma = t^((n+1)/(2n))`.
    pub fn quasi(dim: u32, t_min: f64, t_max: f64, cells: usize) -> Result<Self, GridError> {
        let p = (dim as f64 + 1.0) / (2.0 * dim as f64);
        Self::mapped(
            t_min,
            t_max,
            cells,
            Grading::UniformQuasi,
            |t| t.powf(p),
            |s| s.powf(1.0 / p),
        )
    }

    pub fn geometric(t_min: f64, t_max: f64, cells: usize) -> Result<Self, GridError> {
        Self::mapped(t_min, t_max, cells, Grading::Geometric, f64::ln, f64::exp)
    }

    pub fn with_grading(
        grading: Grading,
        dim: u32,
        t_min: f64,
        t_max: f64,
        cells: usize,
    ) -> Result<Self, GridError> {
        match grading {
            Grading::UniformT => Self::uniform(t_min, t_max, cells),
            Grading::UniformQuasi => Self::quasi(dim, t_min, t_max, cells),
            Grading::Geometric | Grading::Custom => Self::geometric(t_min, t_max, cells),
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn grading(&self) -> Grading {
        self.grading
    }

    /// Number of cells `M`; there are `M + 1` nodes.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Finite-difference weights for the `order`-th derivative at `x0` on the
/// stencil `xs` (Fornberg's recursion).
pub fn fd_weights(x0: f64, xs: &[f64], order: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(
        order < n,
        "stencil of {n} points cannot give derivative {order}"
    );
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// A real function of `t` sampled on a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                values: values.len(),
                nodes: grid.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| f(t, v))
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn derivative(&self, order: usize) -> Self {
        let t = self.grid.nodes();
        let last = t.len() - 1;
        // One-sided ends need one extra point for second order.
        let end_width = order + 2;
        let values = (0..=last)
            .map(|i| {
                let range = if i == 0 {
                    0..end_width
                } else if i == last {
                    last + 1 - end_width..last + 1
                } else {
                    i - 1..i + 2
                };
                let w = fd_weights(t[i], &t[range.clone()], order);
                w.iter().zip(&self.values[range]).map(|(w, v)| w * v).sum()
            })
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Centered three-point first derivative, one-sided at the ends.
    pub fn first_derivative(&self) -> Self {
        self.derivative(1)
    }

    /// Centered three-point second derivative; four-point one-sided at the ends.
    pub fn second_derivative(&self) -> Self {
        self.derivative(2)
    }
}
