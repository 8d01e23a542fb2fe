//! The radial model end `t >= t0`, where `t = -log ||S||^2`.
//!
//! On the model end the reference form splits as
//! `omega = a(t) omega0 + b(t) i dt ^ dbar t` with `a = t^(1/n)` and
//! `b = t^(1/n - 1) / n`. Since `omega0^n = 0` there, every radial quantity
//! reduces to an ODE in `t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{GridError, RadialField, RadialGrid};
use crate::quadrature::{self, QuadratureError, Tolerance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("complex dimension must be at least 1")]
    ZeroDimension,
    #[error("inner cut t0 must exceed 1, got {0}")]
    CutTooSmall(f64),
    #[error("forcing exponent N = {exponent} is not integrable: need N > 1 + 1/n = {min}")]
    NotIntegrable { exponent: f64, min: f64 },
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("t = {t} lies inside the cut t0 = {t0}")]
    Domain { t: f64, t0: f64 },
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("|w| = {0} exceeds pi")]
    ChartRadius(f64),
    #[error("mass quadrature failed: {0}")]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Radial forcing `f = log F`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForcingProfile {
    Zero,
    /// `A t^(-N)`
    Power {
        amplitude: f64,
        exponent: f64,
    },
    /// `A t^(-N) cos(kappa log t)`
    DampedOscillatory {
        amplitude: f64,
        exponent: f64,
        frequency: f64,
    },
}

impl ForcingProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ForcingProfile::Zero => 0.0,
            ForcingProfile::Power {
                amplitude,
                exponent,
            } => amplitude * t.powf(-exponent),
            ForcingProfile::DampedOscillatory {
                amplitude,
                exponent,
                frequency,
            } => amplitude * t.powf(-exponent) * (frequency * t.ln()).cos(),
        }
    }

    /// The decay exponent `N`, or `None` for the zero profile.
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            ForcingProfile::Zero => None,
            ForcingProfile::Power { exponent, .. }
            | ForcingProfile::DampedOscillatory { exponent, .. } => Some(exponent),
        }
    }

    pub fn amplitude(&self) -> f64 {
        match *self {
            ForcingProfile::Zero => 0.0,
            ForcingProfile::Power { amplitude, .. }
            | ForcingProfile::DampedOscillatory { amplitude, .. } => amplitude,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingProfile::Zero) || self.amplitude() == 0.0
    }

    /// `int_x^inf f(s) ds`, in closed form.
    fn linear_tail(&self, x: f64) -> f64 {
        match *self {
            ForcingProfile::Zero => 0.0,
            ForcingProfile::Power {
                amplitude,
                exponent,
            } => amplitude * x.powf(1.0 - exponent) / (exponent - 1.0),
            ForcingProfile::DampedOscillatory {
                amplitude,
                exponent,
                frequency,
            } => {
                // int_L^inf e^{-alpha y} cos(kappa y) dy with y = log s
                let alpha = exponent - 1.0;
                let l = x.ln();
                let (s, c) = (frequency * l).sin_cos();
                amplitude * (-alpha * l).exp() * (alpha * c - frequency * s)
                    / (alpha * alpha + frequency * frequency)
            }
        }
    }
}

/// The model end: dimension, inner cut, forcing and mass constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnd {
    dim: u32,
    t0: f64,
    profile: ForcingProfile,
    mass: f64,
    normalized: bool,
}

/// Absolute accuracy targeted for excess-volume integrals.
const TAIL_ABS_TOL: f64 = 1e-19;

impl ModelEnd {
    pub fn new(dim: u32, t0: f64, profile: ForcingProfile) -> Result<Self, ModelError> {
        if dim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        if !t0.is_finite() {
            return Err(ModelError::NonFinite {
                name: "t0",
                value: t0,
            });
        }
        if t0 <= 1.0 {
            return Err(ModelError::CutTooSmall(t0));
        }
        let min = 1.0 + 1.0 / dim as f64;
        match profile {
            ForcingProfile::Zero => {}
            ForcingProfile::Power {
                amplitude,
                exponent,
            }
            | ForcingProfile::DampedOscillatory {
                amplitude,
                exponent,
                ..
            } => {
                if !amplitude.is_finite() {
                    return Err(ModelError::NonFinite {
                        name: "amplitude",
                        value: amplitude,
                    });
                }
                if !exponent.is_finite() || exponent <= min {
                    return Err(ModelError::NotIntegrable { exponent, min });
                }
                if let ForcingProfile::DampedOscillatory { frequency, .. } = profile {
                    if !frequency.is_finite() {
                        return Err(ModelError::NonFinite {
                            name: "frequency",
                            value: frequency,
                        });
                    }
                }
            }
        }
        Ok(Self {
            dim,
            t0,
            profile,
            mass: 0.0,
            normalized: false,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn profile(&self) -> &ForcingProfile {
        &self.profile
    }

    /// The mass constant `c0`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn check_domain(&self, t: f64) -> Result<(), ModelError> {
        // Allow round-off at the cut itself.
        if t < self.t0 * (1.0 - 4.0 * f64::EPSILON) || t.is_nan() {
            Err(ModelError::Domain { t, t0: self.t0 })
        } else {
            Ok(())
        }
    }

    /// Base and fiber coefficients `(a, b)` of the reference form at `t`.
    pub fn reference_coefficients(&self, t: f64) -> Result<(f64, f64), ModelError> {
        self.check_domain(t)?;
        let inv_n = 1.0 / self.dim as f64;
        Ok((t.powf(inv_n), inv_n * t.powf(inv_n - 1.0)))
    }

    pub fn eval_f(&self, t: f64) -> Result<f64, ModelError> {
        self.check_domain(t)?;
        Ok(self.profile.eval(t))
    }

    /// `max |f|` over the nodes of `grid`.
    pub fn sup_forcing(&self, grid: &RadialGrid) -> f64 {
        grid.nodes()
            .iter()
            .fold(0.0, |m, &t| m.max(self.profile.eval(t).abs()))
    }

    /// Point beyond which `e^f - 1` is replaced by its linear part; the
    /// quadratic remainder `f^2 e^|f| / 2` integrates to below
    /// `TAIL_ABS_TOL` past it.
    fn linearization_cutoff(&self, from: f64) -> f64 {
        let Some(exponent) = self.profile.exponent() else {
            return from;
        };
        let amp = self.profile.amplitude().abs();
        if amp == 0.0 {
            return from;
        }
        let bound = |x: f64| {
            amp * amp * x.powf(1.0 - 2.0 * exponent) * (amp * x.powf(-exponent)).exp()
                / (2.0 * (2.0 * exponent - 1.0))
        };
        let mut x = from;
        while bound(x) > TAIL_ABS_TOL {
            x *= 2.0;
        }
        x
    }

    /// `int_t^inf (e^{f(s)} - 1) ds`: adaptive quadrature in `log s` up to
    /// the linearization cutoff, closed-form linear tail beyond it.
    pub fn excess_tail(&self, t: f64) -> Result<f64, ModelError> {
        self.check_domain(t)?;
        if self.profile.is_zero() {
            return Ok(0.0);
        }
        let cutoff = self.linearization_cutoff(t);
        let profile = self.profile;
        let body = quadrature::integrate(
            |y: f64| {
                let s = y.exp();
                s * profile.eval(s).exp_m1()
            },
            t.ln(),
            cutoff.ln(),
            Tolerance::new(TAIL_ABS_TOL, 1e-14),
        )?;
        Ok(body.value + profile.linear_tail(cutoff))
    }

    /// `int_a^b (e^{f(s)} - 1) ds` for `t0 <= a <= b`.
    pub fn excess_between(&self, a: f64, b: f64) -> Result<f64, ModelError> {
        self.check_domain(a)?;
        if self.profile.is_zero() {
            return Ok(0.0);
        }
        let profile = self.profile;
        Ok(quadrature::integrate(
            |s: f64| profile.eval(s).exp_m1(),
            a,
            b,
            Tolerance::new(TAIL_ABS_TOL, 1e-14),
        )?
        .value)
    }

    /// Returns a copy with `c0 = -int_{t0}^inf (e^f - 1) ds`, the radial
    /// form of the vanishing total excess volume.
    pub fn normalize_mass(&self) -> Result<ModelEnd, ModelError> {
        let mass = -self.excess_tail(self.t0)?;
        Ok(ModelEnd {
            mass,
            normalized: true,
            ..self.clone()
        })
    }

    /// `Delta_omega psi = (n-1) psi' / a + psi'' / b` for radial `psi`.
    pub fn laplacian_radial(&self, psi: &RadialField) -> Result<RadialField, ModelError> {
        self.check_domain(psi.grid().start())?;
        let d1 = psi.first_derivative();
        let d2 = psi.second_derivative();
        let n = self.dim as f64;
        Ok(d1.map(|t, p1| {
            let i = psi.nodes().partition_point(|&x| x < t);
            let p2 = d2.values()[i];
            (n - 1.0) * p1 * t.powf(-1.0 / n) + n * p2 * t.powf(1.0 - 1.0 / n)
        }))
    }

    /// Grid uniform in the quasi-coordinate radius `t^((n+1)/(2n))`.
    pub fn quasi_grid(&self, t_max: f64, cells: usize) -> Result<RadialGrid, ModelError> {
        Ok(RadialGrid::quasi(self.dim, self.t0, t_max, cells)?)
    }
}

/// A sample of the bounded-geometry factor in a quasi-coordinate chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryFactor {
    pub value: f64,
    /// `|grad_w|` of the factor, with `w` taken as a point of the real plane.
    pub gradient_norm: f64,
    /// `C` was below [`chart_threshold`]; the two-sided bound is not
    /// guaranteed for this sample.
    pub below_threshold: bool,
}

fn chart_exponent(dim: u32) -> f64 {
    2.0 * dim as f64 / (dim as f64 + 1.0)
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::NonPositive { name, value })
    }
}

/// Lower bound for `Re((w + C)^p)` over the chart disc `|w| <= pi`.
fn chart_real_part_floor(p: f64, c: f64) -> f64 {
    if c <= PI {
        return 0.0;
    }
    let angle = p * (PI / c).asin();
    if angle >= 0.5 * PI {
        return 0.0;
    }
    (c - PI).powf(p) * angle.cos()
}

/// Smallest chart offset `C` for which `(2 Re((w+C)^p))^(-delta) <= beta`
/// on the whole disc `|w| <= pi`, so that the factor stays in
/// `[1/(2 beta), 3/(2 beta)]`.
pub fn chart_threshold(dim: u32, beta: f64, delta: f64) -> Result<f64, ModelError> {
    check_positive("beta", beta)?;
    check_positive("delta", delta)?;
    if dim == 0 {
        return Err(ModelError::ZeroDimension);
    }
    let p = chart_exponent(dim);
    let ok = |c: f64| {
        let floor = chart_real_part_floor(p, c);
        floor > 0.0 && (2.0 * floor).powf(-delta) <= beta
    };
    let mut lo = PI;
    let mut hi = 2.0 * PI;
    while !ok(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// The pulled-back weight `(beta + (2 Re((w + C)^p))^(-delta))^(-1)`
/// with `p = 2n/(n+1)`.
pub fn bounded_geometry_factor(
    dim: u32,
    beta: f64,
    delta: f64,
    c: f64,
    w: Complex64,
) -> Result<GeometryFactor, ModelError> {
    let threshold = chart_threshold(dim, beta, delta)?;
    check_positive("C", c)?;
    if w.norm() > PI * (1.0 + 4.0 * f64::EPSILON) {
        return Err(ModelError::ChartRadius(w.norm()));
    }
    let p = chart_exponent(dim);
    let shifted = w + c;
    let g = 2.0 * shifted.powf(p).re;
    let value = 1.0 / (beta + g.powf(-delta));
    // |grad g| = 2 |d/dw (w + C)^p| since (w + C)^p is holomorphic
    let gradient_norm =
        value * value * delta * g.powf(-delta - 1.0) * 2.0 * p * shifted.norm().powf(p - 1.0);
    Ok(GeometryFactor {
        value,
        gradient_norm,
        below_threshold: c < threshold,
    })
}
