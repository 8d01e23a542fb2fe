//! Power-law fits `|v(t)| ~ C t^p` on dyadic windows.

use serde::{Deserialize, Serialize};

use crate::grid::RadialField;

/// Least-squares power law on one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    /// Signed prefactor: the fit is `v ~ constant * t^exponent`.
    pub constant: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    TooFewNodes,
    SignChange,
    Zero,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFit {
    Fitted(DecayFit),
    Skipped {
        window: (f64, f64),
        reason: SkipReason,
    },
}

impl WindowFit {
    pub fn fit(&self) -> Option<&DecayFit> {
        match self {
            WindowFit::Fitted(f) => Some(f),
            WindowFit::Skipped { .. } => None,
        }
    }
}

/// Windows `[s, ratio*s]` with `s = start * step^k`, restricted to
/// `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicWindows {
    /// Defaults to the first grid node.
    pub start: Option<f64>,
    /// Defaults to the last grid node.
    pub end: Option<f64>,
    pub ratio: f64,
    pub step: f64,
    pub min_nodes: usize,
}

impl Default for DyadicWindows {
    fn default() -> Self {
        Self {
            start: None,
            end: None,
            ratio: 4.0,
            step: 2.0,
            min_nodes: 8,
        }
    }
}

impl DyadicWindows {
    pub fn within(start: f64, end: f64) -> Self {
        Self {
            start: Some(start),
            end: Some(end),
            ..Self::default()
        }
    }
}

/// All window fits in increasing `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFits {
    pub windows: Vec<WindowFit>,
}

impl DecayFits {
    /// The last fitted window, read as the asymptotic rate.
    pub fn asymptotic(&self) -> Option<&DecayFit> {
        self.windows.iter().rev().find_map(WindowFit::fit)
    }

    pub fn fitted(&self) -> impl Iterator<Item = &DecayFit> {
        self.windows.iter().filter_map(WindowFit::fit)
    }
}

/// Ordinary least squares of `y` on `x`: `(slope, intercept, r^2)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

/// Fits `log |v|` against `log t` on the given nodes. Fails with the reason
/// when the values are not single-signed and nonzero.
pub fn power_law_fit(t: &[f64], v: &[f64]) -> Result<DecayFit, SkipReason> {
    if t.len() < 2 {
        return Err(SkipReason::TooFewNodes);
    }
    let window = (t[0], t[t.len() - 1]);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SkipReason::NonFinite);
    }
    if v.contains(&0.0) {
        return Err(SkipReason::Zero);
    }
    let sign = v[0].signum();
    if v.iter().any(|x| x.signum() != sign) {
        return Err(SkipReason::SignChange);
    }
    let x: Vec<f64> = t.iter().map(|s| s.ln()).collect();
    let y: Vec<f64> = v.iter().map(|s| s.abs().ln()).collect();
    let (exponent, intercept, r_squared) = least_squares(&x, &y);
    Ok(DecayFit {
        exponent,
        constant: sign * intercept.exp(),
        window,
        r_squared,
    })
}

/// Power-law fits of `field` on each dyadic window.
pub fn fit_decay(field: &RadialField, windows: &DyadicWindows) -> DecayFits {
    let nodes = field.nodes();
    let values = field.values();
    let start = windows.start.unwrap_or(nodes[0]).max(nodes[0]);
    let end = windows
        .end
        .unwrap_or(nodes[nodes.len() - 1])
        .min(nodes[nodes.len() - 1]);
    // Relative slack so a window ending exactly on the last node is kept.
    let slack = 1.0 + 1e-12;
    let mut out = Vec::new();
    let mut lo = start;
    while windows.ratio * lo <= end * slack {
        let hi = (windows.ratio * lo).min(end);
        let first = nodes.partition_point(|&t| t < lo / slack);
        let last = nodes.partition_point(|&t| t <= hi * slack);
        let window = (lo, hi);
        let fit = if last - first < windows.min_nodes {
            Err(SkipReason::TooFewNodes)
        } else {
            power_law_fit(&nodes[first..last], &values[first..last])
        };
        out.push(match fit {
            Ok(f) => WindowFit::Fitted(DecayFit { window, ..f }),
            Err(reason) => WindowFit::Skipped { window, reason },
        });
        lo *= windows.step;
    }
    DecayFits { windows: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grading, RadialGrid};
    use std::sync::Arc;

    fn field(grading: Grading, f: impl Fn(f64) -> f64) -> RadialField {
        let grid = RadialGrid::with_grading(grading, 2, 2.0, 4000.0, 1024).unwrap();
        RadialField::from_fn(Arc::new(grid), f)
    }

    #[test]
    fn monomials_recovered_on_every_grading() {
        for grading in [Grading::UniformT, Grading::UniformQuasi, Grading::Geometric] {
            for p in [-2.0, -0.5, -1.0 / 6.0, 1.5] {
                let fits = fit_decay(
                    &field(grading, |t| -3.0 * t.powf(p)),
                    &DyadicWindows::default(),
                );
                assert!(fits.fitted().count() >= 5);
                for f in fits.fitted() {
                    assert!((f.exponent - p).abs() <= 1e-10, "{grading:?} {p} {f:?}");
                    assert!((f.constant + 3.0).abs() <= 1e-9);
                    assert!(f.r_squared >= 1.0 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn perturbed_monomial_stays_in_band() {
        let fits = fit_decay(
            &field(Grading::Geometric, |t| t.powi(-2) * (1.0 + 1.0 / t)),
            &DyadicWindows::default(),
        );
        for f in fits.fitted().filter(|f| f.window.0 >= 100.0) {
            assert!(f.exponent > -2.1 && f.exponent < -2.0, "{f:?}");
        }
        let last = fits.asymptotic().unwrap();
        assert!(last.window.1 <= 4000.0 && last.window.1 > 1000.0);
    }

    #[test]
    fn sign_changes_and_zeros_are_skipped() {
        let fits = fit_decay(
            &field(Grading::Geometric, |t| (t.ln() * 3.0).cos() / t),
            &DyadicWindows::default(),
        );
        assert!(fits.windows.iter().any(|w| matches!(
            w,
            WindowFit::Skipped {
                reason: SkipReason::SignChange,
                ..
            }
        )));
        let zero = fit_decay(
            &field(Grading::Geometric, |_| 0.0),
            &DyadicWindows::default(),
        );
        assert!(zero.asymptotic().is_none());
        assert!(zero.windows.iter().all(|w| matches!(
            w,
            WindowFit::Skipped {
                reason: SkipReason::Zero,
                ..
            }
        )));
    }

    #[test]
    fn sparse_windows_are_flagged() {
        let grid = Arc::new(RadialGrid::geometric(2.0, 4000.0, 16).unwrap());
        let fits = fit_decay(
            &RadialField::from_fn(grid, |t| 1.0 / t),
            &DyadicWindows::default(),
        );
        assert!(fits.windows.iter().all(|w| matches!(
            w,
            WindowFit::Skipped {
                reason: SkipReason::TooFewNodes,
                ..
            }
        )));
    }

    #[test]
    fn restricted_range() {
        let f = field(Grading::Geometric, |t| t.powi(-3));
        let fits = fit_decay(&f, &DyadicWindows::within(10.0, 1000.0));
        let first = fits.windows.first().unwrap();
        let last = fits.asymptotic().unwrap();
        assert!(matches!(first, WindowFit::Fitted(d) if d.window.0 == 10.0));
        assert!(last.window.1 <= 1000.0);
    }
}
