//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.
//!
//! Used for the mass normalization and for the closed-form oracle of the
//! unperturbed equation. The error estimate follows the usual QUADPACK
//! rescaling of `|K15 - G7|`.

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("integration bounds must be finite, got [{a}, {b}]")]
    InvalidBounds { a: f64, b: f64 },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("subdivision limit {limit} reached with error estimate {error:e} (value {value:e})")]
    SubdivisionLimit {
        limit: usize,
        value: f64,
        error: f64,
    },
}

/// Requested accuracy: the estimate is accepted once
/// `error <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-15,
            rel: 1e-13,
            max_subdivisions: 2000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// Error estimate is pinned at the round-off floor; bisecting will not
    /// reduce it.
    at_floor: bool,
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> (f64, bool) {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err >= scaled {
            return (min_err, true);
        }
    }
    (scaled, false)
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment, QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite { x })
        }
    };

    let fc = eval(center)?;
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let scale = half.abs();
    let (error, at_floor) = rescale_error((res_k - res_g) * half, res_abs * scale, res_asc * scale);
    Ok(Segment {
        a,
        b,
        value: res_k * half,
        error,
        at_floor,
    })
}

/// Integrates `f` over `[a, b]` by repeatedly bisecting the segment with the
/// largest error estimate.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Estimate, QuadratureError> {
    if !a.is_finite() || !b.is_finite() {
        return Err(QuadratureError::InvalidBounds { a, b });
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }

    let mut segments = vec![kronrod(&f, a, b)?];
    let mut evaluations = 15;
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let error: f64 = segments.iter().map(|s| s.error).sum();
        let reducible: f64 = segments
            .iter()
            .filter(|s| !s.at_floor)
            .map(|s| s.error)
            .sum();
        let target = tol.abs.max(tol.rel * value.abs());
        if error <= target || reducible <= target {
            return Ok(Estimate {
                value,
                error,
                evaluations,
            });
        }
        if segments.len() >= tol.max_subdivisions {
            return Err(QuadratureError::SubdivisionLimit {
                limit: tol.max_subdivisions,
                value,
                error,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.at_floor)
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| {
                if s.error > acc.1 {
                    (i, s.error)
                } else {
                    acc
                }
            });
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        // Interval no longer resolvable in floating point.
        if mid <= seg.a.min(seg.b) || mid >= seg.a.max(seg.b) {
            segments.push(Segment {
                error: 0.0,
                at_floor: true,
                ..seg
            });
            continue;
        }
        segments.push(kronrod(&f, seg.a, mid)?);
        segments.push(kronrod(&f, mid, seg.b)?);
        evaluations += 30;
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` for 1 to 4 points.
pub fn gauss_legendre(points: usize) -> (&'static [f64], &'static [f64]) {
    const X1: [f64; 1] = [0.0];
    const W1: [f64; 1] = [2.0];
    const X2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];
    const W2: [f64; 2] = [1.0, 1.0];
    const X3: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
    const W3: [f64; 3] = [
        0.555_555_555_555_555_6,
        0.888_888_888_888_889,
        0.555_555_555_555_555_6,
    ];
    const X4: [f64; 4] = [
        -0.861_136_311_594_052_6,
        -0.339_981_043_584_856_3,
        0.339_981_043_584_856_3,
        0.861_136_311_594_052_6,
    ];
    const W4: [f64; 4] = [
        0.347_854_845_137_453_9,
        0.652_145_154_862_546_1,
        0.652_145_154_862_546_1,
        0.347_854_845_137_453_9,
    ];
    match points {
        1 => (&X1, &W1),
        2 => (&X2, &W2),
        3 => (&X3, &W3),
        4 => (&X4, &W4),
        _ => panic!("gauss_legendre supports 1..=4 points, got {points}"),
    }
}
