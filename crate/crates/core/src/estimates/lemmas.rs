//! Pointwise checks of the finite-dimensional eigenvalue lemmas.
//!
//! Each check returns the ratio of the attained quantity to the allowed
//! one, so a sample passes iff the ratio is at most 1. Inputs outside the
//! lemma's hypotheses are rejected with [`EstimateError::Infeasible`].

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::EstimateError;

/// Tolerance on `|sum log a_i|` before a tuple is projected onto
/// `prod a_i = 1`.
pub const PROJECTION_TOL: f64 = 1e-9;

/// Tolerance on `||A - A^*||_max` for [`hermitian_entry_bound`].
pub const HERMITIAN_TOL: f64 = 1e-12;

fn infeasible(msg: impl Into<String>) -> EstimateError {
    EstimateError::Infeasible(msg.into())
}

fn bisect(mut lo: f64, mut hi: f64, above: impl Fn(f64) -> bool) -> f64 {
    // `above(lo)` is false and `above(hi)` is true.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest and largest entry over `{a > 0 : sum a <= n(1+eps), prod a = 1}`.
///
/// The extremes sit at `(x, y, ..., y)` with `y = x^(-1/(n-1))`, where
/// `x + (n-1) x^(-1/(n-1)) = n(1+eps)`.
pub fn sqrteps_extremes(dim: usize, eps: f64) -> (f64, f64) {
    if dim <= 1 {
        return (1.0, 1.0);
    }
    let m = dim as f64 - 1.0;
    let target = dim as f64 * (1.0 + eps);
    let phi = |x: f64| x + m * x.powf(-1.0 / m);
    let upper = bisect(1.0, target, |x| phi(x) > target);
    // phi decreases on (0, 1); search in log x.
    let mut lo: f64 = -1.0;
    while phi(lo.exp()) <= target {
        lo *= 2.0;
    }
    let lower = bisect(lo, 0.0, |y| phi(y.exp()) <= target).exp();
    (lower, upper)
}

/// The sharp constant in `(1 + C_n sqrt(eps))^(-1) <= a_i <= 1 + C_n sqrt(eps)`
/// for `0 < eps < 1`; the worst case is `eps -> 1`.
pub fn sqrteps_constant(dim: usize) -> f64 {
    let (lo, hi) = sqrteps_extremes(dim, 1.0);
    (hi - 1.0).max(1.0 / lo - 1.0)
}

fn check_eps(eps: f64) -> Result<(), EstimateError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(EstimateError::InvalidInput(format!(
            "eps must lie in (0, 1), got {eps}"
        )))
    }
}

fn check_positive_tuple(a: &[f64]) -> Result<(), EstimateError> {
    if a.is_empty() {
        return Err(EstimateError::InvalidInput("empty tuple".into()));
    }
    if a.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
        return Err(EstimateError::InvalidInput(
            "entries must be positive and finite".into(),
        ));
    }
    Ok(())
}

/// Rescales `a` onto `prod a = 1` when it is within [`PROJECTION_TOL`].
pub fn project_unit_product(a: &[f64]) -> Result<Vec<f64>, EstimateError> {
    check_positive_tuple(a)?;
    let log_prod: f64 = a.iter().map(|x| x.ln()).sum();
    if log_prod.abs() > PROJECTION_TOL {
        return Err(infeasible(format!(
            "product constraint violated: log prod a = {log_prod:e}"
        )));
    }
    let scale = (-log_prod / a.len() as f64).exp();
    Ok(a.iter().map(|x| x * scale).collect())
}

/// Ratio of `max_i max(a_i - 1, 1/a_i - 1)` to `C_n sqrt(eps)`.
pub fn check_sqrteps(a: &[f64], eps: f64) -> Result<f64, EstimateError> {
    check_eps(eps)?;
    let a = project_unit_product(a)?;
    let n = a.len() as f64;
    let sum: f64 = a.iter().sum();
    if sum > n * (1.0 + eps) * (1.0 + 4.0 * f64::EPSILON) {
        return Err(infeasible(format!(
            "sum constraint violated: {sum} > {}",
            n * (1.0 + eps)
        )));
    }
    let deviation = a
        .iter()
        .map(|&x| (x - 1.0).max(1.0 / x - 1.0))
        .fold(0.0_f64, f64::max);
    let allowed = sqrteps_constant(a.len()) * eps.sqrt();
    if deviation <= 0.0 {
        return Ok(0.0);
    }
    Ok(deviation / allowed)
}

/// `sum (sqrt a_i - 1)^2 + 2 (sum sqrt a_i - n (prod a)^(1/(2n))) - n eps`;
/// nonpositive on the lemma's feasible set.
pub fn sqrteps_proof_inequality(a: &[f64], eps: f64) -> f64 {
    let n = a.len() as f64;
    let roots: Vec<f64> = a.iter().map(|x| x.sqrt()).collect();
    let squares: f64 = roots.iter().map(|r| (r - 1.0).powi(2)).sum();
    let geometric = (a.iter().map(|x| x.ln()).sum::<f64>() / (2.0 * n)).exp();
    let gap = roots.iter().sum::<f64>() - n * geometric;
    squares + 2.0 * gap - n * eps
}

/// `C'` with `|mu_i| <= C' t^(-beta/2)` whenever `prod(1 + mu) = e^f`,
/// `|f| <= t^(-beta)`, `sum mu <= C t^(-beta)` and `t >= 1`.
///
/// Rescaling by `e^(-f/n)` puts `1 + mu` on the unit-product set with
/// `eps <= e^(1/n) (1 + C) t^(-beta) / n`, and [`sqrteps_constant`] bounds
/// the deviation there.
pub fn pinch_constant(dim: usize, c: f64) -> f64 {
    let n = dim as f64;
    let e = (1.0 / n).exp();
    e * (sqrteps_constant(dim) * (e * (1.0 + c) / n).sqrt() + 1.0 / n)
}

/// Ratio of `max |mu_i|` to `C' t^(-beta/2)` (see [`pinch_constant`]).
pub fn pinch_from_laplacian(
    mu: &[f64],
    f_val: f64,
    c: f64,
    beta: f64,
    t: f64,
) -> Result<f64, EstimateError> {
    if mu.is_empty() {
        return Err(EstimateError::InvalidInput("empty tuple".into()));
    }
    if !(c > 0.0 && beta > 0.0 && t >= 1.0 && c.is_finite() && beta.is_finite() && t.is_finite()) {
        return Err(EstimateError::InvalidInput(format!(
            "need C > 0, beta > 0, t >= 1; got C = {c}, beta = {beta}, t = {t}"
        )));
    }
    if mu.iter().any(|&m| !(m.is_finite() && 1.0 + m > 0.0)) {
        return Err(infeasible("1 + mu_i must be positive"));
    }
    let n = mu.len() as f64;
    let decay = t.powf(-beta);
    if f_val.abs() > decay {
        return Err(infeasible(format!(
            "|f| = {} exceeds t^-beta = {decay}",
            f_val.abs()
        )));
    }
    let log_prod: f64 = mu.iter().map(|m| m.ln_1p()).sum();
    if (log_prod - f_val).abs() > PROJECTION_TOL {
        return Err(infeasible(format!(
            "product constraint violated: log prod(1+mu) - f = {:e}",
            log_prod - f_val
        )));
    }
    let sum: f64 = mu.iter().sum();
    if sum > c * decay * (1.0 + 1e-12) + 4.0 * f64::EPSILON * n {
        return Err(infeasible(format!(
            "trace constraint violated: sum mu = {sum:e} > {:e}",
            c * decay
        )));
    }
    let eps = (-f_val / n).exp() * (1.0 + c * decay / n) - 1.0;
    if eps >= 1.0 {
        return Err(infeasible(format!(
            "rescaled tuple has eps = {eps} >= 1, outside the lemma"
        )));
    }
    let worst = mu.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    Ok(worst / (pinch_constant(mu.len(), c) * t.powf(-0.5 * beta)))
}

fn mat_vec(dim: usize, a: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    (0..dim)
        .map(|i| (0..dim).map(|j| a[i * dim + j] * x[j]).sum())
        .collect()
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `sup |(x, Ax)| / |x|^2` for Hermitian `A` (row-major): the best of `2n^2`
/// random unit vectors, refined by power iteration to relative change
/// `1e-10`. Both stages only increase a lower bound of the true norm.
pub fn operator_norm(dim: usize, a: &[Complex64], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    let mut best_x: Vec<Complex64> = Vec::new();
    for _ in 0..2 * dim * dim {
        let x: Vec<Complex64> = (0..dim)
            .map(|_| {
                Complex64::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                )
            })
            .collect();
        let len = norm(&x);
        if len == 0.0 {
            continue;
        }
        let x: Vec<Complex64> = x.iter().map(|z| z / len).collect();
        let ax = mat_vec(dim, a, &x);
        let q: Complex64 = x.iter().zip(&ax).map(|(u, v)| u.conj() * v).sum();
        if q.norm() >= best || best_x.is_empty() {
            best = q.norm();
            best_x = x;
        }
    }
    // ||A x_k|| increases monotonically to the spectral radius; with
    // geometric convergence the remaining gap is about d q / (1 - q) for
    // successive increments d and contraction q.
    let mut x = best_x;
    let mut estimate = 0.0_f64;
    let mut last_step = f64::INFINITY;
    for k in 0..100_000 {
        let y = mat_vec(dim, a, &x);
        let len = norm(&y);
        if len == 0.0 {
            break;
        }
        let step = (len - estimate).abs();
        estimate = len;
        x = y.iter().map(|z| z / len).collect();
        if k >= 2 {
            let q = step / last_step;
            let remaining = if q < 1.0 {
                step * q / (1.0 - q)
            } else {
                f64::INFINITY
            };
            if step <= 1e-14 * len || remaining <= 1e-10 * len {
                break;
            }
        }
        if k >= 1 {
            last_step = step;
        }
    }
    best.max(estimate)
}

/// Ratio of `max |a_ij|` to `n ||A||` for a Hermitian matrix given row-major.
pub fn hermitian_entry_bound(dim: usize, a: &[Complex64], seed: u64) -> Result<f64, EstimateError> {
    if dim == 0 || a.len() != dim * dim {
        return Err(EstimateError::InvalidInput(format!(
            "expected {} entries for dimension {dim}, got {}",
            dim * dim,
            a.len()
        )));
    }
    let mut defect = 0.0_f64;
    for i in 0..dim {
        for j in 0..dim {
            defect = defect.max((a[i * dim + j] - a[j * dim + i].conj()).norm());
        }
    }
    if defect > HERMITIAN_TOL {
        return Err(EstimateError::NonHermitian { defect });
    }
    let max_entry = a.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if max_entry == 0.0 {
        return Ok(0.0);
    }
    Ok(max_entry / (dim as f64 * operator_norm(dim, a, seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sharp_constants() {
        assert_relative_eq!(sqrteps_constant(2), 1.0 + 3f64.sqrt(), max_relative = 1e-12);
        let expected = [(3, 7.657), (4, 17.58), (5, 37.66), (8, 324.5)];
        for (n, c) in expected {
            assert_relative_eq!(sqrteps_constant(n), c, max_relative = 2e-3);
        }
        assert_eq!(sqrteps_constant(1), 0.0);
    }

    #[test]
    fn extremal_tuples_attain_the_constant() {
        for n in 2..=8 {
            let (lo, hi) = sqrteps_extremes(n, 1.0 - 1e-12);
            let y = hi.powf(-1.0 / (n as f64 - 1.0));
            let mut a = vec![y; n];
            a[0] = hi;
            let r = check_sqrteps(&a, 1.0 - 1e-12).unwrap();
            let z = lo.powf(-1.0 / (n as f64 - 1.0));
            let mut b = vec![z; n];
            b[0] = lo;
            let s = check_sqrteps(&b, 1.0 - 1e-12).unwrap();
            assert!(
                r.max(s) <= 1.0 + 1e-9 && r.max(s) >= 1.0 - 1e-6,
                "{n}: {r} {s}"
            );
        }
    }

    #[test]
    fn worst_ratio_is_monotone_in_eps() {
        // The constant is read off at eps = 1; the scaled extremes increase
        // with eps, so no smaller eps needs a larger constant.
        for n in 2..=8 {
            let mut prev = 0.0;
            for k in 1..=400 {
                let eps = k as f64 / 400.0;
                let (lo, hi) = sqrteps_extremes(n, eps);
                let scaled = (hi - 1.0).max(1.0 / lo - 1.0) / eps.sqrt();
                assert!(scaled >= prev - 1e-12, "n = {n}, eps = {eps}");
                prev = scaled;
            }
            assert!(prev <= sqrteps_constant(n) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constant_from_the_original_derivation_is_too_small() {
        // 3 sqrt(n) fails for the lower bound at n = 3, eps close to 1.
        let eps = 0.99;
        let (lo, _) = sqrteps_extremes(3, eps);
        assert!(1.0 / lo > 1.0 + 3.0 * 3f64.sqrt() * eps.sqrt());
    }

    #[test]
    fn sqrteps_examples() {
        assert_eq!(check_sqrteps(&[1.0; 4], 0.3).unwrap(), 0.0);
        let r = check_sqrteps(&[2.0, 0.5], 0.25).unwrap();
        assert!(r < 1.0);
        assert_relative_eq!(r, 1.0 / ((1.0 + 3f64.sqrt()) * 0.5), max_relative = 1e-12);
        assert!(matches!(
            check_sqrteps(&[2.0, 0.5], 0.2),
            Err(EstimateError::Infeasible(_))
        ));
        assert!(matches!(
            check_sqrteps(&[2.0, 0.6], 0.5),
            Err(EstimateError::Infeasible(_))
        ));
        assert!(matches!(
            check_sqrteps(&[1.0, 1.0], 1.0),
            Err(EstimateError::InvalidInput(_))
        ));
    }

    #[test]
    fn proof_inequality_examples() {
        assert_eq!(
            sqrteps_proof_inequality(&[1.0; 3], 0.1),
            -0.30000000000000004
        );
        let s2 = 2f64.sqrt();
        let direct =
            (s2 - 1.0).powi(2) + (1.0 / s2 - 1.0).powi(2) + 2.0 * (s2 + 1.0 / s2 - 2.0) - 0.5;
        let v = sqrteps_proof_inequality(&[2.0, 0.5], 0.25);
        assert_relative_eq!(v, direct, epsilon = 1e-15);
        assert!(v.abs() <= 1e-15);
    }

    #[test]
    fn pinch_examples() {
        assert_eq!(
            pinch_from_laplacian(&[0.0, 0.0], 0.0, 1.0, 1.0, 1e4).unwrap(),
            0.0
        );
        // (1 + m)(1 + r - m) = 1 with r = m^2 / (1 + m) = 1e-4.
        let r: f64 = 1e-4;
        let m = 0.5 * (r + (r * r + 4.0 * r).sqrt());
        let ratio = pinch_from_laplacian(&[m, r - m], 0.0, 1.0, 1.0, 1e4).unwrap();
        assert!(ratio <= 1.0);
        assert!(m <= pinch_constant(2, 1.0) * 1e-2);
        assert!(matches!(
            pinch_from_laplacian(&[m, r - m], 0.5, 1.0, 1.0, 1e4),
            Err(EstimateError::Infeasible(_))
        ));
        assert!(matches!(
            pinch_from_laplacian(&[0.1, -0.05], 0.0, 1.0, 1.0, 1e4),
            Err(EstimateError::Infeasible(_))
        ));
    }

    #[test]
    fn hermitian_examples() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let id = [one, zero, zero, zero, one, zero, zero, zero, one];
        assert_relative_eq!(
            hermitian_entry_bound(3, &id, 1).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-12
        );
        let swap = [zero, one, one, zero];
        assert_relative_eq!(
            hermitian_entry_bound(2, &swap, 1).unwrap(),
            0.5,
            max_relative = 1e-10
        );
        let skew = [zero, one, -one, zero];
        assert!(matches!(
            hermitian_entry_bound(2, &skew, 1),
            Err(EstimateError::NonHermitian { .. })
        ));
        assert_eq!(hermitian_entry_bound(2, &[zero; 4], 1).unwrap(), 0.0);
    }
}
