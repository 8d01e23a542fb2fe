use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use radial_ma::estimates::{
    check_sqrteps, fit_decay, hermitian_entry_bound, operator_norm, pinch_from_laplacian,
    run_suite, sample_hermitian, sqrteps_proof_inequality, verify_main_theorem,
    verify_ueps_scaling, DyadicWindows, EstimateError, LemmaKind,
};
use radial_ma::grid::{RadialField, RadialGrid};
use radial_ma::model::{ForcingProfile, ModelEnd};
use radial_ma::solver::{
    closed_form_eps0, continue_to_limit, solve_eps, SolverConfig, SolverError,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn power_model(dim: u32, exponent: f64) -> ModelEnd {
    ModelEnd::new(
        dim,
        2.0,
        ForcingProfile::Power {
            amplitude: 1.0,
            exponent,
        },
    )
    .unwrap()
    .normalize_mass()
    .unwrap()
}

fn geometric(t_max: f64, cells: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::geometric(2.0, t_max, cells).unwrap())
}

#[test]
fn oracle_potential_decays_like_inverse_t() {
    // Far truncation so that u(T) = 0 does not bend the fitted windows.
    let model = power_model(1, 3.0);
    let oracle = closed_form_eps0(&model, &geometric(2e5, 2048)).unwrap();
    let fits = fit_decay(oracle.u(), &DyadicWindows::within(2.0, 2000.0));
    let last = fits.asymptotic().unwrap();
    assert!((last.exponent + 1.0).abs() <= 0.05, "{last:?}");
    assert!(last.r_squared > 0.999);
}

#[test]
fn operator_norm_matches_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dim in 2..=8 {
        for k in 0..20 {
            let a = sample_hermitian(&mut rng, dim);
            let m = DMatrix::from_row_slice(dim, dim, &a);
            let spectral = m
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0_f64, |acc, v| acc.max(v.abs()));
            let est = operator_norm(dim, &a, k);
            assert!(est <= spectral * (1.0 + 1e-12));
            assert!(
                est >= spectral * (1.0 - 1e-8),
                "dim {dim}: {est} vs {spectral}"
            );
            assert!(hermitian_entry_bound(dim, &a, k).unwrap() <= 1.0);
        }
    }
}

#[test]
fn unforced_model_has_zero_suprema() {
    let model = ModelEnd::new(2, 2.0, ForcingProfile::Zero)
        .unwrap()
        .normalize_mass()
        .unwrap();
    let run = continue_to_limit(&model, geometric(2000.0, 128), &SolverConfig::default()).unwrap();
    let report = verify_main_theorem(&model, &run.limit, &DyadicWindows::default()).unwrap();
    assert_eq!(report.sup_scaled_laplacian, 0.0);
    assert_eq!(report.pinch_constant, 0.0);
    assert_eq!(report.fitted_pinch_exponent, None);
    assert!(report.envelope_holds);
    let scaling = verify_ueps_scaling(&model, &run.trace, 0.5).unwrap();
    assert!(scaling.points.iter().all(|p| p.scaled_u == 0.0));
    assert!(scaling.fit.is_none());
    assert!(scaling.envelope_holds && scaling.trivial_bound_holds);
}

#[test]
fn eigenvalue_decay_on_power_profile() {
    for dim in 1..=3u32 {
        let big_n = 3.0 + 1.0 / dim as f64;
        let model = power_model(dim, big_n);
        let sol = solve_eps(
            &model,
            geometric(2000.0, 512),
            0.0,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        let report = verify_main_theorem(&model, &sol, &DyadicWindows::default()).unwrap();
        assert!(report.envelope_holds);
        assert!(report.pinch_constant.is_finite() && report.pinch_constant > 0.0);
        // Both deviations are ~ t^-N: (h/t)^(1/n) - 1 ~ -tail/(n t) and the
        // fiber picks up f plus the derivative of the same tail.
        let base = report.base_exponent.unwrap();
        let fiber = report.fiber_exponent.unwrap();
        assert!((base + big_n).abs() <= 0.05, "n = {dim}: base {base}");
        assert!((fiber + big_n).abs() <= 0.05, "n = {dim}: fiber {fiber}");
        // Feeding the fitted Laplacian rate through the pinch lemma predicts
        // decay no faster than what is observed.
        let beta = -report.laplacian_exponent.unwrap();
        assert!(report.fitted_pinch_exponent.unwrap() <= -0.5 * beta + 0.1);
    }
}

#[test]
fn main_theorem_rejects_wrong_eps_and_unconverged_input() {
    // n = 2 so the eps = 0 system is nonlinear in h.
    let model = ModelEnd::new(
        2,
        2.0,
        ForcingProfile::Power {
            amplitude: 4.0,
            exponent: 3.0,
        },
    )
    .unwrap()
    .normalize_mass()
    .unwrap();
    let grid = geometric(2000.0, 128);
    let sol = solve_eps(
        &model,
        Arc::clone(&grid),
        0.5,
        &SolverConfig::default(),
        None,
    )
    .unwrap();
    assert!(matches!(
        verify_main_theorem(&model, &sol, &DyadicWindows::default()),
        Err(EstimateError::InvalidInput(_))
    ));
    let config = SolverConfig {
        newton_max_iter: 1,
        ..SolverConfig::default()
    };
    let stalled = match solve_eps(&model, grid, 0.0, &config, None) {
        Err(SolverError::NonConvergence { last_iterate, .. }) => *last_iterate,
        other => panic!(
            "expected non-convergence, got {:?}",
            other.map(|s| s.newton_report().clone())
        ),
    };
    assert!(matches!(
        verify_main_theorem(&model, &stalled, &DyadicWindows::default()),
        Err(EstimateError::NotConverged { .. })
    ));
}

#[test]
fn ueps_scaling_on_power_profile() {
    let model = power_model(1, 3.0);
    let config = SolverConfig {
        eps_floor: 0.5f64.powi(20),
        ..SolverConfig::default()
    };
    let run = continue_to_limit(&model, geometric(2000.0, 256), &config).unwrap();
    assert_eq!(run.trace.len(), 21);
    let report = verify_ueps_scaling(&model, &run.trace, 0.5).unwrap();
    assert_eq!(report.envelope, 1.25);
    let slope = report.fit.unwrap().exponent;
    // The limit exists, so S(eps) levels off.
    assert!(slope.abs() < 0.1, "{slope}");
    assert!(report.envelope_holds && report.trivial_bound_holds);
    assert!(matches!(
        verify_ueps_scaling(&model, &run.trace, 1.0),
        Err(EstimateError::DeltaOutOfRange { .. })
    ));
}

#[test]
fn lemma_suites_small_sample() {
    for kind in LemmaKind::ALL {
        for dim in [2, 5, 8] {
            let report = run_suite(kind, dim, 1000, 17).unwrap();
            assert!(report.pass, "{report:?}");
            assert_eq!(report.failures, 0);
        }
    }
}

fn unit_product(logs: &[f64]) -> Vec<f64> {
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.iter().map(|l| (l - mean).exp()).collect()
}

proptest! {
    #[test]
    fn fit_recovers_random_monomials(p in -4.0f64..1.0, c in 0.1f64..10.0, neg in any::<bool>()) {
        let grid = geometric(5000.0, 600);
        let sign = if neg { -1.0 } else { 1.0 };
        let field = RadialField::from_fn(grid, |t| sign * c * t.powf(p));
        for f in fit_decay(&field, &DyadicWindows::default()).fitted() {
            prop_assert!((f.exponent - p).abs() <= 1e-10);
            prop_assert!((f.constant - sign * c).abs() <= 1e-8 * c);
        }
    }

    #[test]
    fn sqrteps_holds_on_feasible_tuples(
        logs in prop::collection::vec(-3.0f64..3.0, 2..=8),
        slack in 0.0f64..1.0,
    ) {
        let a = unit_product(&logs);
        let n = a.len() as f64;
        let needed = a.iter().sum::<f64>() / n - 1.0;
        let eps = needed + slack * (1.0 - needed);
        prop_assume!(needed < 1.0 && eps > 0.0 && eps < 1.0);
        prop_assert!(check_sqrteps(&a, eps).unwrap() <= 1.0);
        prop_assert!(sqrteps_proof_inequality(&a, eps) <= 1e-12);
    }

    #[test]
    fn pinch_holds_on_feasible_tuples(
        logs in prop::collection::vec(-1.0f64..1.0, 2..=8),
        scale in 1e-3f64..1.0,
        beta in 0.2f64..2.0,
        t in 1e2f64..1e4,
        f_frac in -1.0f64..1.0,
    ) {
        let n = logs.len() as f64;
        let f_val = f_frac * t.powf(-beta - 0.5);
        let spread = scale * t.powf(-0.5 * beta);
        let mean = logs.iter().sum::<f64>() / n;
        let mu: Vec<f64> = logs.iter().map(|l| (spread * (l - mean) + f_val / n).exp_m1()).collect();
        let c = (mu.iter().sum::<f64>() * t.powf(beta)).max(0.01);
        let ratio = pinch_from_laplacian(&mu, f_val, c, beta, t).unwrap();
        prop_assert!(ratio <= 1.0);
    }

    #[test]
    fn hermitian_bound_holds(entries in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 4..=64), seed in any::<u64>()) {
        let dim = (entries.len() as f64).sqrt() as usize;
        let b: Vec<Complex64> = entries.iter().take(dim * dim).map(|&(r, i)| Complex64::new(r, i)).collect();
        let mut a = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                a[i * dim + j] = (b[i * dim + j] + b[j * dim + i].conj()) * 0.5;
            }
        }
        prop_assert!(hermitian_entry_bound(dim, &a, seed).unwrap() <= 1.0);
    }
}
