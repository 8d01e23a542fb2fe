use std::sync::Arc;

use radial_ma::grid::RadialGrid;
use radial_ma::model::{ForcingProfile, ModelEnd};
use radial_ma::solver::{
    closed_form_eps0, continue_to_limit, residual_eps, solve_eps, Solution, SolverConfig,
    SolverError,
};

fn power_model(dim: u32, amplitude: f64, exponent: f64) -> ModelEnd {
    ModelEnd::new(
        dim,
        2.0,
        ForcingProfile::Power {
            amplitude,
            exponent,
        },
    )
    .unwrap()
    .normalize_mass()
    .unwrap()
}

fn reference_model(dim: u32) -> ModelEnd {
    power_model(dim, 1.0, 3.0 + 1.0 / dim as f64)
}

fn geometric(t_max: f64, cells: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::geometric(2.0, t_max, cells).unwrap())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn unforced_model_returns_reference_solution() {
    let model = ModelEnd::new(3, 2.0, ForcingProfile::Zero)
        .unwrap()
        .normalize_mass()
        .unwrap();
    let grid = geometric(2000.0, 64);
    for eps in [0.0, 0.5, 1.0] {
        let sol = solve_eps(
            &model,
            Arc::clone(&grid),
            eps,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(sol.newton_report().iterations, 0);
        assert!(sol.u().values().iter().all(|&u| u == 0.0));
        assert_eq!(sol.h().values(), grid.nodes());
        assert!(sol.lambda_base().values().iter().all(|&l| l == 1.0));
        assert!(sol.lambda_fiber().values().iter().all(|&l| l == 1.0));
    }
    let run = continue_to_limit(&model, grid, &SolverConfig::default()).unwrap();
    assert!(run.trace.iter().all(|s| s.u().sup_abs() == 0.0));
    assert_eq!(run.limit.u().sup_abs(), 0.0);
}

#[test]
fn limit_matches_closed_form_oracle() {
    for dim in 1..=3 {
        let model = reference_model(dim);
        let grid = geometric(2000.0, 512);
        let oracle = closed_form_eps0(&model, &grid).unwrap();
        let run = continue_to_limit(&model, Arc::clone(&grid), &SolverConfig::default()).unwrap();
        let err = run.limit.sup_distance(&oracle);
        assert!(err <= 1e-8, "n = {dim}: sup error {err:e}");
        assert!(run.limit.newton_report().final_residual <= 1e-11);
        // Eigenvalue ratios of the oracle are the closed-form derivative expressions.
        let dl = sup_diff(
            run.limit.ratios().base_deviation.values(),
            oracle.ratios().base_deviation.values(),
        )
        .max(sup_diff(
            run.limit.ratios().fiber_deviation.values(),
            oracle.ratios().fiber_deviation.values(),
        ));
        assert!(dl <= 1e-8, "n = {dim}: eigenvalue mismatch {dl:e}");
    }
}

#[test]
fn oracle_residual_is_at_truncation_level() {
    let model = reference_model(1);
    let grid = geometric(2000.0, 512);
    let oracle = closed_form_eps0(&model, &grid).unwrap();
    let r = residual_eps(&model, &oracle, 0.0).unwrap();
    let sup = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(sup <= 1e-9, "{sup:e}");
}

#[test]
fn small_amplitude_oracle_matches_linearization() {
    let (a, n_exp) = (1e-4, 3.0);
    for dim in [1, 2] {
        let model = power_model(dim, a, n_exp);
        let grid = geometric(2000.0, 128);
        let oracle = closed_form_eps0(&model, &grid).unwrap();
        let inv_n = 1.0 / dim as f64;
        let slope = oracle.u().first_derivative();
        for (i, &t) in grid.nodes().iter().enumerate().skip(8).step_by(16) {
            // u' = h^(1/n) - t^(1/n), with h - t = -int_t^inf f to first order.
            let linear = -inv_n * t.powf(inv_n - 1.0) * a * t.powf(1.0 - n_exp) / (n_exp - 1.0);
            let exact =
                t.powf(inv_n) * (inv_n * (oracle.excess().values()[i] / t).ln_1p()).exp_m1();
            assert!((exact - linear).abs() <= 1e-3 * linear.abs(), "t = {t}");
            assert!((slope.values()[i] - exact).abs() <= 1e-2 * exact.abs());
        }
    }
}

#[test]
fn warm_start_saves_iterations() {
    let grid = geometric(2000.0, 256);
    let config = SolverConfig::default();
    for (model, eps) in [
        (reference_model(1), 0.5f64.powi(12)),
        (reference_model(2), 0.5f64.powi(12)),
    ] {
        let prev = solve_eps(&model, Arc::clone(&grid), 2.0 * eps, &config, None).unwrap();
        let cold = solve_eps(&model, Arc::clone(&grid), eps, &config, None).unwrap();
        let warm = solve_eps(&model, Arc::clone(&grid), eps, &config, Some(&prev)).unwrap();
        assert!(warm.newton_report().iterations < cold.newton_report().iterations);
        assert!(warm.sup_distance(&cold) <= 1e-10);
    }
}

#[test]
fn newton_converges_quadratically_on_three_grids() {
    let model = power_model(1, 4.0, 3.0);
    let mut constants = Vec::new();
    for cells in [128, 256, 512] {
        let sol = solve_eps(
            &model,
            geometric(2000.0, cells),
            1.0,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        let hist = &sol.newton_report().residual_history;
        let ratios: Vec<f64> = hist
            .windows(2)
            .filter(|w| w[0] <= 1e-3 && w[1] > 1e-13)
            .map(|w| w[1] / (w[0] * w[0]))
            .collect();
        assert!(!ratios.is_empty(), "{hist:?}");
        constants.push(ratios.iter().copied().fold(0.0_f64, f64::max));
    }
    assert!(constants.iter().all(|&k| k <= 100.0), "{constants:?}");
}

#[test]
fn second_order_scheme_converges_at_rate_two() {
    let model = reference_model(1);
    let config = SolverConfig {
        order: 2,
        ..SolverConfig::default()
    };
    let errors: Vec<f64> = [128, 256, 512]
        .iter()
        .map(|&m| {
            let grid = geometric(2000.0, m);
            let oracle = closed_form_eps0(&model, &grid).unwrap();
            solve_eps(&model, grid, 0.0, &config, None)
                .unwrap()
                .sup_distance(&oracle)
        })
        .collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&rate), "{errors:?}");
    }
}

#[test]
fn product_identity_holds_nodewise() {
    for dim in [1, 2, 3] {
        let model = reference_model(dim);
        let sol = solve_eps(
            &model,
            geometric(2000.0, 512),
            0.5,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        for (i, &t) in sol.grid().nodes().iter().enumerate() {
            let lhs =
                sol.lambda_base().values()[i].powi(dim as i32 - 1) * sol.lambda_fiber().values()[i];
            let rhs = (model.eval_f(t).unwrap() + 0.5 * sol.u().values()[i]).exp();
            assert!((lhs - rhs).abs() <= 1e-6);
        }
    }
}

#[test]
fn fiber_ratio_agrees_with_differenced_potential() {
    // lambda_fiber uses u'' from the system; a second difference of the
    // nodal u must approach it at second order.
    let model = reference_model(2);
    let worst = |cells: usize| {
        let sol = solve_eps(
            &model,
            geometric(2000.0, cells),
            0.5,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        let second = sol.u().second_derivative();
        sol.grid()
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let b = t.powf(-0.5) / 2.0;
                (1.0 + second.values()[i] / b - sol.lambda_fiber().values()[i]).abs()
            })
            .fold(0.0_f64, f64::max)
    };
    let (coarse, fine) = (worst(256), worst(512));
    assert!(fine <= 1e-3, "{fine:e}");
    assert!(coarse / fine >= 3.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn random_restarts_reach_the_same_solution() {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let model = reference_model(2);
    let grid = geometric(2000.0, 256);
    let config = SolverConfig::default();
    let reference = solve_eps(&model, Arc::clone(&grid), 0.3, &config, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..5 {
        let seed = closed_form_eps0(&model, &grid).unwrap();
        let u: Vec<f64> = seed
            .u()
            .values()
            .iter()
            .map(|v| v + rng.random_range(-0.2..0.2))
            .collect();
        let start = Solution::from_nodal(
            &model,
            Arc::clone(&grid),
            u,
            seed.h().values().to_vec(),
            0.0,
        )
        .unwrap();
        let sol = solve_eps(&model, Arc::clone(&grid), 0.3, &config, Some(&start)).unwrap();
        assert!(sol.sup_distance(&reference) <= 1e-10);
    }
}

#[test]
fn trivial_bound_along_trace() {
    for dim in [1, 2] {
        let model = reference_model(dim);
        let grid = geometric(2000.0, 256);
        let sup_f = model.sup_forcing(&grid);
        let run = continue_to_limit(&model, grid, &SolverConfig::default()).unwrap();
        for sol in &run.trace {
            assert!(
                sol.u().sup_abs() <= sup_f / sol.eps() + 1e-11,
                "eps = {}",
                sol.eps()
            );
        }
        // Convergence to the limit is monotone along the schedule.
        let dist: Vec<f64> = run
            .trace
            .iter()
            .map(|s| s.sup_distance(&run.limit))
            .collect();
        assert!(dist.windows(2).all(|w| w[1] <= w[0]));
        assert!(dist.last().unwrap() <= &1e-6);
    }
}

#[test]
fn interior_extrema_obey_maximum_principle() {
    let model = ModelEnd::new(
        1,
        2.0,
        ForcingProfile::DampedOscillatory {
            amplitude: 1.0,
            exponent: 2.5,
            frequency: 4.0,
        },
    )
    .unwrap()
    .normalize_mass()
    .unwrap();
    let grid = geometric(2000.0, 1024);
    let mut extrema = 0;
    for eps in [1.0, 0.1, 0.01] {
        let sol = solve_eps(
            &model,
            Arc::clone(&grid),
            eps,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        let u = sol.u().values();
        for i in 1..u.len() - 1 {
            let t = grid.nodes()[i];
            let rhs = model.eval_f(t).unwrap() + eps * u[i];
            if u[i] >= u[i - 1] && u[i] >= u[i + 1] {
                extrema += 1;
                assert!(rhs <= 1e-6, "max at t = {t}: f + eps u = {rhs:e}");
            }
            if u[i] <= u[i - 1] && u[i] <= u[i + 1] {
                extrema += 1;
                assert!(rhs >= -1e-6, "min at t = {t}: f + eps u = {rhs:e}");
            }
        }
    }
    assert!(extrema > 0);
}

#[test]
fn far_field_truncation_shift() {
    // n = 1, N = 3: u(t0) = int_t0^T tail, and the tail is ~ 1/(2s^2), so
    // doubling T moves sup |u| by ~ 1/(4T).
    let model = power_model(1, 1.0, 3.0);
    let config = SolverConfig::default();
    let sup_u = |t_max: f64, cells: usize| {
        solve_eps(&model, geometric(t_max, cells), 0.0, &config, None)
            .unwrap()
            .u()
            .sup_abs()
    };
    let shift = sup_u(4000.0, 640) - sup_u(2000.0, 576);
    assert!((shift / (1.0 / 8000.0) - 1.0).abs() <= 0.05, "{shift:e}");
    let far = (sup_u(1e6, 1200) - sup_u(5e5, 1100)).abs();
    assert!(far < 1e-6, "{far:e}");
}

#[test]
fn rejects_bad_inputs() {
    let raw = ModelEnd::new(
        1,
        2.0,
        ForcingProfile::Power {
            amplitude: 1.0,
            exponent: 3.0,
        },
    )
    .unwrap();
    let grid = geometric(2000.0, 64);
    let config = SolverConfig::default();
    assert!(matches!(
        solve_eps(&raw, Arc::clone(&grid), 0.0, &config, None),
        Err(SolverError::NotNormalized)
    ));
    let model = raw.normalize_mass().unwrap();
    assert!(matches!(
        solve_eps(&model, Arc::clone(&grid), -1.0, &config, None),
        Err(SolverError::NegativeEps(_))
    ));
    let other = solve_eps(&model, geometric(2000.0, 32), 0.0, &config, None).unwrap();
    assert!(matches!(
        solve_eps(&model, grid, 0.0, &config, Some(&other)),
        Err(SolverError::GridMismatch)
    ));
}

#[test]
fn exhausted_iterations_report_last_iterate() {
    let model = power_model(1, 4.0, 3.0);
    let config = SolverConfig {
        newton_max_iter: 1,
        ..SolverConfig::default()
    };
    match solve_eps(&model, geometric(2000.0, 128), 1.0, &config, None) {
        Err(SolverError::NonConvergence {
            eps,
            iterations,
            residual_history,
            last_iterate,
        }) => {
            assert_eq!(eps, 1.0);
            assert_eq!(iterations, 1);
            assert_eq!(residual_history.len(), 2);
            assert_eq!(last_iterate.grid().len(), 129);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}
