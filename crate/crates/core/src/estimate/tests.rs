use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::SymbolTable;
use crate::model::{OdeModel, Transition};
use crate::solver::{integrate, linspace, SolverConfig};

use super::*;

/// Proportion-scaled SIR used throughout the estimation examples.
fn sir_model(beta: f64, gamma: f64) -> OdeModel {
    let table = SymbolTable::new(vec!["S", "I", "R"], vec!["beta", "gamma"]).unwrap();
    let mut model = OdeModel::build(
        table,
        vec![
            Transition::between("S", "I", "beta*S*I"),
            Transition::between("I", "R", "gamma*I"),
        ],
        vec![],
        vec![],
    )
    .unwrap();
    model
        .set_parameters([("beta", beta), ("gamma", gamma)])
        .unwrap();
    model
        .set_initial(vec![1.0, 1.27e-6, 0.0], 0.0)
        .unwrap();
    model
}

/// The estimation scenario: truth (0.5, 1/3), observations of R with
/// multiplicative noise 0.90 + U(0, 0.2).
pub(crate) fn paper_problem(seed: u64) -> LossProblem {
    let model = sir_model(0.5, 1.0 / 3.0);
    let grid = linspace(0.0, 100.0, 50);
    let times = grid[1..].to_vec();
    let truth = integrate(&model, &times, &SolverConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DMatrix::from_fn(times.len(), 1, |i, _| {
        truth.value(i, 2) * (0.90 + rng.gen::<f64>() / 5.0)
    });
    LossProblem::new(
        model,
        vec![0.5, 0.5],
        vec![1.0, 1.27e-6, 0.0],
        0.0,
        times,
        y,
        &["R"],
        LossKind::Square,
    )
    .unwrap()
}

fn decay_problem(k: f64, times: Vec<f64>, y: Vec<f64>) -> LossProblem {
    let table = SymbolTable::new(vec!["x"], vec!["k"]).unwrap();
    let mut model = OdeModel::build(
        table,
        vec![],
        vec![],
        vec![Transition::death("x", "k*x")],
    )
    .unwrap();
    model.set_parameters([("k", k)]).unwrap();
    model.set_initial(vec![1.0], 0.0).unwrap();
    let n = times.len();
    LossProblem::new(
        model,
        vec![k],
        vec![1.0],
        0.0,
        times,
        DMatrix::from_vec(n, 1, y),
        &["x"],
        LossKind::Square,
    )
    .unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

#[test]
fn cost_is_zero_at_truth_on_noise_free_data() {
    let p = paper_problem(1);
    let model = sir_model(0.5, 1.0 / 3.0);
    let clean = integrate(&model, p.observation_times(), &SolverConfig::default()).unwrap();
    let y = DMatrix::from_fn(p.n_obs(), 1, |i, _| clean.value(i, 2));
    let p = p.with_observations(y).unwrap();
    let c = p.cost(&[0.5, 1.0 / 3.0]).unwrap();
    assert!(c < 1e-14, "cost {c}");
}

#[test]
fn two_point_cost_matches_hand_arithmetic() {
    let times = vec![1.0, 2.0];
    let y = vec![0.5, 0.2];
    let p = decay_problem(0.7, times.clone(), y.clone());
    let got = p.cost(&[0.7]).unwrap();
    let want: f64 = times
        .iter()
        .zip(&y)
        .map(|(t, yi)| (yi - (-0.7 * t).exp()).powi(2))
        .sum();
    assert!(rel_close(got, want, 1e-6), "{got} vs {want}");
}

#[test]
fn paper_scenario_fit_beats_the_starting_point() {
    let p = paper_problem(2);
    let start = p.cost(&[0.5, 0.5]).unwrap();
    let result = fit(&p, &[(0.0, 2.0), (0.0, 2.0)], &FitOptions::default()).unwrap();
    assert!(result.cost < start);
}

#[test]
fn residuals_shape_and_cost_identity() {
    let p = paper_problem(3);
    let theta = [0.45, 0.4];
    let r = p.residuals(&theta).unwrap();
    assert_eq!((r.nrows(), r.ncols()), (49, 1));
    // unit weights: cost equals the squared Frobenius norm of the residuals
    let cost = p.cost(&theta).unwrap();
    let frob2: f64 = r.iter().map(|v| v * v).sum();
    assert!(rel_close(cost, frob2, 1e-12));
}

#[test]
fn residuals_vanish_at_truth_noise_free() {
    let times = vec![0.5, 1.5];
    let y: Vec<f64> = times.iter().map(|t: &f64| (-0.3 * t).exp()).collect();
    let p = decay_problem(0.3, times, y);
    let r = p.residuals(&[0.3]).unwrap();
    assert!(r.iter().all(|v| v.abs() < 1e-7));
}

#[test]
fn sensitivity_gradient_matches_closed_form_on_decay() {
    // cost (y - e^{-kt})²; d/dk = 2 t (y - e^{-kt}) e^{-kt}
    let t = 1.3;
    let y = 0.4;
    let p = decay_problem(0.9, vec![t], vec![y]);
    let k = 0.9f64;
    let g = p.sensitivity_gradient(&[k]).unwrap();
    let want = 2.0 * t * (y - (-k * t).exp()) * (-k * t).exp();
    assert!(rel_close(g[0], want, 1e-7), "{} vs {want}", g[0]);
}

#[test]
fn gradient_is_stationary_at_noise_free_truth() {
    let times = vec![0.5, 1.0, 2.0];
    let y: Vec<f64> = times.iter().map(|t: &f64| (-0.6 * t).exp()).collect();
    let p = decay_problem(0.6, times, y);
    let g = p.sensitivity_gradient(&[0.6]).unwrap();
    assert!(g[0].abs() < 1e-6);
    let a = p.adjoint_gradient(&[0.6]).unwrap();
    assert!(a[0].abs() < 1e-6);
}

#[test]
fn sensitivity_matches_central_differences_on_sir() {
    let p = paper_problem(4);
    let theta = [0.5, 0.5];
    let g = p.sensitivity_gradient(&theta).unwrap();
    for kp in 0..2 {
        let h = 1e-6 * theta[kp].max(1.0);
        let mut plus = theta;
        let mut minus = theta;
        plus[kp] += h;
        minus[kp] -= h;
        let fd = (p.cost(&plus).unwrap() - p.cost(&minus).unwrap()) / (2.0 * h);
        assert!(
            rel_close(g[kp], fd, 1e-4),
            "param {kp}: sensitivity {} vs fd {fd}",
            g[kp]
        );
    }
}

#[test]
fn adjoint_agrees_with_sensitivity_on_sir() {
    let p = paper_problem(5);
    for theta in [[0.5, 0.5], [0.45, 0.35], [0.6, 0.3]] {
        let s = p.sensitivity_gradient(&theta).unwrap();
        let a = p.adjoint_gradient(&theta).unwrap();
        for kp in 0..2 {
            assert!(
                rel_close(s[kp], a[kp], 1e-4),
                "theta {theta:?}, param {kp}: {} vs {}",
                s[kp],
                a[kp]
            );
        }
    }
}

#[test]
fn two_jtr_is_the_square_loss_gradient() {
    let p = paper_problem(6);
    let theta = [0.47, 0.38];
    let (r, j) = p.residuals_and_jacobian(&theta).unwrap();
    let jtr = j.transpose() * r;
    let g = p.sensitivity_gradient(&theta).unwrap();
    for kp in 0..2 {
        assert!(
            rel_close(2.0 * jtr[kp], g[kp], 1e-10),
            "param {kp}: {} vs {}",
            2.0 * jtr[kp],
            g[kp]
        );
    }
}

#[test]
fn insensitive_states_give_zero_jacobian_rows() {
    // x' = -k x, z' = 0: observations of z carry no information about k
    let table = SymbolTable::new(vec!["x", "z"], vec!["k"]).unwrap();
    let mut model = OdeModel::build(
        table,
        vec![],
        vec![
            Transition::ode("x", "-k*x"),
            Transition::ode("z", "0"),
        ],
        vec![],
    )
    .unwrap();
    model.set_parameters([("k", 1.0)]).unwrap();
    model.set_initial(vec![1.0, 2.0], 0.0).unwrap();
    let p = LossProblem::new(
        model,
        vec![1.0],
        vec![1.0, 2.0],
        0.0,
        vec![1.0, 2.0],
        DMatrix::from_vec(2, 1, vec![2.0, 2.0]),
        &["z"],
        LossKind::Square,
    )
    .unwrap();
    let j = p.residual_jacobian(&[1.0]).unwrap();
    assert!(j.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn residual_jacobian_columns_match_finite_differences() {
    let p = paper_problem(7);
    let theta = [0.5, 0.4];
    let j = p.residual_jacobian(&theta).unwrap();
    for kp in 0..2 {
        let h = 1e-4;
        let mut plus = theta;
        let mut minus = theta;
        plus[kp] += h;
        minus[kp] -= h;
        let rp = p.residuals(&plus).unwrap();
        let rm = p.residuals(&minus).unwrap();
        for i in 0..p.n_obs() {
            let fd = (rp[(i, 0)] - rm[(i, 0)]) / (2.0 * h);
            assert!(
                (j[(i, kp)] - fd).abs() <= 1e-3 * fd.abs().max(1.0),
                "row {i} col {kp}: {} vs {fd}",
                j[(i, kp)]
            );
        }
    }
}

#[test]
fn jtj_is_positive_semidefinite_and_hessian_symmetric() {
    let p = paper_problem(8);
    let theta = [0.5, 0.35];
    let jtj = p.jtj(&theta).unwrap();
    let eigen = jtj.clone().symmetric_eigen();
    assert!(eigen.eigenvalues.iter().all(|l| *l >= -1e-10));
    let h = p.hessian(&theta).unwrap();
    assert_eq!(h[(0, 1)], h[(1, 0)]);
}

#[test]
fn hessian_approaches_gauss_newton_limit_at_noise_free_optimum() {
    // with zero residuals the cost Hessian is exactly twice JᵀJ
    let p = paper_problem(9);
    let model = sir_model(0.5, 1.0 / 3.0);
    let clean = integrate(&model, p.observation_times(), &SolverConfig::default()).unwrap();
    let y = DMatrix::from_fn(p.n_obs(), 1, |i, _| clean.value(i, 2));
    let p = p.with_observations(y).unwrap();
    let theta = [0.5, 1.0 / 3.0];
    let h = p.hessian(&theta).unwrap();
    let jtj = p.jtj(&theta).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            assert!(
                rel_close(h[(i, j)], 2.0 * jtj[(i, j)], 0.1),
                "({i},{j}): hessian {} vs 2·jtj {}",
                h[(i, j)],
                2.0 * jtj[(i, j)]
            );
        }
    }
}

#[test]
fn weight_scaling_is_exact_and_argmin_invariant() {
    let base = paper_problem(10);
    let scaled = base
        .clone()
        .with_weights(Weights::Scalar(3.5))
        .unwrap();
    let theta = [0.48, 0.36];
    let (c1, g1) = base.cost_and_gradient(&theta).unwrap();
    let (c2, g2) = scaled.cost_and_gradient(&theta).unwrap();
    assert!(rel_close(c2, 3.5 * c1, 1e-12));
    for kp in 0..2 {
        assert!(rel_close(g2[kp], 3.5 * g1[kp], 1e-12));
    }
    let bounds = [(0.0, 2.0), (0.0, 2.0)];
    let f1 = fit(&base, &bounds, &FitOptions::default()).unwrap();
    let f2 = fit(&scaled, &bounds, &FitOptions::default()).unwrap();
    for kp in 0..2 {
        assert!(
            (f1.theta[kp] - f2.theta[kp]).abs() < 1e-6,
            "argmin moved: {} vs {}",
            f1.theta[kp],
            f2.theta[kp]
        );
    }
}

#[test]
fn fit_recovers_paper_estimates_single_seed() {
    let p = paper_problem(11);
    let result = fit(&p, &[(0.0, 2.0), (0.0, 2.0)], &FitOptions::default()).unwrap();
    assert!(result.converged);
    assert!(
        (0.40..=0.60).contains(&result.theta[0]),
        "beta {}",
        result.theta[0]
    );
    assert!(
        (0.25..=0.42).contains(&result.theta[1]),
        "gamma {}",
        result.theta[1]
    );
    assert!(!result.at_lower.iter().any(|b| *b));
    assert!(!result.at_upper.iter().any(|b| *b));
}

#[test]
fn fit_from_truth_on_noise_free_data_stops_immediately() {
    let times = vec![0.5, 1.0, 1.5];
    let y: Vec<f64> = times.iter().map(|t: &f64| (-0.8 * t).exp()).collect();
    let p = decay_problem(0.8, times, y);
    let result = fit(&p, &[(0.0, 5.0)], &FitOptions::default()).unwrap();
    assert!(result.converged);
    assert!(result.iterations <= 1);
    assert!((result.theta[0] - 0.8).abs() < 1e-8);
}

#[test]
fn fit_matches_grid_search_on_surrogate() {
    // one-parameter decay with noise: compare against a brute-force grid
    let times = vec![0.4, 0.9, 1.7, 2.5];
    let y = vec![0.70, 0.42, 0.20, 0.11];
    let p = decay_problem(0.5, times, y);
    let result = fit(&p, &[(0.01, 3.0)], &FitOptions::default()).unwrap();
    let grid_best = (0..3000)
        .map(|i| 0.01 + i as f64 * 1e-3)
        .min_by(|a, b| {
            p.cost(&[*a]).unwrap().total_cmp(&p.cost(&[*b]).unwrap())
        })
        .unwrap();
    assert!(
        (result.theta[0] - grid_best).abs() <= 1e-3,
        "{} vs grid {grid_best}",
        result.theta[0]
    );
}

#[test]
fn accepted_iterates_never_increase_cost() {
    let p = paper_problem(12);
    let result = fit(&p, &[(0.0, 2.0), (0.0, 2.0)], &FitOptions::default()).unwrap();
    for w in result.trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "cost increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn target_param_freezes_the_rest() {
    // only beta free; gamma frozen at its model value
    let p = paper_problem(13);
    let restricted = p
        .clone()
        .with_target_params(&["beta"], vec![0.5])
        .unwrap();
    assert_eq!(restricted.n_free(), 1);
    assert_eq!(restricted.free_param_names(), vec!["beta"]);
    let g = restricted.sensitivity_gradient(&[0.5]).unwrap();
    assert_eq!(g.len(), 1);
    // frozen gamma takes the model's bound value (1/3): the restricted cost
    // at beta matches the full cost at (beta, 1/3)
    let via_full = p.cost(&[0.5, 1.0 / 3.0]).unwrap();
    let via_restricted = restricted.cost(&[0.5]).unwrap();
    assert!(rel_close(via_full, via_restricted, 1e-12));
}

#[test]
fn freeze_param_matches_target_param_route() {
    let p = paper_problem(14);
    let frozen = p.freeze_param(1, 0.37).unwrap();
    assert_eq!(frozen.n_free(), 1);
    let a = frozen.cost(&[0.51]).unwrap();
    let b = p.cost(&[0.51, 0.37]).unwrap();
    assert!(rel_close(a, b, 1e-12));
}

#[test]
fn normal_and_poisson_losses_evaluate() {
    let p = paper_problem(15);
    let y = p.observations().clone();
    let normal = LossProblem::new(
        p.model().clone(),
        vec![0.5, 0.5],
        vec![1.0, 1.27e-6, 0.0],
        0.0,
        p.observation_times().to_vec(),
        y.clone(),
        &["R"],
        LossKind::Normal,
    )
    .unwrap()
    .with_weights(Weights::Scalar(10.0))
    .unwrap();
    let poisson = LossProblem::new(
        p.model().clone(),
        vec![0.5, 0.5],
        vec![1.0, 1.27e-6, 0.0],
        0.0,
        p.observation_times().to_vec(),
        y,
        &["R"],
        LossKind::Poisson,
    )
    .unwrap();
    // gradients agree with finite differences for both families
    for problem in [&normal, &poisson] {
        let theta = [0.5, 0.4];
        let g = problem.sensitivity_gradient(&theta).unwrap();
        for kp in 0..2 {
            let h = 1e-6;
            let mut plus = theta;
            let mut minus = theta;
            plus[kp] += h;
            minus[kp] -= h;
            let fd =
                (problem.cost(&plus).unwrap() - problem.cost(&minus).unwrap()) / (2.0 * h);
            assert!(
                rel_close(g[kp], fd, 1e-4),
                "param {kp}: {} vs {fd}",
                g[kp]
            );
        }
    }
}

#[test]
fn invalid_problems_are_rejected() {
    let model = sir_model(0.5, 1.0 / 3.0);
    // non-increasing times
    assert!(LossProblem::new(
        model.clone(),
        vec![0.5, 0.5],
        vec![1.0, 0.0, 0.0],
        0.0,
        vec![2.0, 1.0],
        DMatrix::zeros(2, 1),
        &["R"],
        LossKind::Square,
    )
    .is_err());
    // observation at t0
    assert!(LossProblem::new(
        model.clone(),
        vec![0.5, 0.5],
        vec![1.0, 0.0, 0.0],
        0.0,
        vec![0.0, 1.0],
        DMatrix::zeros(2, 1),
        &["R"],
        LossKind::Square,
    )
    .is_err());
    // unknown target state
    assert!(LossProblem::new(
        model.clone(),
        vec![0.5, 0.5],
        vec![1.0, 0.0, 0.0],
        0.0,
        vec![1.0],
        DMatrix::zeros(1, 1),
        &["Q"],
        LossKind::Square,
    )
    .is_err());
    // non-positive weights
    let p = LossProblem::new(
        model,
        vec![0.5, 0.5],
        vec![1.0, 0.0, 0.0],
        0.0,
        vec![1.0],
        DMatrix::zeros(1, 1),
        &["R"],
        LossKind::Square,
    )
    .unwrap();
    assert!(p.with_weights(Weights::Scalar(0.0)).is_err());
}

#[test]
fn bad_bounds_are_rejected() {
    let p = paper_problem(16);
    assert!(matches!(
        fit(&p, &[(0.0, 2.0)], &FitOptions::default()),
        Err(EstimError::InvalidBounds(_))
    ));
    assert!(matches!(
        fit(
            &p,
            &[(0.0, 2.0), (2.0, 0.0)],
            &FitOptions::default()
        ),
        Err(EstimError::InvalidBounds(_))
    ));
    assert!(matches!(
        fit(
            &p,
            &[(0.0, 2.0), (0.0, f64::INFINITY)],
            &FitOptions::default()
        ),
        Err(EstimError::InvalidBounds(_))
    ));
}
