use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::{canonical_equal, is_zero, parse};
use crate::models;
use crate::solver::{integrate, SolverConfig};

use super::*;

fn vector_host() -> OdeModel {
    models::template("sis_vector_host")
        .unwrap()
        .structure()
        .unroll()
        .unwrap()
}

#[test]
fn vector_host_dfe_matches_hand_solution() {
    let model = vector_host();
    let equilibrium = dfe(&model, &["I_v", "I_h"]).unwrap();
    let table = model.table();
    for (state, expect) in [
        ("S_h", "lambda_h/mu_h"),
        ("S_v", "lambda_v/mu_v"),
        ("I_h", "0"),
        ("I_v", "0"),
    ] {
        let want = parse(expect, table).unwrap();
        assert!(
            canonical_equal(&equilibrium[state], &want),
            "{state}: {} vs {want}",
            equilibrium[state]
        );
    }
}

#[test]
fn dfe_substitution_zeroes_every_row() {
    let model = vector_host();
    let equilibrium = dfe(&model, &["I_v", "I_h"]).unwrap();
    for row in model.ode_equations() {
        let mut substituted = row.clone();
        for (name, value) in &equilibrium {
            substituted = substituted.substitute(name, value);
        }
        assert!(is_zero(&substituted), "row {row} did not vanish");
    }
}

#[test]
fn closed_sir_equilibrium_is_not_unique() {
    let model = models::template("sir").unwrap().structure();
    match dfe(&model, &["I"]) {
        Err(EpiError::SingularEquilibrium(state)) => assert_eq!(state, "S"),
        other => panic!("expected singular equilibrium, got {other:?}"),
    }
}

#[test]
fn sir_birth_death_dfe_is_population_over_death_rate() {
    let model = models::template("sir_birth_death").unwrap().structure();
    let equilibrium = dfe(&model, &["I"]).unwrap();
    let want = parse("B/mu", model.table()).unwrap();
    assert!(canonical_equal(&equilibrium["S"], &want));
    // R is inert for this fixture and pinned to zero
    assert!(equilibrium["R"].is_zero_const());
}

#[test]
fn constant_importation_has_no_dfe() {
    // births straight into the infective compartment
    let table = crate::expr::SymbolTable::new(vec!["S", "I"], vec!["b", "g", "mu"]).unwrap();
    let model = OdeModel::build(
        table,
        vec![],
        vec![],
        vec![
            crate::model::Transition::birth("I", "b"),
            crate::model::Transition::death("I", "g*I"),
            crate::model::Transition::death("S", "mu*S"),
            crate::model::Transition::birth("S", "b"),
        ],
    )
    .unwrap();
    assert!(matches!(
        dfe(&model, &["I"]),
        Err(EpiError::NoDiseaseFreeEquilibrium(state)) if state == "I"
    ));
}

#[test]
fn vector_host_r0_matches_printed_expression() {
    let model = vector_host();
    let result = r0(&model, &["I_v", "I_h"]).unwrap();
    let symbolic = result.as_symbolic().expect("unbound model gives symbolic");
    // |mu_v| folded as mu_v^2 under the radical (equivalent for positive
    // parameters)
    let want = parse(
        "sqrt(beta_h*beta_v*lambda_h*lambda_v/(mu_h*mu_v^2*(gamma+mu_h)))",
        model.table(),
    )
    .unwrap();
    assert!(
        canonical_equal(symbolic, &want),
        "got {symbolic}, want {want}"
    );
}

#[test]
fn sir_birth_death_r0_single_disease_state() {
    let model = models::template("sir_birth_death").unwrap().structure();
    let result = r0(&model, &["I"]).unwrap();
    let symbolic = result.as_symbolic().unwrap();
    // F = beta*S*/N with S* = B/mu, V = gamma + mu
    let want = parse("beta*B/(mu*N*(gamma+mu))", model.table()).unwrap();
    assert!(canonical_equal(symbolic, &want), "got {symbolic}");

    // with mu = B/N this collapses to beta/(gamma+mu); numeric check
    let n = 7_781_984.0;
    let b = 126_372.0 / 365.0;
    let mu = b / n;
    let bound = models::sir_birth_death(&[
        ("beta", 3.6),
        ("gamma", 0.2),
        ("N", n),
        ("B", b),
        ("mu", mu),
    ])
    .unwrap();
    let numeric = r0(&bound, &["I"]).unwrap().as_numeric().unwrap();
    let want = 3.6 / (0.2 + mu);
    assert!(
        (numeric - want).abs() <= 1e-10 * want,
        "{numeric} vs {want}"
    );
}

#[test]
fn numeric_and_symbolic_agree_on_random_parameter_sets() {
    let template = models::template("sis_vector_host").unwrap();
    let structure = vector_host();
    let symbolic = r0(&structure, &["I_v", "I_h"])
        .unwrap()
        .as_symbolic()
        .unwrap()
        .clone();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..20 {
        let values: Vec<(&str, f64)> = template
            .params
            .iter()
            .map(|name| (*name, 0.05 + rng.gen::<f64>() * 3.0))
            .collect();
        let bound = {
            let mut m = structure.clone();
            m.set_parameters(values.iter().copied()).unwrap();
            m
        };
        let numeric = r0(&bound, &["I_v", "I_h"])
            .unwrap()
            .as_numeric()
            .unwrap();
        let mut bindings = std::collections::HashMap::new();
        for (name, v) in &values {
            bindings.insert(name.to_string(), *v);
        }
        let via_symbolic = symbolic.evaluate(&bindings).unwrap();
        assert!(
            (numeric - via_symbolic).abs() <= 1e-10 * via_symbolic.abs().max(1e-10),
            "case {case}: {numeric} vs {via_symbolic}"
        );
    }
}

#[test]
fn epidemic_grows_iff_r0_exceeds_one() {
    // tune beta so the reproduction number is 0.5 or 2.0 and watch the
    // infective compartment over a short horizon
    let n = 1e6;
    let b = 100.0;
    let mu = b / n;
    for (target, growing) in [(0.5, false), (2.0, true)] {
        let beta = target * (0.2 + mu);
        let mut model = models::sir_birth_death(&[
            ("beta", beta),
            ("gamma", 0.2),
            ("N", n),
            ("B", b),
            ("mu", mu),
        ])
        .unwrap();
        let numeric = r0(&model, &["I"]).unwrap().as_numeric().unwrap();
        assert!((numeric - target).abs() <= 1e-9 * target);
        model.set_initial(vec![n - 100.0, 100.0, 0.0], 0.0).unwrap();
        let traj = integrate(&model, &[2.0], &SolverConfig::default()).unwrap();
        let grew = traj.value(0, 1) > 100.0;
        assert_eq!(grew, growing, "R0 = {target}");
    }
}

#[test]
fn rate_scaling_moves_r0_as_the_symbolic_form_predicts() {
    let structure = vector_host();
    let symbolic = r0(&structure, &["I_v", "I_h"])
        .unwrap()
        .as_symbolic()
        .unwrap()
        .clone();
    let base = [
        ("beta_v", 0.4),
        ("beta_h", 0.6),
        ("mu_v", 0.3),
        ("mu_h", 0.1),
        ("lambda_v", 2.0),
        ("lambda_h", 1.5),
        ("gamma", 0.7),
    ];
    let eval = |values: &[(&str, f64)]| {
        let mut bindings = std::collections::HashMap::new();
        for (name, v) in values {
            bindings.insert(name.to_string(), *v);
        }
        symbolic.evaluate(&bindings).unwrap()
    };
    let r_base = eval(&base);
    // scaling both transmission rates by c scales R0 by c (it is
    // sqrt(beta_h·beta_v·…)), matching the closed form
    let c = 2.5;
    let scaled: Vec<(&str, f64)> = base
        .iter()
        .map(|(name, v)| {
            if name.starts_with("beta") {
                (*name, v * c)
            } else {
                (*name, *v)
            }
        })
        .collect();
    let r_scaled = eval(&scaled);
    assert!((r_scaled - c * r_base).abs() <= 1e-12 * r_scaled);
}

#[test]
fn invalid_disease_sets_are_rejected() {
    let model = vector_host();
    assert!(matches!(dfe(&model, &[]), Err(EpiError::EmptyDiseaseSet)));
    assert!(matches!(
        dfe(&model, &["X"]),
        Err(EpiError::UnknownDiseaseState(_))
    ));
}

#[test]
fn ode_form_models_cannot_take_r0() {
    let model = models::template("sis_vector_host").unwrap().structure();
    assert!(matches!(
        r0(&model, &["I_v", "I_h"]),
        Err(EpiError::Model(ModelError::NotTransitionForm))
    ));
}

#[test]
fn nonlinear_residual_subsystem_is_reported() {
    // logistic growth in the susceptible pool survives the disease-free
    // substitution and is quadratic in S
    let table = crate::expr::SymbolTable::new(vec!["S", "I"], vec!["r", "beta", "g"]).unwrap();
    let model = OdeModel::build(
        table,
        vec![crate::model::Transition::between("S", "I", "beta*S*I")],
        vec![],
        vec![
            crate::model::Transition::birth("S", "r*S"),
            crate::model::Transition::death("S", "r*S^2"),
            crate::model::Transition::death("I", "g*I"),
        ],
    )
    .unwrap();
    assert!(matches!(
        dfe(&model, &["I"]),
        Err(EpiError::NonlinearResidualSystem(_))
    ));
}

#[test]
fn spectral_radius_matches_known_eigenvalues() {
    // companion-style checks for the no-eigensolver path
    let m2 = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]); // eigenvalues 1, 3
    assert!((spectral_radius(&m2) - 3.0).abs() < 1e-10);
    let m3 = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 2.0]);
    assert!((spectral_radius(&m3) - 4.0).abs() < 1e-10);
    let m4 = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 1.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.5, 0.1, //
            0.0, 0.0, 0.1, 0.5,
        ],
    ); // eigenvalues ±1, 0.4, 0.6
    assert!((spectral_radius(&m4) - 1.0).abs() < 1e-10);
    // power-iteration path (5×5 nonnegative)
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m5 = DMatrix::from_fn(5, 5, |_, _| rng.gen::<f64>());
    let sym = (&m5 + m5.transpose()) * 0.5;
    let want = sym
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()));
    assert!((spectral_radius(&sym) - want).abs() <= 1e-8 * want);
}
