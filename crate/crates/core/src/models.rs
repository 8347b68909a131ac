//! Predefined model fixtures: the proportion-scaled SIR, the tutorial SIR
//! with explicit population size, SIR with births and deaths, SEIR, and the
//! vector-host SIS system.
//!
//! Note on the vector-host signs: the published form of that system carries a
//! `+mu_h*S_h` term in the susceptible-host equation while treating `mu_h` as
//! a death rate everywhere else; the conventional `-mu_h*S_h` used here is
//! what reproduces the accompanying reproduction-number expression.

use crate::expr::SymbolTable;
use crate::model::{ModelError, OdeModel, Transition};

/// A named template: parameter list plus a structure builder.
#[derive(Clone, Copy)]
pub struct ModelTemplate {
    pub name: &'static str,
    pub params: &'static [&'static str],
    pub description: &'static str,
    build: fn() -> OdeModel,
}

impl ModelTemplate {
    /// Unbound structure (no parameter values attached).
    pub fn structure(&self) -> OdeModel {
        (self.build)()
    }

    /// Bound model; every template parameter must be given a value.
    pub fn build(&self, values: &[(&str, f64)]) -> Result<OdeModel, ModelError> {
        let mut model = self.structure();
        model.set_parameters(values.iter().copied())?;
        model.bound_params()?;
        Ok(model)
    }
}

fn build_sir() -> OdeModel {
    let table = SymbolTable::new(vec!["S", "I", "R"], vec!["beta", "gamma"]).unwrap();
    OdeModel::build(
        table,
        vec![
            Transition::between("S", "I", "beta*S*I"),
            Transition::between("I", "R", "gamma*I"),
        ],
        vec![],
        vec![],
    )
    .expect("template builds")
}

fn build_sir_n() -> OdeModel {
    let table = SymbolTable::new(vec!["S", "I", "R"], vec!["beta", "gamma", "N"]).unwrap();
    OdeModel::build(
        table,
        vec![
            Transition::between("S", "I", "beta*S*I/N"),
            Transition::between("I", "R", "gamma*I"),
        ],
        vec![],
        vec![],
    )
    .expect("template builds")
}

fn build_sir_birth_death() -> OdeModel {
    let table =
        SymbolTable::new(vec!["S", "I", "R"], vec!["beta", "gamma", "N", "B", "mu"]).unwrap();
    OdeModel::build(
        table,
        vec![
            Transition::between("S", "I", "beta*S*I/N"),
            Transition::between("I", "R", "gamma*I"),
        ],
        vec![],
        vec![
            Transition::birth("S", "B"),
            Transition::death("S", "mu*S"),
            Transition::death("I", "mu*I"),
        ],
    )
    .expect("template builds")
}

fn build_seir() -> OdeModel {
    let table = SymbolTable::new(vec!["S", "E", "I", "R"], vec!["beta", "alpha", "gamma"]).unwrap();
    OdeModel::build(
        table,
        vec![
            Transition::between("S", "E", "beta*S*I"),
            Transition::between("E", "I", "alpha*E"),
            Transition::between("I", "R", "gamma*I"),
        ],
        vec![],
        vec![],
    )
    .expect("template builds")
}

fn build_sis_vector_host() -> OdeModel {
    let table = SymbolTable::new(
        vec!["S_v", "S_h", "I_v", "I_h"],
        vec![
            "beta_v", "beta_h", "mu_v", "mu_h", "lambda_v", "lambda_h", "gamma",
        ],
    )
    .unwrap();
    OdeModel::build(
        table,
        vec![],
        vec![
            Transition::ode("S_h", "lambda_h - mu_h*S_h - beta_h*S_h*I_v + gamma*I_h"),
            Transition::ode("S_v", "lambda_v - mu_v*S_v - beta_v*S_v*I_h"),
            Transition::ode("I_h", "beta_h*S_h*I_v - (mu_h + gamma)*I_h"),
            Transition::ode("I_v", "beta_v*S_v*I_h - mu_v*I_v"),
        ],
        vec![],
    )
    .expect("template builds")
}

pub const TEMPLATES: &[ModelTemplate] = &[
    ModelTemplate {
        name: "sir",
        params: &["beta", "gamma"],
        description: "proportion-scaled SIR (no explicit population size)",
        build: build_sir,
    },
    ModelTemplate {
        name: "sir_n",
        params: &["beta", "gamma", "N"],
        description: "SIR with explicit population size N",
        build: build_sir_n,
    },
    ModelTemplate {
        name: "sir_birth_death",
        params: &["beta", "gamma", "N", "B", "mu"],
        description: "SIR with birth B on S and deaths mu*S, mu*I",
        build: build_sir_birth_death,
    },
    ModelTemplate {
        name: "seir",
        params: &["beta", "alpha", "gamma"],
        description: "proportion-scaled SEIR with incubation rate alpha",
        build: build_seir,
    },
    ModelTemplate {
        name: "sis_vector_host",
        params: &[
            "beta_v", "beta_h", "mu_v", "mu_h", "lambda_v", "lambda_h", "gamma",
        ],
        description: "vector-host SIS as explicit equations",
        build: build_sis_vector_host,
    },
];

pub fn template(name: &str) -> Option<&'static ModelTemplate> {
    TEMPLATES.iter().find(|t| t.name == name)
}

/// Bound proportion-scaled SIR.
pub fn sir(values: &[(&str, f64)]) -> Result<OdeModel, ModelError> {
    template("sir").expect("registered").build(values)
}

/// Bound tutorial SIR with explicit population size.
pub fn sir_n(values: &[(&str, f64)]) -> Result<OdeModel, ModelError> {
    template("sir_n").expect("registered").build(values)
}

/// Bound SIR with birth/death processes.
pub fn sir_birth_death(values: &[(&str, f64)]) -> Result<OdeModel, ModelError> {
    template("sir_birth_death").expect("registered").build(values)
}

/// Bound SEIR.
pub fn seir(values: &[(&str, f64)]) -> Result<OdeModel, ModelError> {
    template("seir").expect("registered").build(values)
}

/// Bound vector-host SIS.
pub fn sis_vector_host(values: &[(&str, f64)]) -> Result<OdeModel, ModelError> {
    template("sis_vector_host").expect("registered").build(values)
}

#[cfg(test)]
mod tests {
    use crate::expr::{canonical_equal, is_zero, parse, Expr};
    use crate::model::{rhs_canonical_equal, TransitionType};

    use super::*;

    #[test]
    fn sir_template_matches_estimation_scenario_form() {
        let model = sir(&[("beta", 0.5), ("gamma", 1.0 / 3.0)]).unwrap();
        let expected = ["-beta*S*I", "beta*S*I - gamma*I", "gamma*I"];
        for (row, want) in model.ode_equations().iter().zip(expected) {
            let want = parse(want, model.table()).unwrap();
            assert!(canonical_equal(row, &want));
        }
    }

    #[test]
    fn templates_fail_on_missing_parameter() {
        assert!(sir(&[("beta", 0.5)]).is_err());
        assert!(sis_vector_host(&[("beta_v", 1.0)]).is_err());
    }

    #[test]
    fn every_template_unrolls_and_reassembles() {
        for template in TEMPLATES {
            let model = template.structure();
            let unrolled = model.unroll().unwrap_or_else(|e| {
                panic!("{} failed to unroll: {e}", template.name);
            });
            assert!(
                rhs_canonical_equal(&model, &unrolled),
                "{} unroll round-trip",
                template.name
            );
        }
    }

    #[test]
    fn every_template_jacobian_matches_finite_differences() {
        for template in TEMPLATES {
            let model = template.structure();
            let values: Vec<(&str, f64)> = template
                .params
                .iter()
                .enumerate()
                .map(|(i, name)| (*name, 0.3 + 0.2 * i as f64))
                .collect();
            let model = {
                let mut m = model;
                m.set_parameters(values.iter().copied()).unwrap();
                m
            };
            let x: Vec<f64> = (0..model.n_states()).map(|i| 1.0 + i as f64 * 0.5).collect();
            let jac = model.jacobian_at(&x, 0.0).unwrap();
            let h = 1e-6;
            for j in 0..model.n_states() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fp = model.rhs_at(&xp, 0.0).unwrap();
                let fm = model.rhs_at(&xm, 0.0).unwrap();
                for i in 0..model.n_states() {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!(
                        (jac[(i, j)] - fd).abs() <= 1e-5 * fd.abs().max(1.0),
                        "{} jac({i},{j})",
                        template.name
                    );
                }
            }
        }
    }

    #[test]
    fn closed_templates_conserve_mass() {
        for name in ["sir", "sir_n", "seir"] {
            let model = template(name).unwrap().structure();
            assert!(
                is_zero(&Expr::sum(model.ode_equations().to_vec())),
                "{name} is closed"
            );
        }
    }

    #[test]
    fn vector_host_unrolls_without_ambiguity() {
        let model = template("sis_vector_host").unwrap().structure();
        let unrolled = model.unroll().unwrap();
        let count = |kind: TransitionType| {
            unrolled
                .transitions()
                .iter()
                .filter(|t| t.kind == kind)
                .count()
        };
        // three flows (infections both ways plus host recovery), two births,
        // four deaths
        assert_eq!(count(TransitionType::Between), 3);
        assert_eq!(count(TransitionType::Birth), 2);
        assert_eq!(count(TransitionType::Death), 4);

        let table = unrolled.table();
        let find = |origin: &str, dest: &str| {
            unrolled
                .transitions()
                .iter()
                .find(|t| {
                    t.kind == TransitionType::Between
                        && t.origin == vec![origin.to_string()]
                        && t.destination == vec![dest.to_string()]
                })
                .unwrap_or_else(|| panic!("missing transition {origin} -> {dest}"))
        };
        let s_to_i_host = find("S_h", "I_h");
        assert!(canonical_equal(
            &parse(&s_to_i_host.equation, table).unwrap(),
            &parse("beta_h*S_h*I_v", table).unwrap()
        ));
        let recovery = find("I_h", "S_h");
        assert!(canonical_equal(
            &parse(&recovery.equation, table).unwrap(),
            &parse("gamma*I_h", table).unwrap()
        ));
        find("S_v", "I_v");
    }

    #[test]
    fn template_lookup_by_name() {
        assert!(template("sir").is_some());
        assert!(template("nope").is_none());
    }
}
