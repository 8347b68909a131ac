//! Assembling ODE systems from typed transitions or explicit equations.
//!
//! A [`Transition`] is a plain record (origin, optional destination, rate
//! equation string, kind); [`OdeModel::build`] parses the equations against
//! the symbol table, assembles the right-hand side by the signed-sum rule,
//! and derives the Jacobian and parameter-gradient matrices symbolically.

mod unroll;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{
    canonical_equal, is_zero, parse, Expr, ExprError, SymbolTable, Tape,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("wrongly typed transition in {argument} list: {origin} has type {found}")]
    WrongKind {
        argument: &'static str,
        origin: String,
        found: String,
    },
    #[error("transition from {0} has no destination")]
    MissingDestination(String),
    #[error("{kind} transition on {origin} must not have a destination")]
    UnexpectedDestination { kind: String, origin: String },
    #[error("{kind} transition must name exactly one origin state")]
    SingleOriginRequired { kind: String },
    #[error("origin and destination overlap on state {0}")]
    OverlappingStates(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("duplicate explicit equation for state {0}")]
    DuplicateOdeEquation(String),
    #[error("model has no dynamics (all transition lists empty)")]
    NoDynamics,
    #[error("model is not in transition form (explicit equations present)")]
    NotTransitionForm,
    #[error("parameter values missing for: {0}")]
    ParametersNotBound(String),
    #[error("initial condition not set")]
    InitialConditionNotSet,
    #[error("initial state has length {found}, expected {expected}")]
    InitialStateLength { expected: usize, found: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error(
        "ambiguous unroll: negative term {term} of {state} matches positive terms in several states: {candidates:?}"
    )]
    AmbiguousUnroll {
        state: String,
        term: String,
        candidates: Vec<String>,
    },
}

/// The four transition kinds: between-states flow, explicit ODE, birth, death.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitionType {
    #[serde(rename = "T")]
    Between,
    #[serde(rename = "ODE")]
    Ode,
    #[serde(rename = "B")]
    Birth,
    #[serde(rename = "D")]
    Death,
}

impl TransitionType {
    pub fn code(self) -> &'static str {
        match self {
            TransitionType::Between => "T",
            TransitionType::Ode => "ODE",
            TransitionType::Birth => "B",
            TransitionType::Death => "D",
        }
    }
}

impl std::fmt::Display for TransitionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Typed edge of the model graph. Origin and destination may list a state
/// several times; the multiplicity becomes the stoichiometric coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub origin: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub destination: Vec<String>,
    pub equation: String,
    #[serde(rename = "type")]
    pub kind: TransitionType,
}

impl Transition {
    pub fn between(
        origin: impl Into<String>,
        destination: impl Into<String>,
        equation: impl Into<String>,
    ) -> Transition {
        Transition {
            origin: vec![origin.into()],
            destination: vec![destination.into()],
            equation: equation.into(),
            kind: TransitionType::Between,
        }
    }

    pub fn ode(state: impl Into<String>, equation: impl Into<String>) -> Transition {
        Transition {
            origin: vec![state.into()],
            destination: Vec::new(),
            equation: equation.into(),
            kind: TransitionType::Ode,
        }
    }

    pub fn birth(state: impl Into<String>, equation: impl Into<String>) -> Transition {
        Transition {
            origin: vec![state.into()],
            destination: Vec::new(),
            equation: equation.into(),
            kind: TransitionType::Birth,
        }
    }

    pub fn death(state: impl Into<String>, equation: impl Into<String>) -> Transition {
        Transition {
            origin: vec![state.into()],
            destination: Vec::new(),
            equation: equation.into(),
            kind: TransitionType::Death,
        }
    }
}

/// One jump channel of a transition-form model: rate plus the integer state
/// change applied when the channel fires.
#[derive(Clone, Debug)]
pub struct JumpChannel {
    pub rate: Expr,
    pub delta: Vec<i64>,
}

#[derive(Clone, Debug)]
pub(crate) struct CompiledSystem {
    pub rhs: Vec<Tape>,
    pub jac: Vec<Vec<Tape>>,
    pub grad: Vec<Vec<Tape>>,
    pub channel_rates: Vec<Tape>,
    pub max_stack: usize,
}

/// Compiled ODE system: frozen symbolic structure plus mutable numeric
/// bindings (parameter values, initial condition).
#[derive(Clone, Debug)]
pub struct OdeModel {
    table: SymbolTable,
    transitions: Vec<Transition>,
    rhs: Vec<Expr>,
    jacobian: Vec<Vec<Expr>>,
    grad: Vec<Vec<Expr>>,
    channels: Option<Vec<JumpChannel>>,
    compiled: CompiledSystem,
    param_values: Vec<Option<f64>>,
    initial: Option<(Vec<f64>, f64)>,
}

impl OdeModel {
    /// Assemble a model from the three typed argument lists. Each transition
    /// must arrive in the list matching its kind.
    pub fn build(
        table: SymbolTable,
        transitions: Vec<Transition>,
        odes: Vec<Transition>,
        birth_death: Vec<Transition>,
    ) -> Result<OdeModel, ModelError> {
        for tr in &transitions {
            if tr.kind != TransitionType::Between {
                return Err(wrong_kind("transition", tr));
            }
        }
        for tr in &odes {
            if tr.kind != TransitionType::Ode {
                return Err(wrong_kind("ode", tr));
            }
        }
        for tr in &birth_death {
            if !matches!(tr.kind, TransitionType::Birth | TransitionType::Death) {
                return Err(wrong_kind("birth_death", tr));
            }
        }
        if transitions.is_empty() && odes.is_empty() && birth_death.is_empty() {
            return Err(ModelError::NoDynamics);
        }
        let has_odes = !odes.is_empty();
        let mut all = transitions;
        all.extend(odes);
        all.extend(birth_death);
        Self::assemble(table, all, has_odes)
    }

    fn assemble(
        table: SymbolTable,
        transitions: Vec<Transition>,
        has_odes: bool,
    ) -> Result<OdeModel, ModelError> {
        let n = table.n_states();
        let mut terms: Vec<Vec<Expr>> = vec![Vec::new(); n];
        let mut ode_seen: Vec<bool> = vec![false; n];
        let mut channels: Vec<JumpChannel> = Vec::new();

        for tr in &transitions {
            let rate = parse(&tr.equation, &table)?;
            let origin_counts = state_counts(&table, &tr.origin)?;
            match tr.kind {
                TransitionType::Between => {
                    if tr.destination.is_empty() {
                        return Err(ModelError::MissingDestination(tr.origin.join("+")));
                    }
                    let dest_counts = state_counts(&table, &tr.destination)?;
                    for idx in origin_counts.keys() {
                        if dest_counts.contains_key(idx) {
                            return Err(ModelError::OverlappingStates(
                                table.states()[*idx].clone(),
                            ));
                        }
                    }
                    let mut delta = vec![0i64; n];
                    for (&idx, &count) in &origin_counts {
                        terms[idx].push(scaled(-(count as i64), &rate));
                        delta[idx] -= count as i64;
                    }
                    for (&idx, &count) in &dest_counts {
                        terms[idx].push(scaled(count as i64, &rate));
                        delta[idx] += count as i64;
                    }
                    channels.push(JumpChannel { rate, delta });
                }
                TransitionType::Ode | TransitionType::Birth | TransitionType::Death => {
                    if !tr.destination.is_empty() {
                        return Err(ModelError::UnexpectedDestination {
                            kind: tr.kind.code().into(),
                            origin: tr.origin.join("+"),
                        });
                    }
                    if origin_counts.len() != 1 || origin_counts.values().next() != Some(&1) {
                        return Err(ModelError::SingleOriginRequired {
                            kind: tr.kind.code().into(),
                        });
                    }
                    let idx = *origin_counts.keys().next().expect("one origin");
                    match tr.kind {
                        TransitionType::Ode => {
                            if ode_seen[idx] {
                                return Err(ModelError::DuplicateOdeEquation(
                                    table.states()[idx].clone(),
                                ));
                            }
                            ode_seen[idx] = true;
                            terms[idx].push(rate);
                        }
                        TransitionType::Birth => {
                            terms[idx].push(rate.clone());
                            let mut delta = vec![0i64; n];
                            delta[idx] = 1;
                            channels.push(JumpChannel { rate, delta });
                        }
                        TransitionType::Death => {
                            terms[idx].push(Expr::neg(rate.clone()));
                            let mut delta = vec![0i64; n];
                            delta[idx] = -1;
                            channels.push(JumpChannel { rate, delta });
                        }
                        TransitionType::Between => unreachable!(),
                    }
                }
            }
        }

        let rhs: Vec<Expr> = terms.into_iter().map(Expr::sum).collect();
        let jacobian: Vec<Vec<Expr>> = rhs
            .iter()
            .map(|row| {
                table
                    .states()
                    .iter()
                    .map(|s| row.differentiate(s))
                    .collect()
            })
            .collect();
        let grad: Vec<Vec<Expr>> = rhs
            .iter()
            .map(|row| {
                table
                    .params()
                    .iter()
                    .map(|p| row.differentiate(p))
                    .collect()
            })
            .collect();

        let compile_all = |rows: &[Vec<Expr>]| -> Result<Vec<Vec<Tape>>, ExprError> {
            rows.iter()
                .map(|row| row.iter().map(|e| Tape::compile(e, &table)).collect())
                .collect()
        };
        let rhs_tapes: Vec<Tape> = rhs
            .iter()
            .map(|e| Tape::compile(e, &table))
            .collect::<Result<_, _>>()?;
        let jac_tapes = compile_all(&jacobian)?;
        let grad_tapes = compile_all(&grad)?;
        let channel_tapes: Vec<Tape> = channels
            .iter()
            .map(|ch| Tape::compile(&ch.rate, &table))
            .collect::<Result<_, _>>()?;
        let max_stack = rhs_tapes
            .iter()
            .chain(jac_tapes.iter().flatten())
            .chain(grad_tapes.iter().flatten())
            .chain(channel_tapes.iter())
            .map(Tape::max_stack)
            .max()
            .unwrap_or(1);

        let n_params = table.n_params();
        Ok(OdeModel {
            table,
            transitions,
            rhs,
            jacobian,
            grad,
            channels: (!has_odes).then_some(channels),
            compiled: CompiledSystem {
                rhs: rhs_tapes,
                jac: jac_tapes,
                grad: grad_tapes,
                channel_rates: channel_tapes,
                max_stack,
            },
            param_values: vec![None; n_params],
            initial: None,
        })
    }

    pub fn table(&self) -> &SymbolTable {
        &self.table
    }

    pub fn states(&self) -> &[String] {
        self.table.states()
    }

    pub fn params(&self) -> &[String] {
        self.table.params()
    }

    pub fn n_states(&self) -> usize {
        self.table.n_states()
    }

    pub fn n_params(&self) -> usize {
        self.table.n_params()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Right-hand side expressions in state declaration order.
    pub fn ode_equations(&self) -> &[Expr] {
        &self.rhs
    }

    /// `∂f/∂x` as expressions, row per state equation, column per state.
    pub fn jacobian_equations(&self) -> &[Vec<Expr>] {
        &self.jacobian
    }

    /// `∂f/∂θ` as expressions, row per state equation, column per parameter.
    pub fn grad_equations(&self) -> &[Vec<Expr>] {
        &self.grad
    }

    /// Jump channels; present only for models built purely from T/B/D
    /// transitions.
    pub fn jump_channels(&self) -> Option<&[JumpChannel]> {
        self.channels.as_deref()
    }

    /// True when every second partial of the right-hand side with respect to
    /// the states vanishes identically.
    pub fn is_linear(&self) -> bool {
        self.jacobian.iter().flatten().all(|entry| {
            self.table
                .states()
                .iter()
                .all(|s| is_zero(&entry.differentiate(s)))
        })
    }

    /// Set (or update) parameter values by name; later calls merge.
    pub fn set_parameters<'a>(
        &mut self,
        values: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<(), ModelError> {
        for (name, value) in values {
            let idx = self
                .table
                .param_index(name)
                .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))?;
            self.param_values[idx] = Some(value);
        }
        Ok(())
    }

    pub fn set_initial(&mut self, state: Vec<f64>, t0: f64) -> Result<(), ModelError> {
        if state.len() != self.n_states() {
            return Err(ModelError::InitialStateLength {
                expected: self.n_states(),
                found: state.len(),
            });
        }
        self.initial = Some((state, t0));
        Ok(())
    }

    /// Full parameter vector in declaration order; errors naming any unbound
    /// parameters.
    pub fn bound_params(&self) -> Result<Vec<f64>, ModelError> {
        let missing: Vec<&str> = self
            .param_values
            .iter()
            .zip(self.table.params())
            .filter(|(v, _)| v.is_none())
            .map(|(_, name)| name.as_str())
            .collect();
        if missing.is_empty() {
            Ok(self.param_values.iter().map(|v| v.unwrap()).collect())
        } else {
            Err(ModelError::ParametersNotBound(missing.join(", ")))
        }
    }

    pub fn param_value(&self, name: &str) -> Option<f64> {
        self.table
            .param_index(name)
            .and_then(|i| self.param_values[i])
    }

    pub fn initial(&self) -> Option<(&[f64], f64)> {
        self.initial.as_ref().map(|(x, t)| (x.as_slice(), *t))
    }

    pub fn initial_required(&self) -> Result<(&[f64], f64), ModelError> {
        self.initial().ok_or(ModelError::InitialConditionNotSet)
    }

    /// Numeric evaluator bound to the model's own parameter values.
    pub fn evaluator(&self) -> Result<Evaluator<'_>, ModelError> {
        Ok(Evaluator::new(self, self.bound_params()?))
    }

    /// Numeric evaluator with an explicit full parameter vector.
    pub fn evaluator_with(&self, params: &[f64]) -> Evaluator<'_> {
        assert_eq!(params.len(), self.n_params(), "parameter vector length");
        Evaluator::new(self, params.to_vec())
    }

    /// Numeric right-hand side `f(x, t)`.
    pub fn rhs_at(&self, x: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
        let mut ev = self.evaluator()?;
        let mut out = vec![0.0; self.n_states()];
        ev.rhs(t, x, &mut out)?;
        Ok(out)
    }

    /// Argument-swapped twin of [`rhs_at`](Self::rhs_at).
    pub fn rhs_at_t(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.rhs_at(x, t)
    }

    /// Numeric Jacobian `∂f/∂x` at `(x, t)`.
    pub fn jacobian_at(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>, ModelError> {
        let mut ev = self.evaluator()?;
        ev.jacobian(t, x)
    }

    /// Argument-swapped twin of [`jacobian_at`](Self::jacobian_at).
    pub fn jacobian_at_t(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        self.jacobian_at(x, t)
    }

    /// Add birth/death processes, registering any new parameters first. The
    /// symbolic structure is rebuilt; existing parameter values and the
    /// initial condition carry over.
    pub fn add_birth_death(
        &self,
        new_params: &[&str],
        processes: Vec<Transition>,
    ) -> Result<OdeModel, ModelError> {
        for tr in &processes {
            if !matches!(tr.kind, TransitionType::Birth | TransitionType::Death) {
                return Err(wrong_kind("birth_death", tr));
            }
        }
        let table = self.table.with_params(new_params.iter().copied())?;
        let has_odes = self
            .transitions
            .iter()
            .any(|tr| tr.kind == TransitionType::Ode);
        let mut transitions = self.transitions.clone();
        transitions.extend(processes);
        let mut model = Self::assemble(table, transitions, has_odes)?;
        for (idx, value) in self.param_values.iter().enumerate() {
            model.param_values[idx] = *value;
        }
        model.initial = self.initial.clone();
        Ok(model)
    }
}

fn wrong_kind(argument: &'static str, tr: &Transition) -> ModelError {
    ModelError::WrongKind {
        argument,
        origin: tr.origin.join("+"),
        found: tr.kind.code().into(),
    }
}

fn state_counts(
    table: &SymbolTable,
    names: &[String],
) -> Result<BTreeMap<usize, usize>, ModelError> {
    let mut counts = BTreeMap::new();
    for name in names {
        let idx = table
            .state_index(name)
            .ok_or_else(|| ModelError::UnknownState(name.clone()))?;
        *counts.entry(idx).or_insert(0) += 1;
    }
    Ok(counts)
}

fn scaled(count: i64, rate: &Expr) -> Expr {
    Expr::product(vec![Expr::int(count), rate.clone()])
}

/// Reusable numeric evaluation context: slot buffer `[states…, params…, t]`
/// plus a scratch stack for the compiled tapes.
#[derive(Clone, Debug)]
pub struct Evaluator<'m> {
    model: &'m OdeModel,
    slots: Vec<f64>,
    stack: Vec<f64>,
}

impl<'m> Evaluator<'m> {
    fn new(model: &'m OdeModel, params: Vec<f64>) -> Evaluator<'m> {
        let mut slots = vec![0.0; model.table.n_slots()];
        let n = model.n_states();
        slots[n..n + params.len()].copy_from_slice(&params);
        Evaluator {
            model,
            slots,
            stack: Vec::with_capacity(model.compiled.max_stack),
        }
    }

    pub fn model(&self) -> &'m OdeModel {
        self.model
    }

    fn load(&mut self, t: f64, x: &[f64]) {
        let n = self.model.n_states();
        debug_assert_eq!(x.len(), n);
        self.slots[..n].copy_from_slice(x);
        let t_slot = self.slots.len() - 1;
        self.slots[t_slot] = t;
    }

    pub fn rhs(&mut self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        self.load(t, x);
        for (o, tape) in out.iter_mut().zip(&self.model.compiled.rhs) {
            *o = tape.eval(&self.slots, &mut self.stack)?;
        }
        Ok(())
    }

    pub fn jacobian(&mut self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        let n = self.model.n_states();
        let mut out = DMatrix::zeros(n, n);
        self.jacobian_into(t, x, &mut out)?;
        Ok(out)
    }

    pub fn jacobian_into(
        &mut self,
        t: f64,
        x: &[f64],
        out: &mut DMatrix<f64>,
    ) -> Result<(), ModelError> {
        self.load(t, x);
        for (i, row) in self.model.compiled.jac.iter().enumerate() {
            for (j, tape) in row.iter().enumerate() {
                out[(i, j)] = tape.eval(&self.slots, &mut self.stack)?;
            }
        }
        Ok(())
    }

    /// Parameter-gradient entry tapes restricted to the given columns;
    /// `out` is `n_states × columns.len()`.
    pub fn grad_columns_into(
        &mut self,
        t: f64,
        x: &[f64],
        columns: &[usize],
        out: &mut DMatrix<f64>,
    ) -> Result<(), ModelError> {
        self.load(t, x);
        for (i, row) in self.model.compiled.grad.iter().enumerate() {
            for (jj, &j) in columns.iter().enumerate() {
                out[(i, jj)] = row[j].eval(&self.slots, &mut self.stack)?;
            }
        }
        Ok(())
    }

    pub fn grad(&mut self, t: f64, x: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        let n = self.model.n_states();
        let p = self.model.n_params();
        let columns: Vec<usize> = (0..p).collect();
        let mut out = DMatrix::zeros(n, p);
        self.grad_columns_into(t, x, &columns, &mut out)?;
        Ok(out)
    }

    /// Evaluate the rates of the jump channels.
    pub fn channel_rates(&mut self, t: f64, x: &[f64], out: &mut [f64]) -> Result<(), ModelError> {
        if self.model.jump_channels().is_none() {
            return Err(ModelError::NotTransitionForm);
        }
        self.load(t, x);
        for (o, tape) in out.iter_mut().zip(&self.model.compiled.channel_rates) {
            *o = tape.eval(&self.slots, &mut self.stack)?;
        }
        Ok(())
    }
}

/// Check `a` and `b` agree row by row under canonical equality.
pub fn rhs_canonical_equal(a: &OdeModel, b: &OdeModel) -> bool {
    a.n_states() == b.n_states()
        && a.rhs
            .iter()
            .zip(&b.rhs)
            .all(|(ra, rb)| canonical_equal(ra, rb))
}
