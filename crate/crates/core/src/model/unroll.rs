//! Decompose explicit equations back into transitions and birth/death
//! processes: a negative monomial of one state that re-appears positively in
//! exactly one other state is a flow between them; leftover positive terms
//! are births, leftover negative terms deaths.

use crate::expr::{canonical_equal, expand_to_terms, Expr};

use super::{ModelError, OdeModel, Transition};

#[derive(Clone)]
struct Term {
    negative: bool,
    monomial: Expr,
    used: bool,
}

impl OdeModel {
    /// Rewrite the model in transition form. The reassembled right-hand side
    /// equals the original row by row; a negative term matching positive terms
    /// in more than one state is an error rather than a guess.
    pub fn unroll(&self) -> Result<OdeModel, ModelError> {
        let states = self.table.states();
        let mut terms: Vec<Vec<Term>> = self
            .rhs
            .iter()
            .map(|row| {
                expand_to_terms(row)
                    .into_iter()
                    .map(|t| Term {
                        negative: t.negative,
                        monomial: t.monomial,
                        used: false,
                    })
                    .collect()
            })
            .collect();

        let mut transitions: Vec<Transition> = Vec::new();

        for i in 0..terms.len() {
            for ti in 0..terms[i].len() {
                if terms[i][ti].used || !terms[i][ti].negative {
                    continue;
                }
                let monomial = terms[i][ti].monomial.clone();
                let mut candidate_states: Vec<usize> = Vec::new();
                for (j, row) in terms.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let matches = row
                        .iter()
                        .any(|t| !t.used && !t.negative && canonical_equal(&t.monomial, &monomial));
                    if matches {
                        candidate_states.push(j);
                    }
                }
                match candidate_states.len() {
                    0 => {} // stays a death process
                    1 => {
                        let j = candidate_states[0];
                        let tj = terms[j]
                            .iter()
                            .position(|t| {
                                !t.used && !t.negative && canonical_equal(&t.monomial, &monomial)
                            })
                            .expect("candidate state has a matching term");
                        terms[i][ti].used = true;
                        terms[j][tj].used = true;
                        transitions.push(Transition::between(
                            states[i].clone(),
                            states[j].clone(),
                            monomial.to_string(),
                        ));
                    }
                    _ => {
                        return Err(ModelError::AmbiguousUnroll {
                            state: states[i].clone(),
                            term: monomial.to_string(),
                            candidates: candidate_states
                                .into_iter()
                                .map(|j| states[j].clone())
                                .collect(),
                        });
                    }
                }
            }
        }

        let mut birth_death: Vec<Transition> = Vec::new();
        for (i, row) in terms.iter().enumerate() {
            for term in row.iter().filter(|t| !t.used) {
                let equation = term.monomial.to_string();
                if term.negative {
                    birth_death.push(Transition::death(states[i].clone(), equation));
                } else {
                    birth_death.push(Transition::birth(states[i].clone(), equation));
                }
            }
        }

        // a system with identically zero right-hand side unrolls to no
        // transitions at all
        let mut all = transitions;
        all.extend(birth_death);
        let mut model = Self::assemble(self.table.clone(), all, false)?;
        debug_assert!(
            super::rhs_canonical_equal(self, &model),
            "unroll reassembly changed the right-hand side"
        );
        model.param_values = self.param_values.clone();
        model.initial = self.initial.clone();
        Ok(model)
    }
}
