//! Disease-free equilibrium and basic reproduction number via the
//! next-generation matrix of a transition-form model.
//!
//! A between-states transition counts as a new infection when its origin lies
//! outside the disease set and its destination inside it; everything else on
//! a disease state is transfer or removal.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::expr::{canonicalize, is_zero, Expr, Func, TIME_SYMBOL};
use crate::model::{ModelError, OdeModel, TransitionType};

#[derive(Debug, Error)]
pub enum EpiError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("disease state set is empty")]
    EmptyDiseaseSet,
    #[error("unknown disease state `{0}`")]
    UnknownDiseaseState(String),
    #[error("remaining subsystem is nonlinear in state `{0}` at the disease-free point")]
    NonlinearResidualSystem(String),
    #[error("equilibrium not unique (singular residual system, state `{0}` free)")]
    SingularEquilibrium(String),
    #[error("residual system is inconsistent: no disease-free equilibrium")]
    InconsistentEquilibrium,
    #[error("right-hand side of `{0}` does not vanish at the disease-free point")]
    NoDiseaseFreeEquilibrium(String),
    #[error("transfer matrix V is singular at the disease-free equilibrium")]
    SingularTransferMatrix,
    #[error("symbolic reproduction number is limited to 2 disease states (got {0}); bind parameter values for a numeric result")]
    SymbolicUnsupported(usize),
}

/// User-supplied split of the states into disease and remaining compartments.
#[derive(Clone, Debug)]
pub struct DiseaseSplit {
    disease: Vec<usize>,
    rest: Vec<usize>,
}

impl DiseaseSplit {
    pub fn new(model: &OdeModel, disease_states: &[&str]) -> Result<DiseaseSplit, EpiError> {
        if disease_states.is_empty() {
            return Err(EpiError::EmptyDiseaseSet);
        }
        let mut disease = Vec::with_capacity(disease_states.len());
        for name in disease_states {
            let idx = model
                .table()
                .state_index(name)
                .ok_or_else(|| EpiError::UnknownDiseaseState(name.to_string()))?;
            if !disease.contains(&idx) {
                disease.push(idx);
            }
        }
        let rest = (0..model.n_states())
            .filter(|i| !disease.contains(i))
            .collect();
        Ok(DiseaseSplit { disease, rest })
    }

    pub fn disease_indices(&self) -> &[usize] {
        &self.disease
    }
}

/// Symbolic disease-free equilibrium: disease states pinned to zero, the
/// remaining states solved from the (necessarily linear) residual system.
/// States free of any constraint are accepted only when fully inert.
pub fn dfe(
    model: &OdeModel,
    disease_states: &[&str],
) -> Result<BTreeMap<String, Expr>, EpiError> {
    let split = DiseaseSplit::new(model, disease_states)?;
    dfe_for_split(model, &split)
}

fn dfe_for_split(
    model: &OdeModel,
    split: &DiseaseSplit,
) -> Result<BTreeMap<String, Expr>, EpiError> {
    let states = model.states();
    let zero = Expr::zero();

    // residual system: rest-state rows with disease states set to zero
    let residual: Vec<Expr> = split
        .rest
        .iter()
        .map(|&i| {
            let mut row = model.ode_equations()[i].clone();
            for &d in &split.disease {
                row = row.substitute(&states[d], &zero);
            }
            row
        })
        .collect();

    // linearity in the remaining states
    for (row, &i) in residual.iter().zip(&split.rest) {
        for &j in &split.rest {
            let first = row.differentiate(&states[j]);
            for &k in &split.rest {
                if !is_zero(&first.differentiate(&states[k])) {
                    return Err(EpiError::NonlinearResidualSystem(states[i].clone()));
                }
            }
        }
    }

    // assemble A·x + b = 0 over the remaining states
    let m = split.rest.len();
    let mut a: Vec<Vec<Expr>> = Vec::with_capacity(m);
    let mut b: Vec<Expr> = Vec::with_capacity(m);
    for row in &residual {
        a.push(
            split
                .rest
                .iter()
                .map(|&j| canonicalize(&row.differentiate(&states[j])))
                .collect(),
        );
        let mut constant = row.clone();
        for &j in &split.rest {
            constant = constant.substitute(&states[j], &zero);
        }
        b.push(canonicalize(&constant));
    }

    let solution = solve_symbolic_linear(model, split, a, b)?;

    let mut out = BTreeMap::new();
    for &d in &split.disease {
        out.insert(states[d].clone(), Expr::zero());
    }
    for (&i, expr) in split.rest.iter().zip(&solution) {
        out.insert(states[i].clone(), expr.clone());
    }

    // every right-hand side row must vanish at the equilibrium
    for (i, row) in model.ode_equations().iter().enumerate() {
        let mut substituted = row.clone();
        for (name, value) in &out {
            substituted = substituted.substitute(name, value);
        }
        if !is_zero(&substituted) {
            return Err(EpiError::NoDiseaseFreeEquilibrium(states[i].clone()));
        }
    }
    Ok(out)
}

/// Gaussian elimination over expressions for `A·x = -b`. Unconstrained
/// variables are set to zero when they appear nowhere in the model dynamics
/// and are an error otherwise.
fn solve_symbolic_linear(
    model: &OdeModel,
    split: &DiseaseSplit,
    mut a: Vec<Vec<Expr>>,
    mut b: Vec<Expr>,
) -> Result<Vec<Expr>, EpiError> {
    let states = model.states();
    let m = split.rest.len();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; m];
    let mut row = 0usize;

    for col in 0..m {
        let Some(pivot_row) = (row..m).find(|&r| !is_zero(&a[r][col])) else {
            continue;
        };
        a.swap(row, pivot_row);
        b.swap(row, pivot_row);
        pivot_of_col[col] = Some(row);
        for r in (row + 1)..m {
            if is_zero(&a[r][col]) {
                continue;
            }
            let factor = Expr::div(a[r][col].clone(), a[row][col].clone());
            for c in col..m {
                let updated = Expr::sub(
                    a[r][c].clone(),
                    Expr::mul(factor.clone(), a[row][c].clone()),
                );
                a[r][c] = canonicalize(&updated);
            }
            let updated = Expr::sub(b[r].clone(), Expr::mul(factor.clone(), b[row].clone()));
            b[r] = canonicalize(&updated);
        }
        row += 1;
        if row == m {
            break;
        }
    }

    // rows beyond the rank must be trivially consistent
    for r in row..m {
        if !is_zero(&b[r]) {
            return Err(EpiError::InconsistentEquilibrium);
        }
    }

    // free variables are only tolerated when fully inert
    for col in 0..m {
        if pivot_of_col[col].is_none() {
            let name = &states[split.rest[col]];
            let appears = model
                .ode_equations()
                .iter()
                .any(|rhs| rhs.depends_on(name));
            if appears {
                return Err(EpiError::SingularEquilibrium(name.clone()));
            }
        }
    }

    // back substitution in pivot order
    let mut solution = vec![Expr::zero(); m];
    for col in (0..m).rev() {
        let Some(r) = pivot_of_col[col] else {
            continue; // inert free variable pinned to zero
        };
        let mut rhs = Expr::neg(b[r].clone());
        for c in (col + 1)..m {
            rhs = Expr::sub(rhs, Expr::mul(a[r][c].clone(), solution[c].clone()));
        }
        solution[col] = canonicalize(&Expr::div(rhs, a[r][col].clone()));
    }
    Ok(solution)
}

/// Reproduction number: symbolic closed form, or numeric when the model has
/// parameter values bound.
#[derive(Clone, Debug)]
pub enum R0Result {
    Symbolic(Expr),
    Numeric(f64),
}

impl R0Result {
    pub fn as_symbolic(&self) -> Option<&Expr> {
        match self {
            R0Result::Symbolic(e) => Some(e),
            R0Result::Numeric(_) => None,
        }
    }

    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            R0Result::Numeric(v) => Some(*v),
            R0Result::Symbolic(_) => None,
        }
    }
}

/// Basic reproduction number of a transition-form model: the spectral radius
/// of `F·V⁻¹` with `F` the linearized new-infection inflow and `V` the
/// linearized net transfer/removal, both at the disease-free equilibrium.
pub fn r0(model: &OdeModel, disease_states: &[&str]) -> Result<R0Result, EpiError> {
    if model.jump_channels().is_none() {
        return Err(EpiError::Model(ModelError::NotTransitionForm));
    }
    let split = DiseaseSplit::new(model, disease_states)?;
    let equilibrium = dfe_for_split(model, &split)?;
    let states = model.states();
    let d = split.disease.len();

    // new-infection inflow per disease state
    let mut inflow: Vec<Vec<Expr>> = vec![Vec::new(); d];
    for tr in model.transitions() {
        if tr.kind != TransitionType::Between {
            continue;
        }
        let origin_in_disease = tr
            .origin
            .iter()
            .any(|name| split.disease.iter().any(|&i| states[i] == *name));
        if origin_in_disease {
            continue;
        }
        for dest in &tr.destination {
            if let Some(pos) = split
                .disease
                .iter()
                .position(|&i| &states[i] == dest)
            {
                let rate =
                    crate::expr::parse(&tr.equation, model.table()).expect("built model parses");
                inflow[pos].push(rate);
            }
        }
    }
    let new_infections: Vec<Expr> = inflow.into_iter().map(Expr::sum).collect();

    let at_dfe = |e: &Expr| -> Expr {
        let mut out = e.clone();
        for (name, value) in &equilibrium {
            out = out.substitute(name, value);
        }
        canonicalize(&out)
    };

    // F and V as expressions over the disease states, evaluated at the DFE
    let mut f_mat: Vec<Vec<Expr>> = Vec::with_capacity(d);
    let mut v_mat: Vec<Vec<Expr>> = Vec::with_capacity(d);
    for (pos, &i) in split.disease.iter().enumerate() {
        let f_i = &new_infections[pos];
        let v_i = Expr::sub(f_i.clone(), model.ode_equations()[i].clone());
        f_mat.push(
            split
                .disease
                .iter()
                .map(|&j| at_dfe(&f_i.differentiate(&states[j])))
                .collect(),
        );
        v_mat.push(
            split
                .disease
                .iter()
                .map(|&j| at_dfe(&v_i.differentiate(&states[j])))
                .collect(),
        );
    }

    if model.bound_params().is_ok() {
        return numeric_spectral_radius(model, &f_mat, &v_mat).map(R0Result::Numeric);
    }
    match d {
        1 => {
            if is_zero(&v_mat[0][0]) {
                return Err(EpiError::SingularTransferMatrix);
            }
            Ok(R0Result::Symbolic(canonicalize(&Expr::div(
                f_mat[0][0].clone(),
                v_mat[0][0].clone(),
            ))))
        }
        2 => {
            let det_v = Expr::sub(
                Expr::mul(v_mat[0][0].clone(), v_mat[1][1].clone()),
                Expr::mul(v_mat[0][1].clone(), v_mat[1][0].clone()),
            );
            if is_zero(&det_v) {
                return Err(EpiError::SingularTransferMatrix);
            }
            // K = F·adj(V)/det(V); spectral radius from the quadratic formula
            let k00 = Expr::sub(
                Expr::mul(f_mat[0][0].clone(), v_mat[1][1].clone()),
                Expr::mul(f_mat[0][1].clone(), v_mat[1][0].clone()),
            );
            let k11 = Expr::sub(
                Expr::mul(f_mat[1][1].clone(), v_mat[0][0].clone()),
                Expr::mul(f_mat[1][0].clone(), v_mat[0][1].clone()),
            );
            let trace = Expr::div(Expr::add(k00, k11), det_v.clone());
            let det_f = Expr::sub(
                Expr::mul(f_mat[0][0].clone(), f_mat[1][1].clone()),
                Expr::mul(f_mat[0][1].clone(), f_mat[1][0].clone()),
            );
            let det_k = Expr::div(det_f, det_v);
            let discriminant = Expr::sub(
                Expr::mul(trace.clone(), trace.clone()),
                Expr::mul(Expr::int(4), det_k),
            );
            let radius = Expr::product(vec![
                Expr::rational(1, 2),
                Expr::add(trace, Expr::func(Func::Sqrt, discriminant)),
            ]);
            Ok(R0Result::Symbolic(canonicalize(&radius)))
        }
        other => Err(EpiError::SymbolicUnsupported(other)),
    }
}

fn numeric_spectral_radius(
    model: &OdeModel,
    f_mat: &[Vec<Expr>],
    v_mat: &[Vec<Expr>],
) -> Result<f64, EpiError> {
    let params = model.bound_params()?;
    let mut bindings = std::collections::HashMap::new();
    for (name, value) in model.params().iter().zip(&params) {
        bindings.insert(name.clone(), *value);
    }
    bindings.insert(TIME_SYMBOL.to_string(), 0.0);
    let eval = |e: &Expr| -> Result<f64, EpiError> {
        e.evaluate(&bindings)
            .map_err(|err| EpiError::Model(ModelError::Expr(err)))
    };
    let d = f_mat.len();
    let mut f_num = DMatrix::zeros(d, d);
    let mut v_num = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            f_num[(i, j)] = eval(&f_mat[i][j])?;
            v_num[(i, j)] = eval(&v_mat[i][j])?;
        }
    }
    let v_inv = v_num
        .try_inverse()
        .ok_or(EpiError::SingularTransferMatrix)?;
    let k = f_num * v_inv;
    Ok(spectral_radius(&k))
}

/// Spectral radius with no external eigensolver: characteristic polynomial
/// roots (Newton's identities + Durand-Kerner) up to 4×4, power iteration
/// above.
fn spectral_radius(k: &DMatrix<f64>) -> f64 {
    let d = k.nrows();
    if d == 1 {
        return k[(0, 0)].abs();
    }
    if d <= 4 {
        // power sums of eigenvalues from traces of matrix powers
        let mut power = k.clone();
        let mut p = vec![0.0; d + 1];
        for i in 1..=d {
            p[i] = power.trace();
            if i < d {
                power = &power * k;
            }
        }
        // Newton's identities: elementary symmetric polynomials
        let mut e = vec![0.0; d + 1];
        e[0] = 1.0;
        for i in 1..=d {
            let mut acc = 0.0;
            for j in 1..=i {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                acc += sign * e[i - j] * p[j];
            }
            e[i] = acc / i as f64;
        }
        // char(λ) = λ^d - e1·λ^{d-1} + e2·λ^{d-2} - ...
        let coeffs: Vec<Complex64> = (0..=d)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(sign * e[i], 0.0)
            })
            .collect();
        return durand_kerner(&coeffs)
            .into_iter()
            .map(|r| r.norm())
            .fold(0.0, f64::max);
    }
    // next-generation matrices are nonnegative: power iteration reaches the
    // Perron root
    let mut v = DMatrix::from_element(d, 1, 1.0);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = k * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_lambda = (k * &next).dot(&next);
        if (new_lambda - lambda).abs() <= 1e-13 * new_lambda.abs().max(1.0) {
            return new_lambda.abs();
        }
        lambda = new_lambda;
        v = next;
    }
    lambda.abs()
}

/// Durand-Kerner root finder for a monic polynomial given by descending
/// coefficients `c[0]·λ^d + ... + c[d]` with `c[0] = 1`.
fn durand_kerner(coeffs: &[Complex64]) -> Vec<Complex64> {
    let d = coeffs.len() - 1;
    let eval = |z: Complex64| -> Complex64 {
        coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..d).map(|i| seed.powu(i as u32 + 1)).collect();
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for i in 0..d {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..d {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            moved = moved.max(delta.norm());
        }
        if moved < 1e-14 {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests;
