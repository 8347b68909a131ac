//! Box-constrained quasi-Newton minimizer: BFGS approximation of the inverse
//! Hessian with gradient projection onto the bounds and a backtracking
//! Armijo line search. Integrator failures at trial points backtrack instead
//! of aborting; only a failure at the starting point is an error.

use nalgebra::{DMatrix, DVector};

use super::{EstimError, LossProblem};

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Convergence when the projected-gradient infinity norm drops below this.
    pub gradient_tol: f64,
    /// Convergence when the relative cost change drops below this.
    pub cost_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            gradient_tol: 1e-6,
            cost_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Whether each parameter sits on its lower/upper bound.
    pub at_lower: Vec<bool>,
    pub at_upper: Vec<bool>,
    /// Cost of every accepted iterate, starting point included.
    pub trace: Vec<f64>,
}

fn clip(theta: &DVector<f64>, bounds: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_fn(theta.len(), |i, _| theta[i].clamp(bounds[i].0, bounds[i].1))
}

fn projected_gradient(
    theta: &DVector<f64>,
    g: &DVector<f64>,
    bounds: &[(f64, f64)],
) -> DVector<f64> {
    DVector::from_fn(theta.len(), |i, _| {
        let (lo, hi) = bounds[i];
        if (theta[i] <= lo && g[i] > 0.0) || (theta[i] >= hi && g[i] < 0.0) {
            0.0
        } else {
            g[i]
        }
    })
}

fn validate_bounds(bounds: &[(f64, f64)], p: usize) -> Result<(), EstimError> {
    if bounds.len() != p {
        return Err(EstimError::InvalidBounds(format!(
            "{} bound pairs for {p} parameters",
            bounds.len()
        )));
    }
    for (i, (lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(EstimError::InvalidBounds(format!(
                "bound {i} must satisfy finite lo < hi (got [{lo}, {hi}])"
            )));
        }
    }
    Ok(())
}

/// Minimize the loss from the problem's `theta0` inside the box.
pub fn fit(
    problem: &LossProblem,
    bounds: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<FitResult, EstimError> {
    let p = problem.n_free();
    validate_bounds(bounds, p)?;
    let mut theta = clip(&DVector::from_column_slice(problem.theta0()), bounds);

    let (mut cost, g0) = problem
        .cost_and_gradient(theta.as_slice())
        .map_err(|e| EstimError::InitialPoint(Box::new(e)))?;
    let mut g = DVector::from_vec(g0);
    let mut h_inv: DMatrix<f64> = DMatrix::identity(p, p);
    let mut trace = vec![cost];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iterations {
        let pg = projected_gradient(&theta, &g, bounds);
        if pg.amax() < opts.gradient_tol {
            converged = true;
            break;
        }

        let mut direction = -(&h_inv * &g);
        // fall back to steepest descent when the quasi-Newton direction fails
        let mut steepest = false;
        if direction.dot(&g) >= -1e-14 * direction.norm() * g.norm() {
            direction = -g.clone();
            h_inv = DMatrix::identity(p, p);
            steepest = true;
        }

        let line_search = |direction: &DVector<f64>| -> Option<(DVector<f64>, f64)> {
            let mut alpha = 1.0;
            for _ in 0..40 {
                let trial = clip(&(&theta + alpha * direction), bounds);
                let step = &trial - &theta;
                if step.amax() == 0.0 {
                    return None;
                }
                if let Ok(c) = problem.cost(trial.as_slice()) {
                    if c.is_finite() && c <= cost + 1e-4 * g.dot(&step) {
                        return Some((trial, c));
                    }
                }
                alpha *= 0.5;
            }
            None
        };

        let mut accepted = line_search(&direction);
        if accepted.is_none() && !steepest {
            // retry along the raw gradient before concluding anything
            direction = -g.clone();
            h_inv = DMatrix::identity(p, p);
            accepted = line_search(&direction);
        }
        let Some((theta_new, cost_new)) = accepted else {
            // no descent available along -g at any step length: stationary
            // at the precision the integrator tolerance allows
            converged = true;
            break;
        };
        iterations += 1;

        let (_, g_new_vec) = problem.cost_and_gradient(theta_new.as_slice())?;
        let g_new = DVector::from_vec(g_new_vec);
        let s = &theta_new - &theta;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-10 * s.norm() * yv.norm() {
            // BFGS inverse update
            let rho = 1.0 / sy;
            let identity = DMatrix::identity(p, p);
            let left = &identity - rho * &s * yv.transpose();
            let right = &identity - rho * &yv * s.transpose();
            h_inv = &left * h_inv * &right + rho * &s * s.transpose();
        }

        let rel_change = (cost - cost_new).abs() / cost.abs().max(1.0);
        theta = theta_new;
        cost = cost_new;
        g = g_new;
        trace.push(cost);
        if rel_change < opts.cost_tol {
            converged = true;
            break;
        }
    }

    if !converged {
        let pg = projected_gradient(&theta, &g, bounds);
        converged = pg.amax() < opts.gradient_tol;
    }

    let at_lower = (0..p).map(|i| theta[i] <= bounds[i].0).collect();
    let at_upper = (0..p).map(|i| theta[i] >= bounds[i].1).collect();
    Ok(FitResult {
        theta: theta.as_slice().to_vec(),
        cost,
        converged,
        iterations,
        at_lower,
        at_upper,
        trace,
    })
}
