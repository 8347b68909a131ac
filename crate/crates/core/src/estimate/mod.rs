//! Parameter estimation: loss objects binding a model to observations,
//! cost/residual evaluation, gradients via forward sensitivity or the adjoint
//! method, residual Jacobians, and a bounded quasi-Newton fit driver.

mod bfgs;

pub use bfgs::{fit, FitOptions, FitResult};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{ModelError, OdeModel};
use crate::solver::{solve_ivp, solve_ivp_dense, SolveError, SolverConfig};

const POISSON_CLAMP: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum EstimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid loss problem: {0}")]
    InvalidProblem(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("cost evaluation failed at the initial point: {0}")]
    InitialPoint(Box<EstimError>),
}

/// Loss families for observation data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Weighted squared error `Σ w (y - ŷ)²`.
    Square,
    /// Gaussian negative log-likelihood; weights are `1/σ` per observation.
    Normal,
    /// Poisson negative log-likelihood `Σ (ŷ - y·log ŷ)` up to a constant.
    Poisson,
}

/// Observation weights: scalar, one per target state, or a full matrix.
#[derive(Clone, Debug)]
pub enum Weights {
    Uniform,
    Scalar(f64),
    PerState(Vec<f64>),
    Matrix(DMatrix<f64>),
}

/// Observations bound to a model: the fitting and confidence-interval context.
#[derive(Clone, Debug)]
pub struct LossProblem {
    model: OdeModel,
    theta0: Vec<f64>,
    x0: Vec<f64>,
    t0: f64,
    times: Vec<f64>,
    y: DMatrix<f64>,
    target_states: Vec<usize>,
    free_params: Vec<usize>,
    loss: LossKind,
    weights: DMatrix<f64>,
    cfg: SolverConfig,
}

impl LossProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: OdeModel,
        theta0: Vec<f64>,
        x0: Vec<f64>,
        t0: f64,
        times: Vec<f64>,
        y: DMatrix<f64>,
        target_states: &[&str],
        loss: LossKind,
    ) -> Result<LossProblem, EstimError> {
        let bad = |msg: String| Err(EstimError::InvalidProblem(msg));
        if times.is_empty() {
            return bad("no observation times".into());
        }
        if times[0] <= t0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("observation times must be strictly increasing and after t0".into());
        }
        if x0.len() != model.n_states() {
            return bad(format!(
                "initial state has length {}, expected {}",
                x0.len(),
                model.n_states()
            ));
        }
        if y.nrows() != times.len() || y.ncols() != target_states.len() {
            return bad(format!(
                "observation matrix is {}×{}, expected {}×{}",
                y.nrows(),
                y.ncols(),
                times.len(),
                target_states.len()
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return bad("observations must be finite".into());
        }
        let mut target_idx = Vec::with_capacity(target_states.len());
        for name in target_states {
            let idx = model
                .table()
                .state_index(name)
                .ok_or_else(|| EstimError::InvalidProblem(format!("unknown state `{name}`")))?;
            if target_idx.contains(&idx) {
                return bad(format!("duplicate target state `{name}`"));
            }
            target_idx.push(idx);
        }
        if theta0.len() != model.n_params() {
            return bad(format!(
                "theta0 has length {}, expected one value per parameter ({})",
                theta0.len(),
                model.n_params()
            ));
        }
        let weights = DMatrix::from_element(times.len(), target_states.len(), 1.0);
        Ok(LossProblem {
            free_params: (0..model.n_params()).collect(),
            model,
            theta0,
            x0,
            t0,
            times,
            y,
            target_states: target_idx,
            loss,
            weights,
            cfg: SolverConfig::default(),
        })
    }

    /// Restrict fitting to a subset of parameters; the rest are held at the
    /// values bound on the model. `theta0` is re-stated for the free subset,
    /// in the order given here.
    pub fn with_target_params(
        mut self,
        names: &[&str],
        theta0: Vec<f64>,
    ) -> Result<Self, EstimError> {
        if names.is_empty() {
            return Err(EstimError::InvalidProblem("empty target_param".into()));
        }
        if theta0.len() != names.len() {
            return Err(EstimError::InvalidProblem(format!(
                "theta0 has length {}, expected {}",
                theta0.len(),
                names.len()
            )));
        }
        let mut free = Vec::with_capacity(names.len());
        for name in names {
            let idx = self
                .model
                .table()
                .param_index(name)
                .ok_or_else(|| EstimError::InvalidProblem(format!("unknown parameter `{name}`")))?;
            if free.contains(&idx) {
                return Err(EstimError::InvalidProblem(format!(
                    "duplicate target parameter `{name}`"
                )));
            }
            free.push(idx);
        }
        // frozen parameters need a value on the model
        for (idx, name) in self.model.params().iter().enumerate() {
            if !free.contains(&idx) && self.model.param_value(name).is_none() {
                return Err(EstimError::InvalidProblem(format!(
                    "parameter `{name}` is frozen but has no value"
                )));
            }
        }
        self.free_params = free;
        self.theta0 = theta0;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Weights) -> Result<Self, EstimError> {
        let (n, k) = (self.times.len(), self.target_states.len());
        let expanded = match weights {
            Weights::Uniform => DMatrix::from_element(n, k, 1.0),
            Weights::Scalar(w) => DMatrix::from_element(n, k, w),
            Weights::PerState(v) => {
                if v.len() != k {
                    return Err(EstimError::InvalidProblem(format!(
                        "per-state weights have length {}, expected {k}",
                        v.len()
                    )));
                }
                DMatrix::from_fn(n, k, |_, j| v[j])
            }
            Weights::Matrix(m) => {
                if m.nrows() != n || m.ncols() != k {
                    return Err(EstimError::InvalidProblem(format!(
                        "weight matrix is {}×{}, expected {n}×{k}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m
            }
        };
        if expanded.iter().any(|w| !(*w > 0.0)) {
            return Err(EstimError::InvalidProblem("weights must be > 0".into()));
        }
        self.weights = expanded;
        Ok(self)
    }

    pub fn with_solver_config(mut self, cfg: SolverConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn with_theta0(mut self, theta0: Vec<f64>) -> Result<Self, EstimError> {
        if theta0.len() != self.free_params.len() {
            return Err(EstimError::InvalidProblem(format!(
                "theta0 has length {}, expected {}",
                theta0.len(),
                self.free_params.len()
            )));
        }
        self.theta0 = theta0;
        Ok(self)
    }

    /// Replace the observation matrix (bootstrap replicates).
    pub fn with_observations(mut self, y: DMatrix<f64>) -> Result<Self, EstimError> {
        if y.nrows() != self.y.nrows() || y.ncols() != self.y.ncols() {
            return Err(EstimError::InvalidProblem("observation shape changed".into()));
        }
        self.y = y;
        Ok(self)
    }

    /// Freeze one currently free parameter at a fixed value (profile
    /// likelihood); `free_index` addresses the free-parameter ordering.
    pub fn freeze_param(&self, free_index: usize, value: f64) -> Result<Self, EstimError> {
        assert!(free_index < self.free_params.len());
        if self.free_params.len() < 2 {
            return Err(EstimError::InvalidProblem(
                "cannot freeze the only free parameter".into(),
            ));
        }
        let mut clone = self.clone();
        let param_idx = clone.free_params.remove(free_index);
        let name = clone.model.params()[param_idx].clone();
        clone
            .model
            .set_parameters([(name.as_str(), value)])
            .expect("known parameter");
        clone.theta0.remove(free_index);
        Ok(clone)
    }

    pub fn model(&self) -> &OdeModel {
        &self.model
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn n_free(&self) -> usize {
        self.free_params.len()
    }

    pub fn n_obs(&self) -> usize {
        self.times.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_states.len()
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn observation_times(&self) -> &[f64] {
        &self.times
    }

    pub fn free_param_names(&self) -> Vec<&str> {
        self.free_params
            .iter()
            .map(|&i| self.model.params()[i].as_str())
            .collect()
    }

    /// Full parameter vector with the free entries replaced by `theta`.
    fn full_params(&self, theta: &[f64]) -> Result<Vec<f64>, EstimError> {
        debug_assert_eq!(theta.len(), self.free_params.len());
        let mut values: Vec<Option<f64>> = self
            .model
            .params()
            .iter()
            .map(|name| self.model.param_value(name))
            .collect();
        for (pos, &idx) in self.free_params.iter().enumerate() {
            values[idx] = Some(theta[pos]);
        }
        values
            .into_iter()
            .zip(self.model.params())
            .map(|(v, name)| {
                v.ok_or_else(|| {
                    EstimError::Model(ModelError::ParametersNotBound(name.clone()))
                })
            })
            .collect()
    }

    /// Model predictions at the observation times, restricted to the target
    /// states.
    pub fn predict(&self, theta: &[f64]) -> Result<DMatrix<f64>, EstimError> {
        let params = self.full_params(theta)?;
        let mut ev = self.model.evaluator_with(&params);
        let mut f =
            |t: f64, x: &[f64], dx: &mut [f64]| ev.rhs(t, x, dx).map_err(SolveError::from);
        let traj = solve_ivp(&mut f, self.t0, &self.x0, &self.times, &self.cfg)?;
        Ok(DMatrix::from_fn(self.n_obs(), self.n_targets(), |i, j| {
            traj.states[(i, self.target_states[j])]
        }))
    }

    fn loss_value(&self, yhat: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        let mut clamped = 0usize;
        for i in 0..self.n_obs() {
            for j in 0..self.n_targets() {
                let y = self.y[(i, j)];
                let w = self.weights[(i, j)];
                let p = yhat[(i, j)];
                total += match self.loss {
                    LossKind::Square => {
                        let r = y - p;
                        w * r * r
                    }
                    LossKind::Normal => {
                        let r = w * (y - p);
                        0.5 * r * r - w.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln()
                    }
                    LossKind::Poisson => {
                        let pc = if p < POISSON_CLAMP {
                            clamped += 1;
                            POISSON_CLAMP
                        } else {
                            p
                        };
                        pc - y * pc.ln()
                    }
                };
            }
        }
        if clamped > 0 {
            log::warn!("poisson loss clamped {clamped} non-positive predictions at {POISSON_CLAMP}");
        }
        total
    }

    /// Derivative of the loss with respect to each prediction.
    fn loss_dprediction(&self, yhat: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_obs(), self.n_targets(), |i, j| {
            let y = self.y[(i, j)];
            let w = self.weights[(i, j)];
            let p = yhat[(i, j)];
            match self.loss {
                LossKind::Square => -2.0 * w * (y - p),
                LossKind::Normal => -w * w * (y - p),
                LossKind::Poisson => {
                    if p < POISSON_CLAMP {
                        0.0
                    } else {
                        1.0 - y / p
                    }
                }
            }
        })
    }

    /// Amount of loss incurred with respect to the data at `theta`.
    pub fn cost(&self, theta: &[f64]) -> Result<f64, EstimError> {
        Ok(self.loss_value(&self.predict(theta)?))
    }

    /// Raw residuals `y - ŷ`, unweighted, one row per observation time.
    pub fn residuals(&self, theta: &[f64]) -> Result<DMatrix<f64>, EstimError> {
        Ok(&self.y - self.predict(theta)?)
    }

    /// Forward-sensitivity solve: predictions plus `∂ŷ/∂θ` flattened to
    /// `(n·k) × p` in row-major observation order.
    fn predict_with_sensitivity(
        &self,
        theta: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), EstimError> {
        let params = self.full_params(theta)?;
        let s = self.model.n_states();
        let p = self.free_params.len();
        let mut ev = self.model.evaluator_with(&params);
        let mut jac = DMatrix::zeros(s, s);
        let mut grad = DMatrix::zeros(s, p);
        let free = self.free_params.clone();

        let mut z0 = vec![0.0; s * (1 + p)];
        z0[..s].copy_from_slice(&self.x0);

        let mut f = |t: f64, z: &[f64], dz: &mut [f64]| -> Result<(), SolveError> {
            let x = &z[..s];
            let (dx, dsens) = dz.split_at_mut(s);
            ev.rhs(t, x, dx).map_err(SolveError::from)?;
            ev.jacobian_into(t, x, &mut jac).map_err(SolveError::from)?;
            ev.grad_columns_into(t, x, &free, &mut grad)
                .map_err(SolveError::from)?;
            for kp in 0..p {
                let sens = &z[s * (1 + kp)..s * (2 + kp)];
                let out = &mut dsens[s * kp..s * (kp + 1)];
                for i in 0..s {
                    let mut acc = grad[(i, kp)];
                    for j in 0..s {
                        acc += jac[(i, j)] * sens[j];
                    }
                    out[i] = acc;
                }
            }
            Ok(())
        };
        let traj = solve_ivp(&mut f, self.t0, &z0, &self.times, &self.cfg)?;

        let yhat = DMatrix::from_fn(self.n_obs(), self.n_targets(), |i, j| {
            traj.states[(i, self.target_states[j])]
        });
        let k = self.n_targets();
        let dyhat = DMatrix::from_fn(self.n_obs() * k, p, |row, kp| {
            let (i, j) = (row / k, row % k);
            traj.states[(i, s * (1 + kp) + self.target_states[j])]
        });
        Ok((yhat, dyhat))
    }

    /// Cost and its gradient from one forward-sensitivity solve.
    pub fn cost_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>), EstimError> {
        let (yhat, dyhat) = self.predict_with_sensitivity(theta)?;
        let cost = self.loss_value(&yhat);
        let dldp = self.loss_dprediction(&yhat);
        let k = self.n_targets();
        let mut gradient = vec![0.0; self.free_params.len()];
        for (kp, g) in gradient.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..self.n_obs() {
                for j in 0..k {
                    acc += dldp[(i, j)] * dyhat[(i * k + j, kp)];
                }
            }
            *g = acc;
        }
        Ok((cost, gradient))
    }

    /// Loss gradient via the forward sensitivity equations.
    pub fn sensitivity_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, EstimError> {
        Ok(self.cost_and_gradient(theta)?.1)
    }

    /// Loss gradient via the backward adjoint solve; agrees with
    /// [`sensitivity_gradient`](Self::sensitivity_gradient) up to solver
    /// tolerances, at a cost independent of the parameter count.
    pub fn adjoint_gradient(&self, theta: &[f64]) -> Result<Vec<f64>, EstimError> {
        let params = self.full_params(theta)?;
        let s = self.model.n_states();
        let p = self.free_params.len();

        // forward pass with dense output over [t0, t_n]
        let mut ev = self.model.evaluator_with(&params);
        let x0 = self.x0.clone();
        let mut f =
            |t: f64, x: &[f64], dx: &mut [f64]| ev.rhs(t, x, dx).map_err(SolveError::from);
        let (traj, dense) = solve_ivp_dense(&mut f, self.t0, &x0, &self.times, &self.cfg)?;
        let yhat = DMatrix::from_fn(self.n_obs(), self.n_targets(), |i, j| {
            traj.states[(i, self.target_states[j])]
        });
        let dldp = self.loss_dprediction(&yhat);

        // backward costate in reversed time τ = T - t:
        //   u' = Jᵀ(x(T-τ))·u,  q'_k = uᵀ·∂f/∂θ_k(x(T-τ))
        let t_final = *self.times.last().expect("non-empty");
        let mut ev_b = self.model.evaluator_with(&params);
        let mut jac = DMatrix::zeros(s, s);
        let mut grad = DMatrix::zeros(s, p);
        let mut xbuf = vec![0.0; s];
        let free = self.free_params.clone();

        let mut state = vec![0.0; s + p];
        // observation boundaries from the last time down to t0
        for obs in (0..self.n_obs()).rev() {
            let t_obs = self.times[obs];
            for (j, &target) in self.target_states.iter().enumerate() {
                state[target] += dldp[(obs, j)];
            }
            let t_stop = if obs == 0 { self.t0 } else { self.times[obs - 1] };
            if t_obs == t_stop {
                continue;
            }
            let tau_span = [t_final - t_stop];
            let tau_start = t_final - t_obs;
            let mut fb = |tau: f64, z: &[f64], dz: &mut [f64]| -> Result<(), SolveError> {
                let t = t_final - tau;
                dense.eval_into(t, &mut xbuf);
                ev_b.jacobian_into(t, &xbuf, &mut jac)
                    .map_err(SolveError::from)?;
                ev_b.grad_columns_into(t, &xbuf, &free, &mut grad)
                    .map_err(SolveError::from)?;
                let (u, _) = z.split_at(s);
                let (du, dq) = dz.split_at_mut(s);
                for i in 0..s {
                    let mut acc = 0.0;
                    for j in 0..s {
                        acc += jac[(j, i)] * u[j];
                    }
                    du[i] = acc;
                }
                for kp in 0..p {
                    let mut acc = 0.0;
                    for i in 0..s {
                        acc += u[i] * grad[(i, kp)];
                    }
                    dq[kp] = acc;
                }
                Ok(())
            };
            let seg = solve_ivp(&mut fb, tau_start, &state, &tau_span, &self.cfg)?;
            for (i, v) in state.iter_mut().enumerate() {
                *v = seg.states[(0, i)];
            }
        }
        Ok(state[s..].to_vec())
    }

    /// Residual Jacobian `∂(y - ŷ)/∂θ`, one row per flattened observation;
    /// `2·Jᵀr` is exactly the square-loss gradient under unit weights.
    pub fn residual_jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>, EstimError> {
        let (_, dyhat) = self.predict_with_sensitivity(theta)?;
        Ok(-dyhat)
    }

    /// Flattened residuals and their Jacobian from a single sensitivity
    /// solve, so identities between the two hold to rounding.
    pub fn residuals_and_jacobian(
        &self,
        theta: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), EstimError> {
        let (yhat, dyhat) = self.predict_with_sensitivity(theta)?;
        let k = self.n_targets();
        let r = DMatrix::from_fn(self.n_obs() * k, 1, |row, _| {
            self.y[(row / k, row % k)] - yhat[(row / k, row % k)]
        });
        Ok((r, -dyhat))
    }

    /// Gauss-Newton normal matrix `JᵀJ` (symmetric positive semidefinite).
    pub fn jtj(&self, theta: &[f64]) -> Result<DMatrix<f64>, EstimError> {
        let j = self.residual_jacobian(theta)?;
        Ok(j.transpose() * j)
    }

    /// Hessian of the cost via central differences of the analytic
    /// (sensitivity) gradient, symmetrized. Not guaranteed positive
    /// semidefinite away from an optimum.
    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>, EstimError> {
        let p = theta.len();
        let mut h = DMatrix::zeros(p, p);
        for kp in 0..p {
            let step = 1e-4 * theta[kp].abs().max(1.0);
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[kp] += step;
            minus[kp] -= step;
            let gp = self.sensitivity_gradient(&plus)?;
            let gm = self.sensitivity_gradient(&minus)?;
            for row in 0..p {
                h[(row, kp)] = (gp[row] - gm[row]) / (2.0 * step);
            }
        }
        let sym = (&h + h.transpose()) * 0.5;
        Ok(sym)
    }
}

#[cfg(test)]
mod tests;
