//! Stochastic realizations: random parameter draws fed to the deterministic
//! solver, and discrete-state jump processes (exact SSA or adaptive tau-leap).
//!
//! Realizations are embarrassingly parallel. Each one gets its own RNG seeded
//! `seed ^ index`, and failures are reported by the smallest failing index, so
//! results are bit-identical regardless of how many workers run them.

mod jump;

pub use jump::{simulate_jump, JumpMethod, JumpRealization, TauLeapConfig};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, OdeModel};
use crate::solver::{solve_ivp, SolveError, SolverConfig, Trajectory};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("parameter `{0}` bound more than once")]
    DuplicateParameter(String),
    #[error("parameter `{0}` not bound")]
    UnboundParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("iterations must be >= 1")]
    NoIterations,
    #[error("initial state entry {state} = {value} is not an integer")]
    NonIntegerInitialState { state: String, value: f64 },
    #[error("propensity of channel {channel} depends on time")]
    TimeDependentPropensity { channel: usize },
    #[error("negative propensity {value} on channel {channel} at t = {t}")]
    NegativePropensity { channel: usize, t: f64, value: f64 },
    #[error("channel {channel} fired at t = {t} with insufficient population")]
    InsufficientPopulation { channel: usize, t: f64 },
    #[error("realization {iteration} failed: {source}")]
    IterationFailed {
        iteration: usize,
        #[source]
        source: Box<SimError>,
    },
}

/// Distribution families with R-style names and parameters
/// (`gamma(shape, rate)`, `lognormal(meanlog, sdlog)`, ...).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Gamma { shape: f64, rate: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { min: f64, max: f64 },
    Poisson { lambda: f64 },
    Beta { shape1: f64, shape2: f64 },
    Lognormal { meanlog: f64, sdlog: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidDistribution(msg));
        match *self {
            Distribution::Gamma { shape, rate } => {
                if shape <= 0.0 || rate <= 0.0 {
                    return bad(format!("gamma requires shape > 0, rate > 0 (got {shape}, {rate})"));
                }
            }
            Distribution::Normal { sd, .. } => {
                if sd <= 0.0 {
                    return bad(format!("normal requires sd > 0 (got {sd})"));
                }
            }
            Distribution::Uniform { min, max } => {
                if !(min < max) {
                    return bad(format!("uniform requires min < max (got {min}, {max})"));
                }
            }
            Distribution::Poisson { lambda } => {
                if lambda <= 0.0 {
                    return bad(format!("poisson requires lambda > 0 (got {lambda})"));
                }
            }
            Distribution::Beta { shape1, shape2 } => {
                if shape1 <= 0.0 || shape2 <= 0.0 {
                    return bad(format!(
                        "beta requires shape1 > 0, shape2 > 0 (got {shape1}, {shape2})"
                    ));
                }
            }
            Distribution::Lognormal { sdlog, .. } => {
                if sdlog <= 0.0 {
                    return bad(format!("lognormal requires sdlog > 0 (got {sdlog})"));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        use rand_distr::Distribution as _;
        match *self {
            Distribution::Gamma { shape, rate } => rand_distr::Gamma::new(shape, 1.0 / rate)
                .expect("validated parameters")
                .sample(rng),
            Distribution::Normal { mean, sd } => rand_distr::Normal::new(mean, sd)
                .expect("validated parameters")
                .sample(rng),
            Distribution::Uniform { min, max } => rng.gen_range(min..max),
            Distribution::Poisson { lambda } => rand_distr::Poisson::new(lambda)
                .expect("validated parameters")
                .sample(rng),
            Distribution::Beta { shape1, shape2 } => rand_distr::Beta::new(shape1, shape2)
                .expect("validated parameters")
                .sample(rng),
            Distribution::Lognormal { meanlog, sdlog } => {
                rand_distr::LogNormal::new(meanlog, sdlog)
                    .expect("validated parameters")
                    .sample(rng)
            }
        }
    }

    /// `n` i.i.d. samples from the given stream.
    pub fn draw(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>, SimError> {
        if n == 0 {
            return Err(SimError::NoIterations);
        }
        self.validate()?;
        Ok((0..n).map(|_| self.sample(rng)).collect())
    }
}

/// Per-parameter binding: a constant or a sampling distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamSpec {
    Fixed(f64),
    Random(Distribution),
}

/// Complete parameter binding for stochastic-parameter simulation; every
/// model parameter appears exactly once.
#[derive(Clone, Debug)]
pub struct StochasticParams {
    specs: Vec<ParamSpec>,
}

impl StochasticParams {
    pub fn new<'a>(
        model: &OdeModel,
        bindings: impl IntoIterator<Item = (&'a str, ParamSpec)>,
    ) -> Result<StochasticParams, SimError> {
        let mut specs: Vec<Option<ParamSpec>> = vec![None; model.n_params()];
        for (name, spec) in bindings {
            let idx = model
                .table()
                .param_index(name)
                .ok_or_else(|| SimError::UnknownParameter(name.to_string()))?;
            if specs[idx].is_some() {
                return Err(SimError::DuplicateParameter(name.to_string()));
            }
            if let ParamSpec::Random(dist) = &spec {
                dist.validate()?;
            }
            specs[idx] = Some(spec);
        }
        let specs = specs
            .into_iter()
            .zip(model.params())
            .map(|(s, name)| s.ok_or_else(|| SimError::UnboundParameter(name.clone())))
            .collect::<Result<_, _>>()?;
        Ok(StochasticParams { specs })
    }

    /// One parameter vector: distributions sampled, constants passed through.
    pub fn draw_vector(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.specs
            .iter()
            .map(|spec| match spec {
                ParamSpec::Fixed(v) => *v,
                ParamSpec::Random(d) => d.sample(rng),
            })
            .collect()
    }

    pub fn has_random(&self) -> bool {
        self.specs
            .iter()
            .any(|s| matches!(s, ParamSpec::Random(_)))
    }
}

/// RNG for realization `index` under a master seed.
pub(crate) fn realization_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ index as u64)
}

/// Deterministic parallel map: results in index order, first failure decided
/// by index rather than completion order.
pub(crate) fn par_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(usize) -> Result<T, SimError> + Sync,
{
    let results: Vec<Result<T, SimError>> = (0..n).into_par_iter().map(&f).collect();
    let mut out = Vec::with_capacity(n);
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                return Err(SimError::IterationFailed {
                    iteration: i,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(out)
}

/// Elementwise average of equally shaped trajectories.
pub fn mean_trajectory(list: &[Trajectory]) -> Trajectory {
    assert!(!list.is_empty());
    let mut acc = DMatrix::zeros(list[0].states.nrows(), list[0].states.ncols());
    for traj in list {
        acc += &traj.states;
    }
    acc /= list.len() as f64;
    Trajectory {
        times: list[0].times.clone(),
        states: acc,
    }
}

/// Draw each stochastic parameter once per iteration and solve
/// deterministically; returns the sample-mean trajectory and all realizations.
pub fn simulate_param(
    model: &OdeModel,
    times: &[f64],
    params: &StochasticParams,
    iterations: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<(Trajectory, Vec<Trajectory>), SimError> {
    if iterations == 0 {
        return Err(SimError::NoIterations);
    }
    let (x0, t0) = model.initial_required()?;
    let x0 = x0.to_vec();
    let all = par_indexed(iterations, |i| {
        let mut rng = realization_rng(seed, i);
        let theta = params.draw_vector(&mut rng);
        let mut ev = model.evaluator_with(&theta);
        let mut f =
            |t: f64, x: &[f64], dx: &mut [f64]| ev.rhs(t, x, dx).map_err(SolveError::from);
        solve_ivp(&mut f, t0, &x0, times, cfg).map_err(SimError::from)
    })?;
    Ok((mean_trajectory(&all), all))
}
