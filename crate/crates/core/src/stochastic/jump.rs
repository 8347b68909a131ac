//! Discrete-state jump processes over the model's stoichiometry: the exact
//! direct method, and tau-leaping with the step-size selection of Cao,
//! Gillespie & Petzold (2006) plus step halving when a leap would drive a
//! population negative.

use rand::Rng;
use rand_distr::Distribution as _;

use crate::expr::{expand_to_terms, Expr, TIME_SYMBOL};
use crate::model::OdeModel;
use crate::solver::Trajectory;

use super::{par_indexed, realization_rng, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpMethod {
    /// Adaptive tau-leap (default).
    TauLeap,
    /// Exact SSA (direct method).
    Exact,
}

#[derive(Clone, Debug)]
pub struct TauLeapConfig {
    /// Bound on the relative propensity change per leap.
    pub epsilon: f64,
    /// Halvings of a rejected leap before falling back to an exact step.
    pub max_halvings: u32,
}

impl Default for TauLeapConfig {
    fn default() -> Self {
        TauLeapConfig {
            epsilon: 0.03,
            max_halvings: 10,
        }
    }
}

/// One jump realization: state sampled onto the requested grid by last-event
/// holding, plus the underlying event times.
#[derive(Clone, Debug)]
pub struct JumpRealization {
    pub trajectory: Trajectory,
    pub event_times: Vec<f64>,
}

struct JumpSystem<'m> {
    model: &'m OdeModel,
    deltas: Vec<Vec<i64>>,
    /// Cao's g_i: highest state-degree among channels sensitive to state i.
    g: Vec<f64>,
    x0: Vec<f64>,
    t0: f64,
}

impl<'m> JumpSystem<'m> {
    fn prepare(model: &'m OdeModel, times: &[f64]) -> Result<JumpSystem<'m>, SimError> {
        let channels = model
            .jump_channels()
            .ok_or(crate::model::ModelError::NotTransitionForm)?;
        model.bound_params()?;
        let (x0, t0) = model.initial_required()?;
        for (name, v) in model.states().iter().zip(x0) {
            if v.fract() != 0.0 || *v < 0.0 {
                return Err(SimError::NonIntegerInitialState {
                    state: name.clone(),
                    value: *v,
                });
            }
        }
        for (idx, ch) in channels.iter().enumerate() {
            if ch.rate.depends_on(TIME_SYMBOL) {
                return Err(SimError::TimeDependentPropensity { channel: idx });
            }
        }
        if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < t0 {
            return Err(crate::solver::SolveError::InvalidTimes(
                "jump grid must be non-empty, strictly increasing, and start at or after t0".into(),
            )
            .into());
        }

        let orders: Vec<f64> = channels
            .iter()
            .map(|ch| rate_state_degree(&ch.rate, model))
            .collect();
        let n = model.n_states();
        let mut g = vec![1.0f64; n];
        for (ch, order) in channels.iter().zip(&orders) {
            for (i, state) in model.states().iter().enumerate() {
                if ch.rate.depends_on(state) {
                    g[i] = g[i].max(*order);
                }
            }
        }
        Ok(JumpSystem {
            model,
            deltas: channels.iter().map(|ch| ch.delta.clone()).collect(),
            g,
            x0: x0.to_vec(),
            t0,
        })
    }
}

/// Total degree of the rate in the state symbols, used as Cao's order
/// heuristic; non-polynomial dependence falls back to 2.
fn rate_state_degree(rate: &Expr, model: &OdeModel) -> f64 {
    let states = model.states();
    let mut max_degree = 1.0f64;
    for term in expand_to_terms(rate) {
        let mut degree = 0.0;
        let mut polynomial = true;
        visit_factors(&term.monomial, &mut |atom, exp| match atom {
            Expr::Symbol(s) if states.iter().any(|st| st == s) => {
                if exp > 0 {
                    degree += exp as f64;
                }
            }
            _ if states.iter().any(|st| atom.depends_on(st)) => polynomial = false,
            _ => {}
        });
        if !polynomial {
            return 2.0;
        }
        max_degree = max_degree.max(degree.max(1.0));
    }
    max_degree
}

fn visit_factors(mono: &Expr, f: &mut impl FnMut(&Expr, i64)) {
    match mono {
        Expr::Product(ops) => {
            for op in ops {
                visit_factors(op, f);
            }
        }
        Expr::Power(base, exp) => match exp.as_const().and_then(crate::expr::Number::as_i64) {
            Some(n) => f(base, n),
            None => f(mono, 1),
        },
        other => f(other, 1),
    }
}

struct GridWriter<'a> {
    times: &'a [f64],
    states: nalgebra::DMatrix<f64>,
    cursor: usize,
}

impl<'a> GridWriter<'a> {
    fn new(times: &'a [f64], n_states: usize) -> GridWriter<'a> {
        GridWriter {
            times,
            states: nalgebra::DMatrix::zeros(times.len(), n_states),
            cursor: 0,
        }
    }

    /// Hold `x` on every grid point strictly before `until`.
    fn hold(&mut self, x: &[f64], until: f64) {
        while self.cursor < self.times.len() && self.times[self.cursor] < until {
            for (j, v) in x.iter().enumerate() {
                self.states[(self.cursor, j)] = *v;
            }
            self.cursor += 1;
        }
    }

    fn finish(mut self, x: &[f64]) -> Trajectory {
        self.hold(x, f64::INFINITY);
        Trajectory {
            times: self.times.to_vec(),
            states: self.states,
        }
    }
}

fn propensities(
    ev: &mut crate::model::Evaluator<'_>,
    t: f64,
    x: &[f64],
    out: &mut [f64],
) -> Result<(), SimError> {
    ev.channel_rates(t, x, out)?;
    for (j, v) in out.iter().enumerate() {
        if *v < 0.0 || !v.is_finite() {
            return Err(SimError::NegativePropensity {
                channel: j,
                t,
                value: *v,
            });
        }
    }
    Ok(())
}

/// Draw the next exact SSA event from `(t, x)` without applying it. Returns
/// the event time and the chosen channel, or `None` when nothing can fire.
fn next_event(
    rates: &[f64],
    t: f64,
    rng: &mut impl Rng,
) -> Option<(f64, usize)> {
    let total: f64 = rates.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let wait = -u.ln() / total;
    let pick = rng.gen::<f64>() * total;
    let mut cumulative = 0.0;
    let mut chosen = rates.len() - 1;
    for (j, r) in rates.iter().enumerate() {
        cumulative += r;
        if pick < cumulative {
            chosen = j;
            break;
        }
    }
    Some((t + wait, chosen))
}

fn apply_delta(x: &mut [f64], delta: &[i64], channel: usize, t: f64) -> Result<(), SimError> {
    for (v, d) in x.iter_mut().zip(delta) {
        let updated = *v + *d as f64;
        if updated < 0.0 {
            return Err(SimError::InsufficientPopulation { channel, t });
        }
        *v = updated;
    }
    Ok(())
}

fn run_exact(
    sys: &JumpSystem<'_>,
    times: &[f64],
    rng: &mut impl Rng,
) -> Result<JumpRealization, SimError> {
    let mut ev = sys.model.evaluator()?;
    let mut x = sys.x0.clone();
    let mut t = sys.t0;
    let mut rates = vec![0.0; sys.deltas.len()];
    let mut writer = GridWriter::new(times, x.len());
    let mut event_times = Vec::new();
    let t_end = *times.last().expect("non-empty grid");

    loop {
        propensities(&mut ev, t, &x, &mut rates)?;
        match next_event(&rates, t, rng) {
            None => break,
            Some((t_next, channel)) => {
                // grid points strictly before the event see the old state
                writer.hold(&x, t_next);
                if t_next > t_end {
                    break;
                }
                apply_delta(&mut x, &sys.deltas[channel], channel, t_next)?;
                event_times.push(t_next);
                t = t_next;
            }
        }
    }
    Ok(JumpRealization {
        trajectory: writer.finish(&x),
        event_times,
    })
}

fn run_tau_leap(
    sys: &JumpSystem<'_>,
    times: &[f64],
    cfg: &TauLeapConfig,
    rng: &mut impl Rng,
) -> Result<JumpRealization, SimError> {
    let mut ev = sys.model.evaluator()?;
    let n = sys.x0.len();
    let n_channels = sys.deltas.len();
    let mut x = sys.x0.clone();
    let mut t = sys.t0;
    let mut rates = vec![0.0; n_channels];
    let mut writer = GridWriter::new(times, n);
    let mut event_times = Vec::new();
    let t_end = *times.last().expect("non-empty grid");

    'outer: while t <= t_end {
        propensities(&mut ev, t, &x, &mut rates)?;
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            break;
        }

        // Cao/Gillespie/Petzold step selection
        let mut tau = f64::INFINITY;
        for i in 0..n {
            let mut mu = 0.0;
            let mut sigma2 = 0.0;
            for (j, delta) in sys.deltas.iter().enumerate() {
                let d = delta[i] as f64;
                if d != 0.0 {
                    mu += d * rates[j];
                    sigma2 += d * d * rates[j];
                }
            }
            let bound = (cfg.epsilon * x[i] / sys.g[i]).max(1.0);
            if mu != 0.0 {
                tau = tau.min(bound / mu.abs());
            }
            if sigma2 > 0.0 {
                tau = tau.min(bound * bound / sigma2);
            }
        }

        // a leap cheaper than a couple of exact events is not worth taking
        let take_exact_step = tau * total < 2.0;
        if take_exact_step {
            match next_event(&rates, t, rng) {
                None => break,
                Some((t_next, channel)) => {
                    writer.hold(&x, t_next);
                    if t_next > t_end {
                        break;
                    }
                    apply_delta(&mut x, &sys.deltas[channel], channel, t_next)?;
                    event_times.push(t_next);
                    t = t_next;
                    continue;
                }
            }
        }

        tau = tau.min(t_end - t + 1e-9);
        let mut halvings = 0;
        loop {
            let mut delta_total = vec![0i64; n];
            for (j, delta) in sys.deltas.iter().enumerate() {
                let lam = rates[j] * tau;
                let k = if lam > 0.0 {
                    rand_distr::Poisson::new(lam)
                        .expect("positive mean")
                        .sample(rng) as i64
                } else {
                    0
                };
                if k != 0 {
                    for (i, d) in delta.iter().enumerate() {
                        delta_total[i] += d * k;
                    }
                }
            }
            let feasible = x
                .iter()
                .zip(&delta_total)
                .all(|(v, d)| v + *d as f64 >= 0.0);
            if feasible {
                let t_next = t + tau;
                writer.hold(&x, t_next);
                for (v, d) in x.iter_mut().zip(&delta_total) {
                    *v += *d as f64;
                }
                event_times.push(t_next);
                t = t_next;
                break;
            }
            halvings += 1;
            if halvings > cfg.max_halvings {
                // bounded worst case: one exact event instead
                match next_event(&rates, t, rng) {
                    None => break 'outer,
                    Some((t_next, channel)) => {
                        writer.hold(&x, t_next);
                        if t_next > t_end {
                            break 'outer;
                        }
                        apply_delta(&mut x, &sys.deltas[channel], channel, t_next)?;
                        event_times.push(t_next);
                        t = t_next;
                    }
                }
                break;
            }
            tau /= 2.0;
        }
    }
    Ok(JumpRealization {
        trajectory: writer.finish(&x),
        event_times,
    })
}

/// Generate jump-process realizations on the requested grid.
pub fn simulate_jump(
    model: &OdeModel,
    times: &[f64],
    iterations: usize,
    method: JumpMethod,
    seed: u64,
    leap: &TauLeapConfig,
) -> Result<Vec<JumpRealization>, SimError> {
    if iterations == 0 {
        return Err(SimError::NoIterations);
    }
    let sys = JumpSystem::prepare(model, times)?;
    par_indexed(iterations, |i| {
        let mut rng = realization_rng(seed, i);
        match method {
            JumpMethod::Exact => run_exact(&sys, times, &mut rng),
            JumpMethod::TauLeap => run_tau_leap(&sys, times, leap, &mut rng),
        }
    })
}
