//! Deterministic IVP solver: adaptive Dormand-Prince 5(4) with FSAL and
//! cubic-Hermite dense output for sampling the requested time grid.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::{ModelError, OdeModel};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step limit ({limit}) exhausted at t = {t}")]
    StepLimitExhausted { t: f64, limit: usize },
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("non-finite right-hand side at t = {t}, state {state:?}")]
    NonFiniteRhs { t: f64, state: Vec<f64> },
    #[error("invalid time grid: {0}")]
    InvalidTimes(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// First step size; estimated from the rhs magnitude at `t0` when `None`.
    pub initial_step: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-8,
            atol: 1e-8,
            max_steps: 1_000_000,
            initial_step: None,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolveError> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(SolveError::InvalidConfig(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Time grid plus one state row per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
}

impl Trajectory {
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.states.row(i).iter().copied().collect()
    }

    pub fn value(&self, i: usize, state: usize) -> f64 {
        self.states[(i, state)]
    }

    /// Column of one state over the whole grid.
    pub fn state_series(&self, state: usize) -> Vec<f64> {
        self.states.column(state).iter().copied().collect()
    }
}

/// One accepted step with the interpolation polynomial coefficients:
/// `y(t0+θh) = y0 + h·(θ·q[0] + θ²·q[1] + θ³·q[2] + θ⁴·q[3])`.
#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    y0: Vec<f64>,
    q: [Vec<f64>; 4],
}

impl Segment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        eval_interpolant(theta, self.h, &self.y0, &self.q, out);
    }
}

/// Piecewise cubic-Hermite interpolant over the accepted solver steps.
#[derive(Clone, Debug)]
pub struct DenseOutput {
    segments: Vec<Segment>,
}

impl DenseOutput {
    pub fn t_start(&self) -> f64 {
        self.segments.first().map(|s| s.t0).unwrap_or(0.0)
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map(|s| s.t0 + s.h).unwrap_or(0.0)
    }

    /// Interpolate the solution at `t` (clamped to the covered span).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert!(!self.segments.is_empty());
        let idx = self
            .segments
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.segments.len() - 1);
        self.segments[idx].eval_into(t, out);
    }
}

fn eval_interpolant(theta: f64, h: f64, y0: &[f64], q: &[Vec<f64>; 4], out: &mut [f64]) {
    for i in 0..out.len() {
        // Horner in θ
        let poly = ((q[3][i] * theta + q[2][i]) * theta + q[1][i]) * theta + q[0][i];
        out[i] = y0[i] + h * theta * poly;
    }
}

fn interpolant_coefficients(k: &[Vec<f64>], n: usize) -> [Vec<f64>; 4] {
    let mut q = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (col, qc) in q.iter_mut().enumerate() {
        for i in 0..n {
            let mut acc = 0.0;
            for (s, ks) in k.iter().enumerate() {
                acc += P[s][col] * ks[i];
            }
            qc[i] = acc;
        }
    }
    q
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// 5th-order weights equal the last a row (FSAL); e = b5 - b4 for the error.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// Coefficients of the method's quartic dense-output polynomial: stage s
// contributes P[s]·[θ, θ², θ³, θ⁴]; rows sum to the 5th-order weights.
const P: [[f64; 4]; 7] = [
    [
        1.0,
        -8048581381.0 / 2820520608.0,
        8663915743.0 / 2820520608.0,
        -12715105075.0 / 11282082432.0,
    ],
    [0.0, 0.0, 0.0, 0.0],
    [
        0.0,
        131558114200.0 / 32700410799.0,
        -68118460800.0 / 10900136933.0,
        87487479700.0 / 32700410799.0,
    ],
    [
        0.0,
        -1754552775.0 / 470086768.0,
        14199869525.0 / 1410260304.0,
        -10690763975.0 / 1880347072.0,
    ],
    [
        0.0,
        127303824393.0 / 49829197408.0,
        -318862633887.0 / 49829197408.0,
        701980252875.0 / 199316789632.0,
    ],
    [
        0.0,
        -282668133.0 / 205662961.0,
        2019193451.0 / 616988883.0,
        -1453857185.0 / 822651844.0,
    ],
    [
        0.0,
        40617522.0 / 29380423.0,
        -110615467.0 / 29380423.0,
        69997945.0 / 29380423.0,
    ],
];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;

/// Right-hand side callback: `f(t, x, dx)`.
pub trait Rhs {
    fn eval(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), SolveError>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), SolveError>,
{
    fn eval(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<(), SolveError> {
        self(t, x, dx)
    }
}

fn validate_times(t0: f64, times: &[f64]) -> Result<(), SolveError> {
    if times.is_empty() {
        return Err(SolveError::InvalidTimes("empty time grid".into()));
    }
    if times[0] < t0 {
        return Err(SolveError::InvalidTimes(format!(
            "first requested time {} precedes t0 = {t0}",
            times[0]
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolveError::InvalidTimes(
            "times must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn rms_scaled(v: &[f64], y: &[f64], y_new: &[f64], cfg: &SolverConfig) -> f64 {
    let mut acc = 0.0;
    for i in 0..v.len() {
        let sc = cfg.atol + cfg.rtol * y[i].abs().max(y_new[i].abs());
        let r = v[i] / sc;
        acc += r * r;
    }
    (acc / v.len() as f64).sqrt()
}

fn initial_step<F: Rhs>(
    f: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &SolverConfig,
) -> Result<f64, SolveError> {
    let n = y0.len() as f64;
    let norm = |v: &[f64], w: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..v.len() {
            let sc = cfg.atol + cfg.rtol * w[i].abs();
            acc += (v[i] / sc) * (v[i] / sc);
        }
        (acc / n).sqrt()
    };
    let d0 = norm(y0, y0);
    let d1 = norm(f0, y0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if f.eval(t0 + h0, &y1, &mut f1).is_err() {
        return Ok((h0 * 1e-3).max(f64::MIN_POSITIVE));
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff, y0) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok(h1.min(100.0 * h0).min(span))
}

/// Solve the IVP sampling the solution at `times` via dense output.
pub fn solve_ivp<F: Rhs>(
    f: &mut F,
    t0: f64,
    x0: &[f64],
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory, SolveError> {
    solve_ivp_inner(f, t0, x0, times, cfg, None)
}

/// As [`solve_ivp`], additionally retaining the piecewise interpolant over
/// the whole integration span (needed for adjoint solves).
pub fn solve_ivp_dense<F: Rhs>(
    f: &mut F,
    t0: f64,
    x0: &[f64],
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<(Trajectory, DenseOutput), SolveError> {
    let mut segments = Vec::new();
    let traj = solve_ivp_inner(f, t0, x0, times, cfg, Some(&mut segments))?;
    Ok((traj, DenseOutput { segments }))
}

fn solve_ivp_inner<F: Rhs>(
    f: &mut F,
    t0: f64,
    x0: &[f64],
    times: &[f64],
    cfg: &SolverConfig,
    mut dense: Option<&mut Vec<Segment>>,
) -> Result<Trajectory, SolveError> {
    cfg.validate()?;
    validate_times(t0, times)?;
    let n = x0.len();
    let t_end = *times.last().expect("non-empty grid");

    let mut states = DMatrix::zeros(times.len(), n);
    let mut out_idx = 0;
    if times[0] == t0 {
        for (j, v) in x0.iter().enumerate() {
            states[(0, j)] = *v;
        }
        out_idx = 1;
    }

    let mut t = t0;
    let mut y = x0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    f.eval(t, &y, &mut k[0])?;
    if k[0].iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFiniteRhs { t, state: y });
    }

    if out_idx >= times.len() && dense.is_none() {
        return Ok(Trajectory {
            times: times.to_vec(),
            states,
        });
    }

    let span = t_end - t0;
    let mut h = match cfg.initial_step {
        Some(h0) if h0 > 0.0 => h0,
        Some(_) => return Err(SolveError::InvalidConfig("initial step must be > 0".into())),
        None => initial_step(f, t0, &y, &k[0], span.max(f64::MIN_POSITIVE), cfg)?,
    };

    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut interp = vec![0.0; n];
    let mut steps = 0usize;

    while t < t_end {
        if steps >= cfg.max_steps {
            return Err(SolveError::StepLimitExhausted {
                t,
                limit: cfg.max_steps,
            });
        }
        steps += 1;
        if h < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(SolveError::StepSizeUnderflow { t });
        }
        if t + h > t_end {
            h = t_end - t;
        }

        // stages 2..7; the 7th lands on t+h and doubles as the FSAL slot
        let mut stage_failed = false;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                y_stage[i] = acc;
            }
            let (before, rest) = k.split_at_mut(s);
            let _ = before;
            match f.eval(t + C[s] * h, &y_stage, &mut rest[0]) {
                Ok(()) => {
                    if rest[0].iter().any(|v| !v.is_finite()) {
                        stage_failed = true;
                        break;
                    }
                }
                Err(SolveError::Model(_)) => {
                    stage_failed = true;
                    break;
                }
                Err(other) => return Err(other),
            }
        }

        let err_norm = if stage_failed {
            f64::INFINITY
        } else {
            // the 7th stage value is the 5th-order solution
            for i in 0..n {
                let mut acc = y[i];
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate().take(6) {
                    acc += h * A[6][j] * kj[i];
                    e += h * E[j] * kj[i];
                }
                e += h * E[6] * k[6][i];
                y_new[i] = acc;
                err[i] = e;
            }
            if y_new.iter().any(|v| !v.is_finite()) {
                f64::INFINITY
            } else {
                rms_scaled(&err, &y, &y_new, cfg)
            }
        };

        if err_norm <= 1.0 {
            // sample requested times inside the accepted step
            let needs_interp =
                (out_idx < times.len() && times[out_idx] <= t + h) || dense.is_some();
            let q = needs_interp
                .then(|| interpolant_coefficients(&k, n))
                .unwrap_or_default();
            while out_idx < times.len() && times[out_idx] <= t + h {
                let theta = (times[out_idx] - t) / h;
                eval_interpolant(theta, h, &y, &q, &mut interp);
                for (j, v) in interp.iter().enumerate() {
                    states[(out_idx, j)] = *v;
                }
                out_idx += 1;
            }
            if let Some(segments) = dense.as_deref_mut() {
                segments.push(Segment {
                    t0: t,
                    h,
                    y0: y.clone(),
                    q,
                });
            }
            t += h;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6); // FSAL
            let scale = if err_norm == 0.0 {
                MAX_SCALE
            } else {
                (SAFETY * err_norm.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
            };
            h *= scale;
        } else {
            let scale = if err_norm.is_finite() {
                (SAFETY * err_norm.powf(-0.2)).clamp(MIN_SCALE, 1.0)
            } else {
                MIN_SCALE
            };
            h *= scale;
        }
    }

    Ok(Trajectory {
        times: times.to_vec(),
        states,
    })
}

/// Solve a bound model over the requested grid.
pub fn integrate(
    model: &OdeModel,
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory, SolveError> {
    let (x0, t0) = model.initial_required()?;
    let x0 = x0.to_vec();
    let mut ev = model.evaluator()?;
    let mut f =
        |t: f64, x: &[f64], dx: &mut [f64]| ev.rhs(t, x, dx).map_err(SolveError::from);
    solve_ivp(&mut f, t0, &x0, times, cfg)
}

/// Evenly spaced grid of `n` points over `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + step * i as f64 })
        .collect()
}
