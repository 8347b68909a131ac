//! Shared fixtures and independent oracles for the acceptance suite.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use odekit::estimate::{LossKind, LossProblem};
use odekit::model::OdeModel;
use odekit::models;
use odekit::solver::{integrate, linspace, SolverConfig, Trajectory};

/// Tutorial SIR bound to the worked-example values.
pub fn tutorial_sir() -> OdeModel {
    let n = 7_781_984.0;
    let mut model = models::sir_n(&[("beta", 3.6), ("gamma", 0.2), ("N", n)]).unwrap();
    model
        .set_initial(vec![0.065 * n, 123.0 * (5.0 / 30.0), 0.0], 0.0)
        .unwrap();
    model
}

/// Classical fixed-step RK4, independent of the production solver.
pub fn rk4<F: Fn(f64, &[f64]) -> Vec<f64>>(
    f: F,
    t0: f64,
    x0: &[f64],
    t_end: f64,
    h: f64,
) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut t = t0;
    let steps = ((t_end - t0) / h).round() as usize;
    let mut stage = |x: &[f64], k: &[f64], w: f64, t: f64, f: &F| -> Vec<f64> {
        let probe: Vec<f64> = (0..n).map(|i| x[i] + w * k[i]).collect();
        f(t, &probe)
    };
    for _ in 0..steps {
        let k1 = f(t, &x);
        let k2 = stage(&x, &k1, 0.5 * h, t + 0.5 * h, &f);
        let k3 = stage(&x, &k2, 0.5 * h, t + 0.5 * h, &f);
        let k4 = stage(&x, &k3, h, t + h, &f);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += h;
    }
    x
}

/// The estimation scenario: proportion SIR truth (0.5, 1/3), observations of
/// R over t in (0, 100] with multiplicative noise `0.90 + U(0, 0.2)`.
pub fn estimation_scenario(seed: u64) -> LossProblem {
    let mut model = models::sir(&[("beta", 0.5), ("gamma", 1.0 / 3.0)]).unwrap();
    let x0 = vec![1.0, 1.27e-6, 0.0];
    model.set_initial(x0.clone(), 0.0).unwrap();
    let grid = linspace(0.0, 100.0, 50);
    let times = grid[1..].to_vec();
    let truth = integrate(&model, &times, &SolverConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = DMatrix::from_fn(times.len(), 1, |i, _| {
        truth.value(i, 2) * (0.90 + rng.gen::<f64>() / 5.0)
    });
    LossProblem::new(
        model,
        vec![0.5, 0.5],
        x0,
        0.0,
        times,
        y,
        &["R"],
        LossKind::Square,
    )
    .unwrap()
}

pub fn max_rel_mass_drift(traj: &Trajectory) -> f64 {
    let total0: f64 = traj.row(0).iter().sum();
    (0..traj.n_times())
        .map(|i| (traj.row(i).iter().sum::<f64>() - total0).abs() / total0)
        .fold(0.0, f64::max)
}

pub fn count_strict_local_maxima(series: &[f64]) -> usize {
    series
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] > w[2])
        .count()
}
