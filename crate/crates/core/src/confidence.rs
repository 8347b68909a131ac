//! Confidence intervals for fitted parameters: asymptotic (inverse observed
//! information), profile deviance, and semi-parametric bootstrap with
//! residual resampling.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::estimate::{fit, EstimError, FitOptions, LossProblem};
use crate::stochastic::realization_rng;

#[derive(Debug, Error)]
pub enum CiError {
    #[error(transparent)]
    Estim(#[from] EstimError),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("bootstrap needs at least 2 replicates")]
    TooFewReplicates,
    #[error("bootstrap replicate {replicate} failed: {reason}")]
    ReplicateFailed { replicate: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CiMethod {
    Asymptotic,
    Profile,
    Bootstrap,
}

impl CiMethod {
    pub fn name(self) -> &'static str {
        match self {
            CiMethod::Asymptotic => "asymptotic",
            CiMethod::Profile => "profile",
            CiMethod::Bootstrap => "bootstrap",
        }
    }
}

/// Per-parameter interval bounds plus method metadata.
#[derive(Clone, Debug)]
pub struct IntervalResult {
    pub method: CiMethod,
    pub alpha: f64,
    pub names: Vec<String>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Asymptotic only: the Hessian was not positive definite and the
    /// Gauss-Newton surrogate was used instead.
    pub used_gauss_newton_fallback: bool,
    /// Profile only: whether the deviance actually crossed the threshold on
    /// each side (false entries mean the bound was clipped to the box).
    pub lower_found: Vec<bool>,
    pub upper_found: Vec<bool>,
    /// Bootstrap with `full_output`: one row per replicate.
    pub replicates: Option<DMatrix<f64>>,
}

impl IntervalResult {
    fn base(method: CiMethod, alpha: f64, p: &LossProblem, theta_hat: &[f64]) -> IntervalResult {
        let k = theta_hat.len();
        IntervalResult {
            method,
            alpha,
            names: p.free_param_names().iter().map(|s| s.to_string()).collect(),
            estimate: theta_hat.to_vec(),
            lower: vec![0.0; k],
            upper: vec![0.0; k],
            used_gauss_newton_fallback: false,
            lower_found: vec![true; k],
            upper_found: vec![true; k],
            replicates: None,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), CiError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CiError::InvalidAlpha(alpha))
    }
}

/// Normality-based interval from the curvature of the loss at the optimum:
/// `θ̂ ± z_{1-α/2}·sqrt(diag(H⁻¹))`. When the Hessian is not positive
/// definite, `2·JᵀJ` (the Gauss-Newton curvature of the squared loss) is
/// substituted and flagged.
pub fn ci_asymptotic(
    p: &LossProblem,
    theta_hat: &[f64],
    alpha: f64,
) -> Result<IntervalResult, CiError> {
    check_alpha(alpha)?;
    let hessian = p.hessian(theta_hat)?;
    let (information, fallback) = match nalgebra::Cholesky::new(hessian.clone()) {
        Some(_) => (hessian, false),
        None => (p.jtj(theta_hat)? * 2.0, true),
    };
    let inverse = nalgebra::Cholesky::new(information.clone())
        .map(|c| c.inverse())
        .or_else(|| information.try_inverse())
        .ok_or(CiError::SingularInformation)?;
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / 2.0);
    let mut out = IntervalResult::base(CiMethod::Asymptotic, alpha, p, theta_hat);
    out.used_gauss_newton_fallback = fallback;
    for i in 0..theta_hat.len() {
        let var = inverse[(i, i)];
        if !(var.is_finite() && var > 0.0) {
            return Err(CiError::SingularInformation);
        }
        let half = z * var.sqrt();
        out.lower[i] = theta_hat[i] - half;
        out.upper[i] = theta_hat[i] + half;
    }
    Ok(out)
}

/// Profile-deviance interval: each parameter is swept away from its estimate
/// with the remaining parameters re-optimized, and the bound is where
/// `2·(cost*(v) - cost(θ̂))` crosses the χ²₁ quantile. Crossings are located
/// by geometric bracket expansion plus bisection; a side that never crosses
/// inside the box is clipped and flagged.
pub fn ci_profile(
    p: &LossProblem,
    theta_hat: &[f64],
    alpha: f64,
    bounds: &[(f64, f64)],
    opts: &FitOptions,
) -> Result<IntervalResult, CiError> {
    check_alpha(alpha)?;
    let threshold = ChiSquared::new(1.0)
        .expect("one degree of freedom")
        .inverse_cdf(1.0 - alpha);
    let cost_hat = p.cost(theta_hat)?;
    let n_free = theta_hat.len();
    let mut out = IntervalResult::base(CiMethod::Profile, alpha, p, theta_hat);

    for i in 0..n_free {
        // nuisance warm start carried along the sweep, one per side
        let nuisance_hat: Vec<f64> = theta_hat
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| *v)
            .collect();
        let nuisance_bounds: Vec<(f64, f64)> = bounds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| *b)
            .collect();

        for (side, found, slot) in [
            (-1.0, &mut out.lower_found, &mut out.lower),
            (1.0, &mut out.upper_found, &mut out.upper),
        ] {
            let limit = if side < 0.0 { bounds[i].0 } else { bounds[i].1 };
            let mut warm = nuisance_hat.clone();
            let deviance = |v: f64, warm: &mut Vec<f64>| -> Result<f64, CiError> {
                let cost = if n_free == 1 {
                    p.cost(&[v])?
                } else {
                    let sub = p
                        .freeze_param(i, v)?
                        .with_theta0(warm.clone())?;
                    let result = fit(&sub, &nuisance_bounds, opts)?;
                    *warm = result.theta.clone();
                    result.cost
                };
                Ok(2.0 * (cost - cost_hat))
            };

            let mut step = 0.05 * theta_hat[i].abs().max(0.1);
            let mut inside = theta_hat[i];
            let mut crossing = None;
            for _ in 0..60 {
                let v = (theta_hat[i] + side * step).clamp(bounds[i].0, bounds[i].1);
                let d = deviance(v, &mut warm)?;
                if d >= threshold {
                    crossing = Some(v);
                    break;
                }
                inside = v;
                if v == limit {
                    break;
                }
                step *= 2.0;
            }

            match crossing {
                None => {
                    found[i] = false;
                    slot[i] = limit;
                }
                Some(mut outside) => {
                    // bisect between the last sub-threshold point and the
                    // first crossing
                    let mut inner = inside;
                    for _ in 0..60 {
                        if (outside - inner).abs() <= 1e-6 * theta_hat[i].abs().max(1e-3) {
                            break;
                        }
                        let mid = 0.5 * (inner + outside);
                        if deviance(mid, &mut warm)? >= threshold {
                            outside = mid;
                        } else {
                            inner = mid;
                        }
                    }
                    slot[i] = 0.5 * (inner + outside);
                }
            }
        }
    }
    Ok(out)
}

/// Type-7 (linear interpolation) empirical quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Semi-parametric bootstrap: residuals at the estimate are standardized per
/// target state, pooled, resampled with replacement onto the fitted
/// predictions, and each replicate is refit inside the bounds. The interval
/// is the empirical `α/2`..`1-α/2` band of the replicate estimates. Any
/// replicate whose fit fails aborts the whole call.
#[allow(clippy::too_many_arguments)]
pub fn ci_bootstrap(
    p: &LossProblem,
    theta_hat: &[f64],
    alpha: f64,
    iterations: usize,
    bounds: &[(f64, f64)],
    seed: u64,
    full_output: bool,
    opts: &FitOptions,
) -> Result<IntervalResult, CiError> {
    check_alpha(alpha)?;
    if iterations < 2 {
        return Err(CiError::TooFewReplicates);
    }
    let yhat = p.predict(theta_hat)?;
    let residuals = p.observations() - &yhat;
    let (n, k) = (residuals.nrows(), residuals.ncols());

    // standardize per state, pool across states
    let mut scales = vec![0.0; k];
    for j in 0..k {
        let col = residuals.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        scales[j] = var.sqrt().max(f64::MIN_POSITIVE);
    }
    let pool: Vec<f64> = (0..n)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| residuals[(i, j)] / scales[j])
        .collect();

    let base = p.clone().with_theta0(theta_hat.to_vec())?;
    let runs: Vec<Result<Vec<f64>, (usize, String)>> = (0..iterations)
        .into_par_iter()
        .map(|r| {
            let mut rng = realization_rng(seed, r);
            let y_star = DMatrix::from_fn(n, k, |i, j| {
                let eps = pool[rng.gen_range(0..pool.len())];
                yhat[(i, j)] + eps * scales[j]
            });
            let problem = base
                .clone()
                .with_observations(y_star)
                .map_err(|e| (r, e.to_string()))?;
            let result = fit(&problem, bounds, opts).map_err(|e| (r, e.to_string()))?;
            if !result.converged {
                return Err((r, "fit did not converge".to_string()));
            }
            Ok(result.theta)
        })
        .collect();

    let mut estimates = DMatrix::zeros(iterations, theta_hat.len());
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(theta) => {
                for (c, v) in theta.into_iter().enumerate() {
                    estimates[(r, c)] = v;
                }
            }
            Err((replicate, reason)) => {
                return Err(CiError::ReplicateFailed { replicate, reason })
            }
        }
    }

    let mut out = IntervalResult::base(CiMethod::Bootstrap, alpha, p, theta_hat);
    for c in 0..theta_hat.len() {
        let mut column: Vec<f64> = estimates.column(c).iter().copied().collect();
        column.sort_by(f64::total_cmp);
        out.lower[c] = quantile_sorted(&column, alpha / 2.0);
        out.upper[c] = quantile_sorted(&column, 1.0 - alpha / 2.0);
    }
    if full_output {
        out.replicates = Some(estimates);
    }
    Ok(out)
}
