//! Command-line surface of the toolkit: declarative model files in, solved
//! trajectories, stochastic realizations, fit/CI summaries, reproduction
//! numbers and unrolled models out.
//!
//! All stochastic commands are deterministic given `--seed`; without it a
//! seed is drawn from entropy and echoed on stderr. `ODEKIT_WORKERS` caps the
//! worker pool for parallel realizations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use odekit::confidence::{ci_asymptotic, ci_bootstrap, ci_profile, CiError, IntervalResult};
use odekit::estimate::{fit, EstimError, FitOptions, FitResult, LossKind, LossProblem, Weights};
use odekit::expr::ExprError;
use odekit::io::{
    load_model, load_observations, save_model, trajectory_to_csv, write_json, CiSummary,
    FitSummary, IoError, LoadedModel, ModelFile,
};
use odekit::model::{ModelError, OdeModel};
use odekit::models;
use odekit::solver::{integrate, linspace, SolveError, SolverConfig};
use odekit::stochastic::{
    mean_trajectory, simulate_jump, simulate_param, JumpMethod, ParamSpec, SimError,
    StochasticParams, TauLeapConfig,
};

#[derive(Parser)]
#[command(name = "odekit", version, about = "Compartmental ODE modelling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    Param,
    Jump,
}

#[derive(Clone, Copy, ValueEnum)]
enum JumpMethodArg {
    TauLeap,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Square,
    Normal,
    Poisson,
}

impl LossArg {
    fn kind(self) -> LossKind {
        match self {
            LossArg::Square => LossKind::Square,
            LossArg::Normal => LossKind::Normal,
            LossArg::Poisson => LossKind::Poisson,
        }
    }

    fn name(self) -> &'static str {
        match self {
            LossArg::Square => "square",
            LossArg::Normal => "normal",
            LossArg::Poisson => "poisson",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CiMethodArg {
    Asymptotic,
    Profile,
    Bootstrap,
}

#[derive(Subcommand)]
enum Command {
    /// Write the model file of a predefined template.
    Template {
        /// Template name (see `template --list`).
        name: Option<String>,
        /// List the available templates.
        #[arg(long)]
        list: bool,
        /// Parameter values to bake in, as `name=value`.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the system equations, one `state' = expression` line per state.
    Print {
        #[arg(long)]
        model: PathBuf,
        /// Emit LaTeX instead of plain text.
        #[arg(long)]
        latex: bool,
    },
    /// Solve the deterministic initial value problem.
    Solve {
        #[arg(long)]
        model: PathBuf,
        /// Output grid as `start:end:points`.
        #[arg(long)]
        times: String,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-8)]
        atol: f64,
        /// Parameter overrides, as `name=value`.
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Output path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate stochastic realizations.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        mode: SimMode,
        #[arg(long)]
        times: String,
        #[arg(long)]
        iterations: usize,
        /// Master seed; drawn from entropy and echoed when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Jump algorithm (jump mode only).
        #[arg(long, value_enum, default_value = "tau-leap")]
        method: JumpMethodArg,
        /// Relative propensity-change bound for tau-leaping.
        #[arg(long, default_value_t = 0.03)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-8)]
        atol: f64,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Directory for the per-realization files.
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Fit free parameters to observation data.
    Fit {
        #[arg(long)]
        model: PathBuf,
        /// Observation CSV (`t` column plus one column per observed state).
        #[arg(long)]
        data: PathBuf,
        /// Observed state names, comma separated.
        #[arg(long)]
        states: String,
        #[arg(long, value_enum, default_value = "square")]
        loss: LossArg,
        /// Initial guess, comma separated.
        #[arg(long)]
        theta0: String,
        /// Box bounds as `lo:hi,lo:hi,...`, one pair per free parameter.
        #[arg(long)]
        bounds: String,
        /// Restrict fitting to these parameters (comma separated).
        #[arg(long)]
        target_params: Option<String>,
        /// Scalar observation weight.
        #[arg(long)]
        weight: Option<f64>,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-8)]
        atol: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Confidence intervals around a fit.
    Ci {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        states: String,
        #[arg(long, value_enum)]
        method: CiMethodArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Bootstrap replicates.
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Master seed for bootstrap resampling.
        #[arg(long)]
        seed: Option<u64>,
        /// Include all bootstrap replicate estimates in the summary.
        #[arg(long)]
        full_output: bool,
        #[arg(long, value_enum, default_value = "square")]
        loss: LossArg,
        #[arg(long)]
        theta0: String,
        #[arg(long)]
        bounds: String,
        #[arg(long)]
        target_params: Option<String>,
        #[arg(long)]
        weight: Option<f64>,
        #[arg(long, default_value_t = 1e-8)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-8)]
        atol: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Basic reproduction number of a transition-form model.
    R0 {
        #[arg(long)]
        model: PathBuf,
        /// Disease state names, comma separated.
        #[arg(long)]
        disease_states: String,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Rewrite explicit equations as transitions and birth/death processes.
    Unroll {
        #[arg(long)]
        model: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() {
    env_logger::init();
    if let Ok(workers) = std::env::var("ODEKIT_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error[{}]: {err:#}", error_class(&err));
        std::process::exit(1);
    }
}

/// Machine-readable error class, from the deepest known error type.
/// Wrappers that merely forward another module's error classify as the
/// wrapped module.
fn error_class(err: &anyhow::Error) -> &'static str {
    fn model_class(e: &ModelError) -> &'static str {
        match e {
            ModelError::Expr(_) => "syntax",
            _ => "model",
        }
    }
    fn solve_class(e: &SolveError) -> &'static str {
        match e {
            SolveError::Model(m) => model_class(m),
            _ => "solve",
        }
    }
    fn estim_class(e: &EstimError) -> &'static str {
        match e {
            EstimError::Model(m) => model_class(m),
            EstimError::Solve(s) => solve_class(s),
            _ => "estimate",
        }
    }
    for cause in err.chain() {
        if let Some(io) = cause.downcast_ref::<IoError>() {
            return match io {
                IoError::File { .. } => "io",
                IoError::Toml(_) | IoError::Schema(_) => "schema",
                IoError::Observations(_) => "data",
                IoError::Model(m) => model_class(m),
            };
        }
        if cause.downcast_ref::<ExprError>().is_some() {
            return "syntax";
        }
        if let Some(m) = cause.downcast_ref::<ModelError>() {
            return model_class(m);
        }
        if let Some(s) = cause.downcast_ref::<SolveError>() {
            return solve_class(s);
        }
        if let Some(sim) = cause.downcast_ref::<SimError>() {
            return match sim {
                SimError::Model(m) => model_class(m),
                SimError::Solve(s) => solve_class(s),
                _ => "simulate",
            };
        }
        if let Some(e) = cause.downcast_ref::<EstimError>() {
            return estim_class(e);
        }
        if let Some(ci) = cause.downcast_ref::<CiError>() {
            return match ci {
                CiError::Estim(e) => estim_class(e),
                _ => "confidence",
            };
        }
        if let Some(e) = cause.downcast_ref::<odekit::epi::EpiError>() {
            return match e {
                odekit::epi::EpiError::Model(m) => model_class(m),
                _ => "epi",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "args"
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Template {
            name,
            list,
            params,
            output,
        } => cmd_template(name, list, &params, output),
        Command::Print { model, latex } => cmd_print(&model, latex),
        Command::Solve {
            model,
            times,
            rtol,
            atol,
            params,
            output,
        } => cmd_solve(&model, &times, rtol, atol, &params, output),
        Command::Simulate {
            model,
            mode,
            times,
            iterations,
            seed,
            method,
            epsilon,
            rtol,
            atol,
            params,
            output_dir,
        } => cmd_simulate(
            &model, mode, &times, iterations, seed, method, epsilon, rtol, atol, &params,
            &output_dir,
        ),
        Command::Fit {
            model,
            data,
            states,
            loss,
            theta0,
            bounds,
            target_params,
            weight,
            rtol,
            atol,
            output,
        } => {
            let problem = build_problem(
                &model,
                &data,
                &states,
                loss,
                &theta0,
                target_params.as_deref(),
                weight,
                rtol,
                atol,
            )?;
            let bounds = parse_bounds(&bounds, problem.n_free())?;
            let result = fit(&problem, &bounds, &FitOptions::default())?;
            let summary = fit_summary(&problem, &result, loss);
            emit_json(&summary, output.as_deref())
        }
        Command::Ci {
            model,
            data,
            states,
            method,
            alpha,
            iterations,
            seed,
            full_output,
            loss,
            theta0,
            bounds,
            target_params,
            weight,
            rtol,
            atol,
            output,
        } => cmd_ci(CiArgs {
            model,
            data,
            states,
            method,
            alpha,
            iterations,
            seed,
            full_output,
            loss,
            theta0,
            bounds,
            target_params,
            weight,
            rtol,
            atol,
            output,
        }),
        Command::R0 {
            model,
            disease_states,
            params,
        } => cmd_r0(&model, &disease_states, &params),
        Command::Unroll { model, output } => cmd_unroll(&model, output),
    }
}

fn parse_times(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("--times must be `start:end:points`, got `{spec}`");
    }
    let start: f64 = parts[0].parse().context("invalid start time")?;
    let end: f64 = parts[1].parse().context("invalid end time")?;
    let points: usize = parts[2].parse().context("invalid point count")?;
    if !(end > start) || points < 2 {
        bail!("--times needs end > start and at least 2 points");
    }
    Ok(linspace(start, end, points))
}

fn parse_f64_list(spec: &str, what: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("invalid number `{s}` in {what}"))
        })
        .collect()
}

fn parse_bounds(spec: &str, expected: usize) -> Result<Vec<(f64, f64)>> {
    let bounds: Vec<(f64, f64)> = spec
        .split(',')
        .map(|pair| -> Result<(f64, f64)> {
            let (lo, hi) = pair
                .split_once(':')
                .ok_or_else(|| anyhow!("bound `{pair}` must be `lo:hi`"))?;
            Ok((
                lo.trim().parse().map_err(|_| anyhow!("invalid bound `{lo}`"))?,
                hi.trim().parse().map_err(|_| anyhow!("invalid bound `{hi}`"))?,
            ))
        })
        .collect::<Result<_>>()?;
    if bounds.len() != expected {
        bail!("{} bound pairs given, {expected} free parameters", bounds.len());
    }
    Ok(bounds)
}

fn parse_param_overrides(specs: &[String]) -> Result<Vec<(String, f64)>> {
    specs
        .iter()
        .map(|spec| {
            let (name, value) = spec
                .split_once('=')
                .ok_or_else(|| anyhow!("--param `{spec}` must be `name=value`"))?;
            Ok((
                name.trim().to_string(),
                value
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| anyhow!("invalid value in --param `{spec}`"))?,
            ))
        })
        .collect()
}

fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<LoadedModel> {
    let mut loaded = load_model(path)?;
    let overrides = parse_param_overrides(overrides)?;
    loaded
        .model
        .set_parameters(overrides.iter().map(|(n, v)| (n.as_str(), *v)))?;
    Ok(loaded)
}

fn emit_text(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json<T: serde::Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => write_json(value, path)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            eprintln!("seed: {s}");
            s
        }
    }
}

fn cmd_template(
    name: Option<String>,
    list: bool,
    params: &[String],
    output: Option<PathBuf>,
) -> Result<()> {
    if list {
        let mut text = String::new();
        for t in models::TEMPLATES {
            text.push_str(&format!(
                "{}: {} (params: {})\n",
                t.name,
                t.description,
                t.params.join(", ")
            ));
        }
        return emit_text(&text, output.as_deref());
    }
    let name = name.ok_or_else(|| anyhow!("give a template name or --list"))?;
    let template = models::template(&name)
        .ok_or_else(|| anyhow!("unknown template `{name}`; try --list"))?;
    let mut model = template.structure();
    let overrides = parse_param_overrides(params)?;
    model.set_parameters(overrides.iter().map(|(n, v)| (n.as_str(), *v)))?;
    let text = ModelFile::from_model(&model).to_toml();
    emit_text(&text, output.as_deref())
}

fn cmd_print(model_path: &Path, latex: bool) -> Result<()> {
    let loaded = load_model(model_path)?;
    let model = loaded.model;
    let mut text = String::new();
    for (state, rhs) in model.states().iter().zip(model.ode_equations()) {
        if latex {
            text.push_str(&format!("\\frac{{d{state}}}{{dt}} = {}\n", rhs.to_latex()));
        } else {
            text.push_str(&format!("{state}' = {rhs}\n"));
        }
    }
    print!("{text}");
    Ok(())
}

fn cmd_solve(
    model_path: &Path,
    times: &str,
    rtol: f64,
    atol: f64,
    params: &[String],
    output: Option<PathBuf>,
) -> Result<()> {
    let loaded = load_with_overrides(model_path, params)?;
    let times = parse_times(times)?;
    let cfg = SolverConfig {
        rtol,
        atol,
        ..Default::default()
    };
    let traj = integrate(&loaded.model, &times, &cfg)?;
    let csv = trajectory_to_csv(&traj, &loaded.model.states().to_vec());
    emit_text(&csv, output.as_deref())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model_path: &Path,
    mode: SimMode,
    times: &str,
    iterations: usize,
    seed: Option<u64>,
    method: JumpMethodArg,
    epsilon: f64,
    rtol: f64,
    atol: f64,
    params: &[String],
    output_dir: &Path,
) -> Result<()> {
    let loaded = load_with_overrides(model_path, params)?;
    let times = parse_times(times)?;
    let seed = resolve_seed(seed);
    std::fs::create_dir_all(output_dir)
        .with_context(|| format!("creating {}", output_dir.display()))?;
    let names = loaded.model.states().to_vec();
    let write = |name: String, text: String| -> Result<()> {
        let path = output_dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    };

    match mode {
        SimMode::Param => {
            let cfg = SolverConfig {
                rtol,
                atol,
                ..Default::default()
            };
            // constants from the bound values, distributions from the file
            let mut bindings: BTreeMap<String, ParamSpec> = BTreeMap::new();
            for name in loaded.model.params() {
                if let Some(v) = loaded.model.param_value(name) {
                    bindings.insert(name.clone(), ParamSpec::Fixed(v));
                }
            }
            for (name, dist) in &loaded.distributions {
                bindings.insert(name.clone(), ParamSpec::Random(*dist));
            }
            let spec = StochasticParams::new(
                &loaded.model,
                bindings.iter().map(|(n, s)| (n.as_str(), s.clone())),
            )?;
            let (mean, all) =
                simulate_param(&loaded.model, &times, &spec, iterations, seed, &cfg)?;
            write("mean.csv".into(), trajectory_to_csv(&mean, &names))?;
            for (i, traj) in all.iter().enumerate() {
                write(
                    format!("realization_{i:03}.csv"),
                    trajectory_to_csv(traj, &names),
                )?;
            }
        }
        SimMode::Jump => {
            let method = match method {
                JumpMethodArg::TauLeap => JumpMethod::TauLeap,
                JumpMethodArg::Exact => JumpMethod::Exact,
            };
            let leap = TauLeapConfig {
                epsilon,
                ..Default::default()
            };
            let runs = simulate_jump(&loaded.model, &times, iterations, method, seed, &leap)?;
            let mean = mean_trajectory(
                &runs
                    .iter()
                    .map(|r| r.trajectory.clone())
                    .collect::<Vec<_>>(),
            );
            write("mean.csv".into(), trajectory_to_csv(&mean, &names))?;
            for (i, run) in runs.iter().enumerate() {
                write(
                    format!("realization_{i:03}.csv"),
                    trajectory_to_csv(&run.trajectory, &names),
                )?;
                let mut events = String::from("t\n");
                for t in &run.event_times {
                    events.push_str(&t.to_string());
                    events.push('\n');
                }
                write(format!("events_{i:03}.csv"), events)?;
            }
        }
    }
    eprintln!("wrote {iterations} realizations to {}", output_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn build_problem(
    model_path: &Path,
    data_path: &Path,
    states: &str,
    loss: LossArg,
    theta0: &str,
    target_params: Option<&str>,
    weight: Option<f64>,
    rtol: f64,
    atol: f64,
) -> Result<LossProblem> {
    let loaded = load_model(model_path)?;
    let model = loaded.model;
    let (x0, t0) = model
        .initial()
        .map(|(x, t)| (x.to_vec(), t))
        .ok_or_else(|| anyhow!("model file must carry an [initial] section for fitting"))?;
    let observations = load_observations(data_path)?;
    let state_names: Vec<&str> = states.split(',').map(str::trim).collect();
    let y = observations.select(&state_names)?;
    let theta0 = parse_f64_list(theta0, "--theta0")?;
    let mut problem = LossProblem::new(
        model,
        theta0.clone(),
        x0,
        t0,
        observations.times.clone(),
        y,
        &state_names,
        loss.kind(),
    )?;
    if let Some(names) = target_params {
        let names: Vec<&str> = names.split(',').map(str::trim).collect();
        problem = problem.with_target_params(&names, theta0)?;
    }
    if let Some(w) = weight {
        problem = problem.with_weights(Weights::Scalar(w))?;
    }
    Ok(problem.with_solver_config(SolverConfig {
        rtol,
        atol,
        ..Default::default()
    }))
}

fn fit_summary(problem: &LossProblem, result: &FitResult, loss: LossArg) -> FitSummary {
    FitSummary {
        parameters: problem
            .free_param_names()
            .iter()
            .map(|s| s.to_string())
            .collect(),
        theta: result.theta.clone(),
        cost: result.cost,
        converged: result.converged,
        iterations: result.iterations,
        at_lower: result.at_lower.clone(),
        at_upper: result.at_upper.clone(),
        loss: loss.name().to_string(),
    }
}

struct CiArgs {
    model: PathBuf,
    data: PathBuf,
    states: String,
    method: CiMethodArg,
    alpha: f64,
    iterations: usize,
    seed: Option<u64>,
    full_output: bool,
    loss: LossArg,
    theta0: String,
    bounds: String,
    target_params: Option<String>,
    weight: Option<f64>,
    rtol: f64,
    atol: f64,
    output: Option<PathBuf>,
}

fn cmd_ci(args: CiArgs) -> Result<()> {
    let problem = build_problem(
        &args.model,
        &args.data,
        &args.states,
        args.loss,
        &args.theta0,
        args.target_params.as_deref(),
        args.weight,
        args.rtol,
        args.atol,
    )?;
    let bounds = parse_bounds(&args.bounds, problem.n_free())?;
    let opts = FitOptions::default();
    let fit_result = fit(&problem, &bounds, &opts)?;
    let theta_hat = fit_result.theta.clone();

    let mut seed_used = None;
    let interval: IntervalResult = match args.method {
        CiMethodArg::Asymptotic => ci_asymptotic(&problem, &theta_hat, args.alpha)?,
        CiMethodArg::Profile => {
            ci_profile(&problem, &theta_hat, args.alpha, &bounds, &opts)?
        }
        CiMethodArg::Bootstrap => {
            let seed = resolve_seed(args.seed);
            seed_used = Some(seed);
            ci_bootstrap(
                &problem,
                &theta_hat,
                args.alpha,
                args.iterations,
                &bounds,
                seed,
                args.full_output,
                &opts,
            )?
        }
    };

    let summary = CiSummary {
        method: interval.method.name().to_string(),
        alpha: interval.alpha,
        parameters: interval.names.clone(),
        estimate: interval.estimate.clone(),
        lower: interval.lower.clone(),
        upper: interval.upper.clone(),
        seed: seed_used,
        iterations: matches!(args.method, CiMethodArg::Bootstrap).then_some(args.iterations),
        used_gauss_newton_fallback: interval.used_gauss_newton_fallback,
        lower_found: interval.lower_found.clone(),
        upper_found: interval.upper_found.clone(),
        replicates: interval.replicates.as_ref().map(|m| {
            (0..m.nrows())
                .map(|r| m.row(r).iter().copied().collect())
                .collect()
        }),
        fit: fit_summary(&problem, &fit_result, args.loss),
    };
    emit_json(&summary, args.output.as_deref())
}

fn cmd_r0(model_path: &Path, disease_states: &str, params: &[String]) -> Result<()> {
    let loaded = load_with_overrides(model_path, params)?;
    let disease: Vec<&str> = disease_states.split(',').map(str::trim).collect();
    let model: &OdeModel = &loaded.model;
    match odekit::epi::r0(model, &disease)? {
        odekit::epi::R0Result::Symbolic(expr) => println!("{expr}"),
        odekit::epi::R0Result::Numeric(value) => println!("{value}"),
    }
    Ok(())
}

fn cmd_unroll(model_path: &Path, output: Option<PathBuf>) -> Result<()> {
    let loaded = load_model(model_path)?;
    let unrolled = loaded.model.unroll()?;
    match output {
        Some(path) => save_model(&unrolled, &path)?,
        None => print!("{}", ModelFile::from_model(&unrolled).to_toml()),
    }
    Ok(())
}
