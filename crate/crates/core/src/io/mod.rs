//! Declarative model files (TOML), observation data (CSV), and result
//! documents (CSV trajectories, JSON summaries).
//!
//! # Model file schema
//!
//! ```toml
//! states = ["S", "I", "R"]          # or typed templating, see below
//! params = ["beta", "gamma", "N"]
//!
//! [[transitions]]
//! origin = "S"                       # string or list of strings
//! destination = "I"                  # required for type "T", else absent
//! equation = "beta*S*I/N"
//! type = "T"                         # T | ODE | B | D
//!
//! [values]                           # optional parameter values
//! beta = 3.6
//!
//! [initial]                          # optional initial condition
//! state = [505828.96, 20.5, 0.0]
//! t0 = 0.0
//!
//! [distributions]                    # optional sampling distributions
//! beta = { family = "gamma", shape = 3600.0, rate = 1000.0 }
//! ```
//!
//! Typed state templating replaces `states` with base names crossed with
//! type suffixes, so `state_bases = ["S", "I"]` and `state_types = ["v",
//! "h"]` expands to `S_v, S_h, I_v, I_h`.
//!
//! # Observation file schema
//!
//! Comma-separated text with a header row `t,<state>,...` and one row per
//! observation time; times must be strictly increasing.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::SymbolTable;
use crate::model::{ModelError, OdeModel, Transition, TransitionType};
use crate::solver::Trajectory;
use crate::stochastic::Distribution;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file: {0}")]
    Toml(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("observation file: {0}")]
    Observations(String),
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }

    fn from_vec(mut v: Vec<String>) -> OneOrMany {
        if v.len() == 1 {
            OneOrMany::One(v.remove(0))
        } else {
            OneOrMany::Many(v)
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TransitionRecord {
    origin: OneOrMany,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    destination: Option<OneOrMany>,
    equation: String,
    #[serde(rename = "type")]
    kind: TransitionType,
}

impl From<&Transition> for TransitionRecord {
    fn from(tr: &Transition) -> TransitionRecord {
        TransitionRecord {
            origin: OneOrMany::from_vec(tr.origin.clone()),
            destination: if tr.destination.is_empty() {
                None
            } else {
                Some(OneOrMany::from_vec(tr.destination.clone()))
            },
            equation: tr.equation.clone(),
            kind: tr.kind,
        }
    }
}

impl From<TransitionRecord> for Transition {
    fn from(rec: TransitionRecord) -> Transition {
        Transition {
            origin: rec.origin.into_vec(),
            destination: rec.destination.map(OneOrMany::into_vec).unwrap_or_default(),
            equation: rec.equation,
            kind: rec.kind,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InitialRecord {
    state: Vec<f64>,
    t0: f64,
}

/// On-disk model description.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_bases: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_types: Vec<String>,
    pub params: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    transitions: Vec<TransitionRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    initial: Option<InitialRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub distributions: BTreeMap<String, Distribution>,
}

/// Parsed model plus the file-level extras that live outside [`OdeModel`].
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub model: OdeModel,
    pub distributions: BTreeMap<String, Distribution>,
}

impl ModelFile {
    /// Final state list after typed templating.
    pub fn expanded_states(&self) -> Result<Vec<String>, IoError> {
        let templated = !self.state_bases.is_empty() || !self.state_types.is_empty();
        if templated {
            if !self.states.is_empty() {
                return Err(IoError::Schema(
                    "give either `states` or `state_bases`/`state_types`, not both".into(),
                ));
            }
            if self.state_bases.is_empty() || self.state_types.is_empty() {
                return Err(IoError::Schema(
                    "typed templating needs both `state_bases` and `state_types`".into(),
                ));
            }
            Ok(self
                .state_bases
                .iter()
                .flat_map(|base| {
                    self.state_types
                        .iter()
                        .map(move |suffix| format!("{base}_{suffix}"))
                })
                .collect())
        } else if self.states.is_empty() {
            Err(IoError::Schema("empty state list".into()))
        } else {
            Ok(self.states.clone())
        }
    }

    pub fn build(&self) -> Result<LoadedModel, IoError> {
        let states = self.expanded_states()?;
        let table = SymbolTable::new(states, self.params.clone()).map_err(ModelError::from)?;
        let mut transitions = Vec::new();
        let mut odes = Vec::new();
        let mut birth_death = Vec::new();
        for rec in self.transitions.iter().cloned() {
            let tr = Transition::from(rec);
            match tr.kind {
                TransitionType::Between => transitions.push(tr),
                TransitionType::Ode => odes.push(tr),
                TransitionType::Birth | TransitionType::Death => birth_death.push(tr),
            }
        }
        let mut model = OdeModel::build(table, transitions, odes, birth_death)?;
        model.set_parameters(self.values.iter().map(|(k, v)| (k.as_str(), *v)))?;
        if let Some(initial) = &self.initial {
            model.set_initial(initial.state.clone(), initial.t0)?;
        }
        for (name, dist) in &self.distributions {
            if model.table().param_index(name).is_none() {
                return Err(IoError::Schema(format!(
                    "distribution given for unknown parameter `{name}`"
                )));
            }
            dist.validate()
                .map_err(|e| IoError::Schema(e.to_string()))?;
        }
        Ok(LoadedModel {
            model,
            distributions: self.distributions.clone(),
        })
    }

    /// Snapshot of a built model (templating is not reconstructed).
    pub fn from_model(model: &OdeModel) -> ModelFile {
        let values: BTreeMap<String, f64> = model
            .params()
            .iter()
            .filter_map(|name| model.param_value(name).map(|v| (name.clone(), v)))
            .collect();
        ModelFile {
            states: model.states().to_vec(),
            state_bases: Vec::new(),
            state_types: Vec::new(),
            params: model.params().to_vec(),
            transitions: model.transitions().iter().map(TransitionRecord::from).collect(),
            values,
            initial: model.initial().map(|(state, t0)| InitialRecord {
                state: state.to_vec(),
                t0,
            }),
            distributions: BTreeMap::new(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("model file serializes")
    }
}

pub fn parse_model_str(text: &str) -> Result<ModelFile, IoError> {
    toml::from_str(text).map_err(|e| IoError::Toml(e.to_string()))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    parse_model_str(&text)?.build()
}

pub fn save_model(model: &OdeModel, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, ModelFile::from_model(model).to_toml()).map_err(file_err(path))
}

/// Observation data: times plus one named column per observed state.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl Observations {
    /// Column subset in the order requested.
    pub fn select(&self, names: &[&str]) -> Result<DMatrix<f64>, IoError> {
        let mut cols = Vec::with_capacity(names.len());
        for name in names {
            let idx = self
                .names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| {
                    IoError::Observations(format!("no column `{name}` in the data file"))
                })?;
            cols.push(idx);
        }
        Ok(DMatrix::from_fn(self.times.len(), cols.len(), |i, j| {
            self.values[(i, cols[j])]
        }))
    }
}

pub fn parse_observations_str(text: &str) -> Result<Observations, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IoError::Observations(e.to_string()))?
        .clone();
    if headers.is_empty() || &headers[0] != "t" {
        return Err(IoError::Observations(
            "header row must start with `t`".into(),
        ));
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(IoError::Observations("no observation columns".into()));
    }
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IoError::Observations(e.to_string()))?;
        if record.len() != names.len() + 1 {
            return Err(IoError::Observations(format!(
                "row {} has {} fields, expected {}",
                line + 2,
                record.len(),
                names.len() + 1
            )));
        }
        let mut parse = |field: &str| -> Result<f64, IoError> {
            field.parse::<f64>().map_err(|_| {
                IoError::Observations(format!("row {}: invalid number `{field}`", line + 2))
            })
        };
        times.push(parse(&record[0])?);
        rows.push(
            record
                .iter()
                .skip(1)
                .map(&mut parse)
                .collect::<Result<_, _>>()?,
        );
    }
    if times.is_empty() {
        return Err(IoError::Observations("no data rows".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(IoError::Observations(
            "times must be strictly increasing".into(),
        ));
    }
    let values = DMatrix::from_fn(times.len(), names.len(), |i, j| rows[i][j]);
    Ok(Observations {
        times,
        names,
        values,
    })
}

pub fn load_observations(path: impl AsRef<Path>) -> Result<Observations, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(file_err(path))?;
    parse_observations_str(&text)
}

/// Render a trajectory as delimited text: `t` column then one column per
/// state, shortest round-trip float formatting.
pub fn trajectory_to_csv(trajectory: &Trajectory, state_names: &[String]) -> String {
    let mut out = String::from("t");
    for name in state_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, t) in trajectory.times.iter().enumerate() {
        out.push_str(&t.to_string());
        for j in 0..trajectory.n_states() {
            out.push(',');
            out.push_str(&trajectory.states[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_trajectory(
    trajectory: &Trajectory,
    state_names: &[String],
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(file_err(path))?;
    file.write_all(trajectory_to_csv(trajectory, state_names).as_bytes())
        .map_err(file_err(path))
}

/// Structured summary of a fit run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub parameters: Vec<String>,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub at_lower: Vec<bool>,
    pub at_upper: Vec<bool>,
    pub loss: String,
}

/// Structured summary of a confidence-interval run (fit included).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CiSummary {
    pub method: String,
    pub alpha: f64,
    pub parameters: Vec<String>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub used_gauss_newton_fallback: bool,
    pub lower_found: Vec<bool>,
    pub upper_found: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<Vec<Vec<f64>>>,
    pub fit: FitSummary,
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    std::fs::write(path, text).map_err(file_err(path))
}
