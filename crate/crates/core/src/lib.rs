//! Toolkit for systems of ordinary differential equations defined from typed
//! transitions or explicit equations: symbolic Jacobians and parameter
//! gradients, deterministic and stochastic solvers, derivative-based parameter
//! estimation, confidence intervals, and epidemic quantities (disease-free
//! equilibrium, basic reproduction number).

pub mod expr;
pub mod model;
pub mod solver;
pub mod stochastic;
pub mod estimate;
pub mod confidence;
pub mod models;
pub mod epi;
pub mod io;
