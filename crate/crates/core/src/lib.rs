//! Controller adaptation by learning the solution map of a contextual
//! Bayesian optimization problem.
//!
//! An inner GP-UCB loop finds the best controller parameters `z` for one
//! context `θ`; an outer loop picks contexts that maximize the log-determinant
//! of the solution model's predictive covariance and fits a (multi-output) GP
//! `θ ↦ z*`. The [`sim`] module supplies the intersection MPC benchmark used
//! as the black-box performance metric.

pub mod contextual_bo;
pub mod domain;
pub mod error;
pub mod gp;
pub mod harness;
pub mod mogp;
pub mod optim;
pub mod sim;
pub mod solution;

pub use domain::BoxDomain;
pub use error::{Error, Result};
