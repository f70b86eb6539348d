//! Relative counterfactual explanations with Wasserstein regularization.
//!
//! Find covariates `φ` and a decision `z` in the desired space, with `r` open
//! facilities, minimizing `Σ_d |φ_d − φ⁰_d| + λ Σ_n W₂²(P⁰_n, P_n(φ, z))`
//! subject to captured demand `Q(φ, z) ≥ α Q^factual` and every customer
//! keeping probability at least `ε` for every open facility.

mod bound;
mod config;
mod engine;
mod inner;
mod metrics;
mod problem;
mod warm_start;

use thiserror::Error;

use crate::choice::ChoiceError;
use crate::lp::LpError;
use crate::transport::TransportError;

pub use bound::{bound_model, decision_bound, model_free_bound, BoundModel, BoundScope, DecisionBound, LowerBoundResult};
pub use config::{DesiredSpace, SolverConfig, SupportMode};
pub use engine::{explain, Explanation, ObjectiveParts, SearchStats, Timings, EXPLANATION_SCHEMA_VERSION};
pub use inner::{cost_only_solve, inner_solve, scale_to_target, InnerResult};
pub use metrics::{metrics, sparsity, Metrics, SPARSITY_TOL};
pub use problem::{Evaluation, NodeProblem};
pub use warm_start::{threshold_factor, warm_start, warm_start_decision, WarmStart};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("infeasible desired space: {0}")]
    DesiredSpace(String),
    #[error("demand target {target} is not attainable (supremum {supremum})")]
    UnattainableTarget { target: f64, supremum: f64 },
    #[error("no feasible point found")]
    NoFeasiblePoint,
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}
