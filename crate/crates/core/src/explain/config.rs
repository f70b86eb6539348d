use itertools::Itertools;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::choice::FacilityDecision;

/// User constraints on the counterfactual decision.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesiredSpace {
    pub forced_open: Vec<usize>,
    pub forced_closed: Vec<usize>,
}

impl DesiredSpace {
    pub fn new(forced_open: Vec<usize>, forced_closed: Vec<usize>) -> Self {
        let mut s = DesiredSpace { forced_open, forced_closed };
        s.forced_open.sort_unstable();
        s.forced_open.dedup();
        s.forced_closed.sort_unstable();
        s.forced_closed.dedup();
        s
    }

    pub fn unconstrained() -> Self {
        Self::default()
    }

    pub fn validate(&self, n_candidates: usize, r: usize) -> Result<(), ExplainError> {
        let bad = |msg: String| Err(ExplainError::DesiredSpace(msg));
        if let Some(&d) = self.forced_open.iter().chain(&self.forced_closed).find(|&&d| d >= n_candidates) {
            return bad(format!("candidate {d} does not exist (|D| = {n_candidates})"));
        }
        if let Some(d) = self.forced_open.iter().find(|d| self.forced_closed.contains(d)) {
            return bad(format!("candidate {d} is both forced open and forced closed"));
        }
        if self.forced_open.len() > r {
            return bad(format!("{} facilities forced open but the budget is {r}", self.forced_open.len()));
        }
        if n_candidates < self.forced_closed.len() + r {
            return bad(format!(
                "{} facilities forced closed leaves fewer than r = {r} of {n_candidates} candidates",
                self.forced_closed.len()
            ));
        }
        Ok(())
    }

    pub fn contains(&self, z: &FacilityDecision, r: usize) -> bool {
        z.n_open() == r
            && self.forced_open.iter().all(|&d| z.is_open(d))
            && self.forced_closed.iter().all(|&d| !z.is_open(d))
    }

    /// All decisions with `r` open facilities in this space, in lexicographic
    /// order of their open sets.
    pub fn decisions(&self, n_candidates: usize, r: usize) -> Vec<FacilityDecision> {
        let free: Vec<usize> = (0..n_candidates)
            .filter(|d| !self.forced_open.contains(d) && !self.forced_closed.contains(d))
            .collect();
        let k = r.saturating_sub(self.forced_open.len());
        let mut out: Vec<FacilityDecision> = free
            .into_iter()
            .combinations(k)
            .map(|extra| {
                let open: Vec<usize> = extra.into_iter().chain(self.forced_open.iter().copied()).collect();
                FacilityDecision::from_open_set(n_candidates, &open)
            })
            .collect();
        out.sort_by_key(|z| z.open_indices());
        out
    }
}

/// How the model-free bound treats the ε-support constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    /// `Σ_n w_nd ≥ ε` for every open `d`; a plain LP per decision.
    #[default]
    Aggregated,
    /// Per-customer indicators `z̄_nd`, solved by branch-and-bound.
    PerCustomer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Demand factor: the counterfactual must capture `alpha · Q^factual`.
    pub alpha: f64,
    /// Weight of the Wasserstein regularizer.
    pub lambda: f64,
    /// Number of facilities to open.
    pub budget: usize,
    /// Minimum probability of every customer for every open facility.
    pub epsilon: f64,
    pub phi_min: f64,
    pub multistarts: usize,
    pub max_iterations: usize,
    /// Iterations without improvement before a subgradient run stops.
    pub stall_iterations: usize,
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub penalty_escalations: usize,
    pub tolerance: f64,
    /// Weight per-customer transport costs by `q_n`.
    pub weighted_transport: bool,
    pub support_mode: SupportMode,
    /// Wall-clock limit for the outer search, in seconds.
    pub time_limit_s: Option<f64>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 1.0,
            lambda: 0.1,
            budget: 1,
            epsilon: 1e-4,
            phi_min: 1e-6,
            multistarts: 5,
            max_iterations: 2000,
            stall_iterations: 200,
            penalty_initial: 10.0,
            penalty_growth: 10.0,
            penalty_escalations: 4,
            tolerance: 1e-7,
            weighted_transport: false,
            support_mode: SupportMode::Aggregated,
            time_limit_s: None,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn new(alpha: f64, lambda: f64, budget: usize) -> Self {
        SolverConfig { alpha, lambda, budget, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ExplainError> {
        let bad = |msg: &str| Err(ExplainError::Config(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be nonnegative");
        }
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.phi_min > 0.0 && self.phi_min.is_finite()) {
            return bad("phi_min must be positive");
        }
        if self.multistarts == 0 {
            return bad("at least one start is required");
        }
        if self.penalty_initial <= 0.0 || self.penalty_growth <= 1.0 {
            return bad("penalty must start positive and grow");
        }
        Ok(())
    }

    /// Transport weights `ω_n`: customer weights when weighted, else none.
    pub fn transport_weights<'a>(&self, weights: &'a [f64]) -> Option<&'a [f64]> {
        self.weighted_transport.then_some(weights)
    }
}
