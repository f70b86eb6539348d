//! Outer search over decisions.

use std::cmp::Ordering;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::bound::decision_bound;
use super::inner::{cost_only_solve, inner_solve, scale_to_target};
use super::problem::NodeProblem;
use super::warm_start::{warm_start, WarmStart};
use super::{DesiredSpace, ExplainError, SolverConfig};
use crate::choice::{all_choice_probabilities, captured_demand, ChoiceDistribution, FacilityDecision, TransformedCovariates};
use crate::factual::FactualSolution;
use crate::instance::PrecomputedUtilities;
use crate::transport::{wasserstein_all, wasserstein_sum, GroundCost, TransportPlan};

pub const EXPLANATION_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    /// `Σ_d |φ_d − φ⁰_d|`.
    pub j_cost: f64,
    /// Sum of per-customer squared Wasserstein distances.
    pub w_cost: f64,
    /// `j_cost + λ · w_cost`.
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub warm_start_s: f64,
    pub bound_s: f64,
    /// Outer search only; excludes the warm start and the bound.
    pub solve_s: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub decisions: usize,
    pub pruned: usize,
    pub solved: usize,
    pub infeasible: usize,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub schema_version: u32,
    pub z: FacilityDecision,
    pub phi: TransformedCovariates,
    /// Counterfactual covariates `x_d = ln φ_d`.
    pub x: Vec<f64>,
    pub objective: ObjectiveParts,
    pub lambda: f64,
    pub alpha: f64,
    pub q_factual: f64,
    pub q_new: f64,
    /// `λ` times the global model-free bound.
    pub lower_bound: f64,
    pub gap: f64,
    pub timed_out: bool,
    /// Counterfactual choice distributions, one per customer.
    pub distributions: Vec<ChoiceDistribution>,
    pub plans: Vec<TransportPlan>,
    pub warm_start: WarmStart,
    pub stats: SearchStats,
    pub timings: Timings,
}

impl Explanation {
    pub fn open_indices(&self) -> Vec<usize> {
        self.z.open_indices()
    }
}

fn lex_cmp(a: &FacilityDecision, b: &FacilityDecision) -> Ordering {
    a.open_indices().cmp(&b.open_indices())
}

struct Incumbent {
    z: FacilityDecision,
    phi: Vec<f64>,
    total: f64,
}

impl Incumbent {
    /// Whether `(total, z)` beats the incumbent: lower objective, or equal
    /// objective and a lexicographically smaller open set.
    fn beaten_by(&self, total: f64, z: &FacilityDecision) -> bool {
        total < self.total || (total == self.total && lex_cmp(z, &self.z) == Ordering::Less)
    }
}

fn node_seed(base: u64, index: usize) -> u64 {
    base ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Starting point for a decision: the facilities new relative to the factual
/// decision (all open ones if none are new) scaled up from `φ⁰` to the
/// demand boundary.
fn scaled_seed(prob: &NodeProblem, z0: &FacilityDecision) -> Option<Vec<f64>> {
    let mut fresh: Vec<usize> = prob.open.iter().copied().filter(|&d| !z0.is_open(d)).collect();
    if fresh.is_empty() {
        fresh = prob.open.clone();
    }
    let phi0 = &prob.pre.phi0;
    if prob.demand(phi0) >= prob.target {
        return Some(phi0.clone());
    }
    scale_to_target(prob, phi0, &fresh)
}

/// Computes a relative counterfactual explanation.
///
/// Every decision of the desired space is a node. Linearizing the concave
/// demand at any point yields a certified bound on `Σ|φ − φ⁰|`; adding `λ`
/// times the node's model-free transport bound bounds the node's objective.
/// Nodes are visited by increasing bound (taken at a cheap seed) and pruned
/// against the incumbent, which starts at the warm start. A surviving node is
/// solved cost-only first (convex), which tightens its bound before the full
/// solve.
pub fn explain(
    pre: &PrecomputedUtilities,
    factual: &FactualSolution,
    desired: &DesiredSpace,
    cfg: &SolverConfig,
) -> Result<Explanation, ExplainError> {
    cfg.validate()?;
    desired.validate(pre.n_candidates(), cfg.budget)?;
    let target = cfg.alpha * factual.q_factual;
    let supremum: f64 = pre.weights.iter().sum();
    if target >= supremum {
        return Err(ExplainError::UnattainableTarget { target, supremum });
    }
    let ground = GroundCost::from_precomputed(pre);
    let transport_weights = cfg.transport_weights(&pre.weights);
    let make_node = |z: FacilityDecision, lambda: f64| {
        NodeProblem::new(pre, factual, &ground, z, target, lambda, cfg.epsilon, cfg.phi_min, transport_weights)
    };

    let t = Instant::now();
    let ws = warm_start(pre, factual, desired, cfg, &ground)?;
    let warm_start_s = t.elapsed().as_secs_f64();

    let decisions = desired.decisions(pre.n_candidates(), cfg.budget);
    let t = Instant::now();
    let mut transport_bounds = vec![0.0; decisions.len()];
    if cfg.lambda > 0.0 {
        for (b, z) in transport_bounds.iter_mut().zip(&decisions) {
            *b = decision_bound(pre, factual, cfg, z)?;
        }
    }
    let bound_s = t.elapsed().as_secs_f64();
    let global_bound = transport_bounds.iter().copied().fold(f64::INFINITY, f64::min);

    let t_solve = Instant::now();
    let deadline = cfg.time_limit_s.map(|s| t_solve + Duration::from_secs_f64(s.max(0.0)));
    let timed_out_now = || deadline.is_some_and(|d| Instant::now() >= d);
    let mut stats = SearchStats { decisions: decisions.len(), ..SearchStats::default() };
    let mut timed_out = false;

    // Cheap certified bounds from each node's seed fix the visiting order.
    struct Node {
        index: usize,
        lower: f64,
        seed: Option<Vec<f64>>,
    }
    let mut nodes: Vec<Node> = Vec::with_capacity(decisions.len());
    for (index, z) in decisions.iter().enumerate() {
        let prob = make_node(z.clone(), 0.0);
        let seed = scaled_seed(&prob, &factual.z0);
        let at = seed.as_deref().unwrap_or(&pre.phi0);
        let lower = prob.linearized_cost_bound(at) + cfg.lambda * transport_bounds[index];
        nodes.push(Node { index, lower, seed });
    }
    nodes.sort_by(|a, b| a.lower.total_cmp(&b.lower).then(a.index.cmp(&b.index)));

    let mut inc = Incumbent { z: ws.z.clone(), phi: ws.phi.clone(), total: ws.total };
    for node in &nodes {
        let z = &decisions[node.index];
        if !inc.beaten_by(node.lower, z) {
            stats.pruned += 1;
            continue;
        }
        if timed_out_now() {
            timed_out = true;
            break;
        }
        // The cost-only optimum tightens the bound and starts the full solve.
        let cost_prob = make_node(z.clone(), 0.0);
        let start = node.seed.clone().unwrap_or_else(|| pre.phi0.clone());
        let cost_only = cost_only_solve(&cost_prob, cfg, &start, deadline)?;
        let lower = match &cost_only {
            Some(r) => {
                stats.inner_iterations += r.iterations;
                let refined = cost_prob.linearized_cost_bound(&r.phi) + cfg.lambda * transport_bounds[node.index];
                node.lower.max(refined)
            }
            None => node.lower,
        };
        if !inc.beaten_by(lower, z) {
            stats.pruned += 1;
            continue;
        }
        let candidate = if cfg.lambda == 0.0 {
            cost_only.map(|r| (r.phi, r.eval.total))
        } else {
            let prob = make_node(z.clone(), cfg.lambda);
            let mut starts = Vec::new();
            if let Some(r) = cost_only {
                starts.push(r.phi);
            }
            if let Some(s) = &node.seed {
                starts.push(s.clone());
            }
            let seed = node_seed(cfg.seed, node.index);
            match inner_solve(&prob, cfg, &starts, seed, deadline)? {
                Some(r) => {
                    stats.inner_iterations += r.iterations;
                    Some((r.phi, r.eval.total))
                }
                None => None,
            }
        };
        stats.solved += 1;
        match candidate {
            Some((phi, total)) => {
                if inc.beaten_by(total, z) {
                    inc = Incumbent { z: z.clone(), phi, total };
                }
            }
            None => stats.infeasible += 1,
        }
    }
    let solve_s = t_solve.elapsed().as_secs_f64();

    // Re-verify the reported point from scratch.
    let Incumbent { z, phi, .. } = inc;
    let mut phi_full = pre.phi0.clone();
    for d in z.open_indices() {
        phi_full[d] = phi[d];
    }
    let check = make_node(z.clone(), cfg.lambda);
    let q_new = captured_demand(&phi_full, &z, pre, &pre.weights);
    if q_new < target || !check.is_feasible(&phi_full) {
        return Err(ExplainError::Verification(format!(
            "reported point captures {q_new} < target {target} or violates support"
        )));
    }
    let distributions = all_choice_probabilities(&phi_full, &z, pre);
    let results = wasserstein_all(&factual.p0, &distributions, &ground)?;
    let w_cost = wasserstein_sum(&results, transport_weights);
    let j_cost = check.j_cost(&phi_full);
    let total = j_cost + cfg.lambda * w_cost;
    let lower_bound = if cfg.lambda > 0.0 { cfg.lambda * global_bound } else { 0.0 };
    let gap = ((total - lower_bound) / total.max(1e-12)).max(0.0);
    let phi = TransformedCovariates(phi_full);
    let x = phi.recover()?;
    Ok(Explanation {
        schema_version: EXPLANATION_SCHEMA_VERSION,
        z,
        phi,
        x,
        objective: ObjectiveParts { j_cost, w_cost, total },
        lambda: cfg.lambda,
        alpha: cfg.alpha,
        q_factual: factual.q_factual,
        q_new,
        lower_bound,
        gap,
        timed_out,
        distributions,
        plans: results.into_iter().map(|r| r.plan).collect(),
        warm_start: ws,
        stats,
        timings: Timings { warm_start_s, bound_s, solve_s },
    })
}
