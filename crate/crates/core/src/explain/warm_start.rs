//! Greedy feasible starting point: open the forced facilities plus the best
//! factual ones, then scale the forced facilities' attractiveness until the
//! demand target is met.

use serde::{Deserialize, Serialize};

use super::problem::NodeProblem;
use super::{DesiredSpace, ExplainError, SolverConfig};
use crate::choice::{captured_demand_by_facility, FacilityDecision};
use crate::factual::FactualSolution;
use crate::instance::PrecomputedUtilities;
use crate::transport::GroundCost;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub z: FacilityDecision,
    pub phi: Vec<f64>,
    /// Common factor applied to `φ⁰` on the scaled facilities.
    pub c: f64,
    pub j_cost: f64,
    pub w_cost: f64,
    pub total: f64,
}

/// Decision of the greedy procedure: forced facilities, then the remaining
/// allowed ones by decreasing factual captured demand (index order on ties).
pub fn warm_start_decision(
    pre: &PrecomputedUtilities,
    factual: &FactualSolution,
    desired: &DesiredSpace,
    r: usize,
) -> FacilityDecision {
    let n = pre.n_candidates();
    let by_facility = captured_demand_by_facility(&pre.phi0, &factual.z0, pre, &pre.weights);
    let mut rest: Vec<usize> = (0..n)
        .filter(|d| !desired.forced_open.contains(d) && !desired.forced_closed.contains(d))
        .collect();
    rest.sort_by(|&a, &b| by_facility[b].total_cmp(&by_facility[a]).then(a.cmp(&b)));
    let mut open = desired.forced_open.clone();
    open.extend(rest.into_iter().take(r.saturating_sub(open.len())));
    FacilityDecision::from_open_set(n, &open)
}

/// Smallest `c ≥ 1` (to relative precision 1e-12) with `Q ≥ target` when the
/// facilities in `scaled` have `φ_d = c·φ⁰_d`, by doubling then bisection.
pub fn threshold_factor(prob: &NodeProblem, scaled: &[usize]) -> Option<f64> {
    let phi_at = |c: f64| {
        let mut phi = prob.pre.phi0.clone();
        for &d in scaled {
            phi[d] = c * prob.pre.phi0[d];
        }
        phi
    };
    let ok = |c: f64| prob.demand(&phi_at(c)) >= prob.target;
    if ok(1.0) {
        return Some(1.0);
    }
    let (mut lo, mut hi) = (1.0, 2.0);
    while !ok(hi) {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

pub fn warm_start(
    pre: &PrecomputedUtilities,
    factual: &FactualSolution,
    desired: &DesiredSpace,
    cfg: &SolverConfig,
    ground: &GroundCost,
) -> Result<WarmStart, ExplainError> {
    let z = warm_start_decision(pre, factual, desired, cfg.budget);
    let target = cfg.alpha * factual.q_factual;
    let prob = NodeProblem::new(
        pre,
        factual,
        ground,
        z.clone(),
        target,
        cfg.lambda,
        cfg.epsilon,
        cfg.phi_min,
        cfg.transport_weights(&pre.weights),
    );
    let scaled = if desired.forced_open.is_empty() { z.open_indices() } else { desired.forced_open.clone() };
    let c = threshold_factor(&prob, &scaled).ok_or(ExplainError::NoFeasiblePoint)?;
    let mut phi = pre.phi0.clone();
    for &d in &scaled {
        phi[d] = c * pre.phi0[d];
    }
    prob.fix_support(&mut phi);
    if !prob.is_feasible(&phi) {
        phi = prob.repair(&phi)?.ok_or(ExplainError::NoFeasiblePoint)?;
    }
    // the regularizer is always reported, even when it carries no weight
    let j_cost = prob.j_cost(&phi);
    let w_cost = prob.w_cost(&phi)?;
    let total = j_cost + cfg.lambda * w_cost;
    Ok(WarmStart { z, phi, c, j_cost, w_cost, total })
}
