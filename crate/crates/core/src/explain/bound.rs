//! Model-free lower bound on the regularizer: the least transport cost from
//! the factual distributions to *any* distributions meeting the demand and
//! support requirements, ignoring the logit structure.
//!
//! For a fixed decision the problem is an LP over per-customer plans. Only
//! sources in the factual support carry mass, and mass sent to competitors
//! can always go to the competitor nearest to its source (competitor shares
//! are otherwise unconstrained), so targets are the open candidates plus
//! that nearest competitor.

use serde::{Deserialize, Serialize};

use super::{DesiredSpace, ExplainError, SolverConfig, SupportMode};
use crate::choice::FacilityDecision;
use crate::factual::FactualSolution;
use crate::instance::PrecomputedUtilities;
use crate::lp::{solve_binary_milp, solve_lp, BranchOptions, LpProblem, LpStatus, RowSense};

/// Node limit for the per-customer support branch-and-bound; on hitting it
/// the best open-node bound is used, which is still a valid lower bound.
const SUPPORT_NODE_LIMIT: usize = 2_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundScope {
    Global,
    PerDecision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionBound {
    pub open: Vec<usize>,
    /// `+∞` when no distribution meets the requirements.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundResult {
    pub value: f64,
    pub per_z: Vec<DecisionBound>,
    pub mode: BoundScope,
    pub support: SupportMode,
}

/// The LP (or MILP) of the bound at one decision, with its binary columns.
pub struct BoundModel {
    pub problem: LpProblem,
    pub binaries: Vec<usize>,
}

fn nearest_competitor(pre: &PrecomputedUtilities, c: usize) -> usize {
    let nd = pre.n_candidates();
    (nd..pre.n_locations())
        .min_by(|&a, &b| pre.ground_cost[c][a].total_cmp(&pre.ground_cost[c][b]).then(a.cmp(&b)))
        .expect("at least one competitor")
}

pub fn bound_model(
    pre: &PrecomputedUtilities,
    factual: &FactualSolution,
    cfg: &SolverConfig,
    z: &FacilityDecision,
) -> BoundModel {
    let open = z.open_indices();
    let target = cfg.alpha * factual.q_factual;
    let mut p = LpProblem::new();
    let mut demand_row: Vec<(usize, f64)> = Vec::new();
    // support[k][n]: columns carrying customer n's mass into open[k]
    let mut support: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); pre.n_customers()]; open.len()];
    for n in 0..pre.n_customers() {
        let omega = if cfg.weighted_transport { pre.weights[n] } else { 1.0 };
        for (c, &mass) in factual.p0[n].0.iter().enumerate() {
            if mass <= 0.0 {
                continue;
            }
            let mut row = Vec::with_capacity(open.len() + 1);
            for (k, &d) in open.iter().enumerate() {
                let j = p.add_var(omega * pre.ground_cost[c][d], 0.0, f64::INFINITY);
                row.push((j, 1.0));
                demand_row.push((j, pre.weights[n]));
                support[k][n].push(j);
            }
            let e = nearest_competitor(pre, c);
            let j = p.add_var(omega * pre.ground_cost[c][e], 0.0, f64::INFINITY);
            row.push((j, 1.0));
            p.add_row(&row, RowSense::Eq, mass);
        }
    }
    p.add_row(&demand_row, RowSense::Ge, target);
    let mut binaries = Vec::new();
    match cfg.support_mode {
        SupportMode::Aggregated => {
            for cols in &support {
                let row: Vec<(usize, f64)> = cols.iter().flatten().map(|&j| (j, 1.0)).collect();
                p.add_row(&row, RowSense::Ge, cfg.epsilon);
            }
        }
        SupportMode::PerCustomer => {
            for cols in &support {
                let mut any = Vec::new();
                for per_n in cols {
                    let zbar = p.add_var(0.0, 0.0, 1.0);
                    binaries.push(zbar);
                    any.push((zbar, 1.0));
                    let mut upper: Vec<(usize, f64)> = per_n.iter().map(|&j| (j, 1.0)).collect();
                    let mut lower = upper.clone();
                    upper.push((zbar, -1.0));
                    lower.push((zbar, -cfg.epsilon));
                    p.add_row(&upper, RowSense::Le, 0.0);
                    p.add_row(&lower, RowSense::Ge, 0.0);
                }
                p.add_row(&any, RowSense::Ge, 1.0);
            }
        }
    }
    BoundModel { problem: p, binaries }
}

/// True when the factual distributions themselves satisfy the bound's
/// constraints at `z`, making the bound zero.
fn factual_is_feasible(pre: &PrecomputedUtilities, factual: &FactualSolution, cfg: &SolverConfig, z: &FacilityDecision) -> bool {
    if *z != factual.z0 || cfg.alpha > 1.0 {
        return false;
    }
    let open = z.open_indices();
    match cfg.support_mode {
        SupportMode::Aggregated => open
            .iter()
            .all(|&d| factual.p0.iter().map(|p| p.0[d]).sum::<f64>() >= cfg.epsilon),
        SupportMode::PerCustomer => open
            .iter()
            .all(|&d| (0..pre.n_customers()).all(|n| factual.p0[n].0[d] >= cfg.epsilon)),
    }
}

/// Bound value at one decision; `+∞` if infeasible.
pub fn decision_bound(
    pre: &PrecomputedUtilities,
    factual: &FactualSolution,
    cfg: &SolverConfig,
    z: &FacilityDecision,
) -> Result<f64, ExplainError> {
    if factual_is_feasible(pre, factual, cfg, z) {
        return Ok(0.0);
    }
    let model = bound_model(pre, factual, cfg, z);
    let value = if model.binaries.is_empty() {
        let sol = solve_lp(&model.problem)?;
        match sol.status {
            LpStatus::Optimal => sol.objective,
            _ => f64::INFINITY,
        }
    } else {
        let opts = BranchOptions { node_limit: SUPPORT_NODE_LIMIT, ..BranchOptions::default() };
        let sol = solve_binary_milp(&model.problem, &model.binaries, &opts)?;
        sol.best_bound
    };
    Ok(value.max(0.0))
}

/// Bound for one decision, or the minimum over every decision of the desired
/// space when `z` is `None`.
pub fn model_free_bound(
    pre: &PrecomputedUtilities,
    factual: &FactualSolution,
    desired: &DesiredSpace,
    cfg: &SolverConfig,
    z: Option<&FacilityDecision>,
) -> Result<LowerBoundResult, ExplainError> {
    cfg.validate()?;
    desired.validate(pre.n_candidates(), cfg.budget)?;
    let (decisions, mode) = match z {
        Some(z) => (vec![z.clone()], BoundScope::PerDecision),
        None => (desired.decisions(pre.n_candidates(), cfg.budget), BoundScope::Global),
    };
    let mut per_z = Vec::with_capacity(decisions.len());
    for z in &decisions {
        per_z.push(DecisionBound { open: z.open_indices(), value: decision_bound(pre, factual, cfg, z)? });
    }
    let value = per_z.iter().map(|b| b.value).fold(f64::INFINITY, f64::min);
    Ok(LowerBoundResult { value, per_z, mode, support: cfg.support_mode })
}
