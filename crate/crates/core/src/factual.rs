//! The factual facility location problem: choose `r` candidates maximizing
//! captured demand at the factual covariates.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::{all_choice_probabilities, captured_demand, ChoiceDistribution, FacilityDecision};
use crate::instance::PrecomputedUtilities;
use crate::lp::{solve_binary_milp, BranchOptions, LpError, LpProblem, MilpStatus, RowSense};

/// Default cap on the number of subsets visited by [`solve_factual_enumerate`].
pub const ENUMERATION_CAP: u128 = 2_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum FactualError {
    #[error("budget r = {r} outside 1..={n_candidates}")]
    Budget { r: usize, n_candidates: usize },
    #[error("{subsets} subsets exceed the enumeration cap {cap}; use the Haase branch-and-bound")]
    CapExceeded { subsets: u128, cap: u128 },
    #[error("Haase model has no feasible decision")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactualMethod {
    Enumeration,
    HaaseBnb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactualSolution {
    pub z0: FacilityDecision,
    pub p0: Vec<ChoiceDistribution>,
    pub q_factual: f64,
    pub method: FactualMethod,
    /// Root relaxation value (maximization), branch-and-bound only.
    pub root_bound: Option<f64>,
    /// Relative optimality gap; nonzero only if the node limit was hit.
    pub gap: f64,
    pub nodes: usize,
}

impl FactualSolution {
    /// Builds the solution record for a given decision at `φ⁰`.
    pub fn from_decision(pre: &PrecomputedUtilities, z0: FacilityDecision, method: FactualMethod) -> Self {
        let p0 = all_choice_probabilities(&pre.phi0, &z0, pre);
        let q_factual = captured_demand(&pre.phi0, &z0, pre, &pre.weights);
        FactualSolution { z0, p0, q_factual, method, root_bound: None, gap: 0.0, nodes: 0 }
    }
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn check_budget(pre: &PrecomputedUtilities, r: usize) -> Result<(), FactualError> {
    let n_candidates = pre.n_candidates();
    if r == 0 || r > n_candidates {
        return Err(FactualError::Budget { r, n_candidates });
    }
    Ok(())
}

/// Exhaustive search over all `r`-subsets in lexicographic order; the first
/// maximizer wins ties.
pub fn solve_factual_enumerate(pre: &PrecomputedUtilities, r: usize) -> Result<FactualSolution, FactualError> {
    solve_factual_enumerate_capped(pre, r, ENUMERATION_CAP)
}

pub fn solve_factual_enumerate_capped(
    pre: &PrecomputedUtilities,
    r: usize,
    cap: u128,
) -> Result<FactualSolution, FactualError> {
    check_budget(pre, r)?;
    let n = pre.n_candidates();
    let subsets = binomial(n, r);
    if subsets > cap {
        return Err(FactualError::CapExceeded { subsets, cap });
    }
    let mut best: Option<(f64, FacilityDecision)> = None;
    for open in (0..n).combinations(r) {
        let z = FacilityDecision::from_open_set(n, &open);
        let q = captured_demand(&pre.phi0, &z, pre, &pre.weights);
        if best.as_ref().map_or(true, |(b, _)| q > *b) {
            best = Some((q, z));
        }
    }
    let (_, z0) = best.expect("at least one subset");
    let mut sol = FactualSolution::from_decision(pre, z0, FactualMethod::Enumeration);
    sol.nodes = subsets as usize;
    Ok(sol)
}

/// Column layout of the linear reformulation built by [`haase_model`].
#[derive(Clone, Debug)]
pub struct HaaseModel {
    pub problem: LpProblem,
    /// `z[d]`.
    pub z: Vec<usize>,
    /// `w[n][d]`, the probability that customer `n` picks candidate `d`.
    pub w: Vec<Vec<usize>>,
    /// `w_hat[n]`, the probability mass on competitors.
    pub w_hat: Vec<usize>,
}

/// Linear reformulation of the factual problem with proportional
/// substitution, written as a minimization of `−Σ q_n Σ_d w_nd`.
///
/// With `a_nd = φ⁰_d â_nd`:
/// * `ŵ_n + Σ_d w_nd ≤ 1`
/// * `(a_nd + b_n) w_nd − a_nd z_d ≤ 0`
/// * `w_nd − (a_nd / b_n) ŵ_n ≤ 0`
/// * `Σ_d z_d = r`
///
/// At any integral `z` the optimal `w_nd` equals the logit probability.
pub fn haase_model(pre: &PrecomputedUtilities, r: usize) -> HaaseModel {
    let n_cust = pre.n_customers();
    let n_cand = pre.n_candidates();
    let mut p = LpProblem::new();
    let z: Vec<usize> = (0..n_cand).map(|_| p.add_var(0.0, 0.0, 1.0)).collect();
    let mut w = Vec::with_capacity(n_cust);
    let mut w_hat = Vec::with_capacity(n_cust);
    for n in 0..n_cust {
        w.push((0..n_cand).map(|_| p.add_var(-pre.weights[n], 0.0, 1.0)).collect::<Vec<_>>());
        w_hat.push(p.add_var(0.0, 0.0, 1.0));
    }
    for n in 0..n_cust {
        let b = pre.b_sum[n];
        let mut row: Vec<(usize, f64)> = vec![(w_hat[n], 1.0)];
        row.extend(w[n].iter().map(|&j| (j, 1.0)));
        p.add_row(&row, RowSense::Le, 1.0);
        for d in 0..n_cand {
            let a = pre.phi0[d] * pre.a_hat[n][d];
            p.add_row(&[(w[n][d], a + b), (z[d], -a)], RowSense::Le, 0.0);
            p.add_row(&[(w[n][d], 1.0), (w_hat[n], -a / b)], RowSense::Le, 0.0);
        }
    }
    p.add_row(&z.iter().map(|&j| (j, 1.0)).collect::<Vec<_>>(), RowSense::Eq, r as f64);
    HaaseModel { problem: p, z, w, w_hat }
}

/// Branch-and-bound on the linear reformulation.
pub fn solve_factual_haase(
    pre: &PrecomputedUtilities,
    r: usize,
    opts: &BranchOptions,
) -> Result<FactualSolution, FactualError> {
    check_budget(pre, r)?;
    let model = haase_model(pre, r);
    let sol = solve_binary_milp(&model.problem, &model.z, opts)?;
    if sol.x.is_empty() {
        return Err(FactualError::Infeasible);
    }
    let open: Vec<usize> = (0..pre.n_candidates()).filter(|&d| sol.x[model.z[d]] > 0.5).collect();
    let z0 = FacilityDecision::from_open_set(pre.n_candidates(), &open);
    let mut out = FactualSolution::from_decision(pre, z0, FactualMethod::HaaseBnb);
    out.root_bound = Some(-sol.root_bound);
    out.gap = if sol.status == MilpStatus::Optimal { 0.0 } else { sol.gap() };
    out.nodes = sol.nodes;
    Ok(out)
}
