//! LP-based branch-and-bound for problems whose integer variables are binary.

use super::{LpError, LpProblem, LpStatus, Simplex, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchOptions {
    pub node_limit: usize,
    pub integrality_tol: f64,
    /// Nodes whose relaxation is within this absolute margin of the incumbent
    /// are pruned.
    pub prune_tol: f64,
    /// Relative gap under which a node-limited run still counts as optimal.
    pub relative_gap: f64,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions { node_limit: 100_000, integrality_tol: 1e-6, prune_tol: 1e-9, relative_gap: 1e-7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    /// Node limit hit; the incumbent is returned with its gap.
    NodeLimit,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent values (binaries rounded); empty when no incumbent exists.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Smallest relaxation value over unexplored nodes and the incumbent.
    pub best_bound: f64,
    pub root_bound: f64,
    pub nodes: usize,
}

impl MilpSolution {
    pub fn gap(&self) -> f64 {
        if !self.objective.is_finite() {
            return f64::INFINITY;
        }
        (self.objective - self.best_bound).max(0.0) / self.objective.abs().max(1.0)
    }
}

struct Node {
    fixings: Vec<(usize, bool)>,
    bound: f64,
}

/// Minimizes `problem` with the listed variables restricted to `{0, 1}`.
///
/// Depth-first search branching on the most fractional binary; the open node
/// stack is re-sorted by bound whenever the incumbent improves. Node LPs are
/// re-solved from the previous basis with the dual simplex.
pub fn solve_binary_milp(
    problem: &LpProblem,
    binaries: &[usize],
    opts: &BranchOptions,
) -> Result<MilpSolution, LpError> {
    let mut lp = problem.clone();
    for &j in binaries {
        lp.lower[j] = lp.lower[j].max(0.0);
        lp.upper[j] = lp.upper[j].min(1.0);
    }
    let base: Vec<(f64, f64)> = binaries.iter().map(|&j| (lp.lower[j], lp.upper[j])).collect();
    let mut simplex = Simplex::new(&lp, Tolerances::default())?;

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut stack = vec![Node { fixings: Vec::new(), bound: f64::NEG_INFINITY }];
    let mut nodes = 0usize;
    let mut root_bound = f64::NEG_INFINITY;
    let inc_value = |inc: &Option<(f64, Vec<f64>)>| inc.as_ref().map_or(f64::INFINITY, |i| i.0);

    while let Some(node) = stack.pop() {
        if node.bound >= inc_value(&incumbent) - opts.prune_tol {
            continue;
        }
        if nodes >= opts.node_limit {
            stack.push(node);
            break;
        }
        nodes += 1;
        for (k, &j) in binaries.iter().enumerate() {
            simplex.set_bounds(j, base[k].0, base[k].1);
        }
        for &(j, one) in &node.fixings {
            let v = if one { 1.0 } else { 0.0 };
            simplex.set_bounds(j, v, v);
        }
        let sol = simplex.solve()?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(LpError::Domain("relaxation is unbounded".into()));
            }
            LpStatus::Optimal => {}
        }
        if node.fixings.is_empty() {
            root_bound = sol.objective;
        }
        if sol.objective >= inc_value(&incumbent) - opts.prune_tol {
            continue;
        }
        let mut branch: Option<(usize, f64)> = None;
        for &j in binaries {
            let v = sol.x[j];
            let frac = v.min(1.0 - v);
            if frac > opts.integrality_tol && branch.map_or(true, |(_, best)| frac > best + 1e-12) {
                branch = Some((j, frac));
            }
        }
        match branch {
            None => {
                let mut x = sol.x.clone();
                for &j in binaries {
                    x[j] = x[j].round();
                }
                incumbent = Some((sol.objective, x));
                stack.sort_by(|a, b| b.bound.total_cmp(&a.bound));
            }
            Some((j, _)) => {
                let up_first = sol.x[j] >= 0.5;
                for one in [!up_first, up_first] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((j, one));
                    stack.push(Node { fixings, bound: sol.objective });
                }
            }
        }
    }

    let open_bound = stack
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    Ok(match incumbent {
        Some((objective, x)) => {
            let best_bound = open_bound.min(objective);
            let mut out = MilpSolution {
                status: MilpStatus::Optimal,
                x,
                objective,
                best_bound,
                root_bound,
                nodes,
            };
            if !stack.is_empty() && out.gap() > opts.relative_gap {
                out.status = MilpStatus::NodeLimit;
            }
            out
        }
        None if stack.is_empty() => MilpSolution {
            status: MilpStatus::Infeasible,
            x: Vec::new(),
            objective: f64::INFINITY,
            best_bound: f64::INFINITY,
            root_bound,
            nodes,
        },
        None => MilpSolution {
            status: MilpStatus::NodeLimit,
            x: Vec::new(),
            objective: f64::INFINITY,
            best_bound: open_bound,
            root_bound,
            nodes,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::RowSense;
    use approx::assert_abs_diff_eq;

    #[test]
    fn small_knapsack() {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11
        let mut p = LpProblem::new();
        let a = p.add_var(-5.0, 0.0, 1.0);
        let b = p.add_var(-4.0, 0.0, 1.0);
        let c = p.add_var(-3.0, 0.0, 1.0);
        p.add_row(&[(a, 2.0), (b, 3.0), (c, 1.0)], RowSense::Le, 5.0);
        p.add_row(&[(a, 4.0), (b, 1.0), (c, 2.0)], RowSense::Le, 11.0);
        let s = solve_binary_milp(&p, &[a, b, c], &BranchOptions::default()).unwrap();
        assert_eq!(s.status, MilpStatus::Optimal);
        assert_abs_diff_eq!(s.objective, -9.0, epsilon = 1e-9);
        assert!(s.root_bound <= s.objective + 1e-9);
    }

    #[test]
    fn brute_force_agreement() {
        // min Σ c_j x_j over binary x with Σ x = 3 and a pairwise conflict row.
        let costs = [3.0, -1.0, 2.5, -4.0, 0.5, -2.0, 1.5];
        let mut p = LpProblem::new();
        let xs: Vec<usize> = costs.iter().map(|&c| p.add_var(c, 0.0, 1.0)).collect();
        p.add_row(&xs.iter().map(|&j| (j, 1.0)).collect::<Vec<_>>(), RowSense::Eq, 3.0);
        p.add_row(&[(xs[3], 1.0), (xs[5], 1.0)], RowSense::Le, 1.5);
        p.add_row(&[(xs[1], 2.0), (xs[4], 1.0), (xs[6], -0.5)], RowSense::Ge, 0.7);
        let s = solve_binary_milp(&p, &xs, &BranchOptions::default()).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << 7) {
            if mask.count_ones() != 3 || (mask >> 3 & 1) + (mask >> 5 & 1) > 1 {
                continue;
            }
            let bit = |k: usize| (mask >> k & 1) as f64;
            if 2.0 * bit(1) + bit(4) - 0.5 * bit(6) < 0.7 {
                continue;
            }
            best = best.min((0..7).map(|k| costs[k] * bit(k)).sum());
        }
        assert_abs_diff_eq!(s.objective, best, epsilon = 1e-9);
    }

    #[test]
    fn infeasible_binary_program() {
        let mut p = LpProblem::new();
        let a = p.add_var(1.0, 0.0, 1.0);
        let b = p.add_var(1.0, 0.0, 1.0);
        p.add_row(&[(a, 1.0), (b, 1.0)], RowSense::Eq, 1.0);
        p.add_row(&[(a, 1.0), (b, -1.0)], RowSense::Eq, 0.0);
        let s = solve_binary_milp(&p, &[a, b], &BranchOptions::default()).unwrap();
        assert_eq!(s.status, MilpStatus::Infeasible);
    }

    #[test]
    fn node_limit_reports_gap() {
        let costs = [-3.0, -2.9, -2.8, -2.7, -2.6, -2.5];
        let mut p = LpProblem::new();
        let xs: Vec<usize> = costs.iter().map(|&c| p.add_var(c, 0.0, 1.0)).collect();
        let w = [2.1, 2.2, 2.3, 1.9, 2.05, 2.15];
        p.add_row(&xs.iter().zip(w).map(|(&j, w)| (j, w)).collect::<Vec<_>>(), RowSense::Le, 5.0);
        let opts = BranchOptions { node_limit: 2, ..Default::default() };
        let s = solve_binary_milp(&p, &xs, &opts).unwrap();
        assert!(s.nodes <= 2);
        assert!(s.best_bound <= s.objective);
    }
}
