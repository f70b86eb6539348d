//! Small self-contained linear programming toolkit.
//!
//! * [`solve_lp`]: bounded-variable revised simplex (dense explicit basis
//!   inverse, Dantzig pricing with a Bland fallback on degenerate stalls).
//! * [`solve_transportation`]: transportation simplex on the bipartite basis
//!   tree, returning an optimal plan and dual potentials.
//! * [`solve_binary_milp`]: depth-first LP branch-and-bound over binary
//!   variables, warm-started with the dual simplex.
//!
//! Sizes targeted here are "desk scale": a few thousand columns and rows.

mod milp;
mod simplex;
mod transportation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use milp::{solve_binary_milp, BranchOptions, MilpSolution, MilpStatus};
pub use simplex::Simplex;
pub use transportation::{solve_transportation, TransportSolution};

/// Numerical tolerances shared by the solvers in this module.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Bound violation accepted as feasible.
    pub primal: f64,
    /// Reduced-cost threshold for optimality.
    pub dual: f64,
    /// Smallest pivot magnitude accepted in ratio tests.
    pub pivot: f64,
    /// Accepted imbalance between transport marginals before rejecting.
    pub marginal_balance: f64,
    /// Pivots between refactorizations of the basis inverse.
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degenerate_streak: usize,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            primal: 1e-9,
            dual: 1e-9,
            pivot: 1e-11,
            marginal_balance: 1e-10,
            refactor_every: 100,
            degenerate_streak: 50,
            max_iterations: 200_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerically singular basis after {iterations} iterations (pivot {pivot:e})")]
    SingularBasis { iterations: usize, pivot: f64 },
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// `min cᵀx` subject to row constraints and `lower ≤ x ≤ upper`.
///
/// Lower bounds may be `-inf` only when the upper bound is finite; free
/// variables are not supported.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    /// `(row, column, value)` triplets.
    pub entries: Vec<(usize, usize, f64)>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coefs: &[(usize, f64)], sense: RowSense, rhs: f64) -> usize {
        let row = self.rhs.len();
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.entries.extend(coefs.iter().filter(|(_, v)| *v != 0.0).map(|&(j, v)| (row, j, v)));
        row
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match cost length".into()));
        }
        if self.senses.len() != self.rhs.len() {
            return Err(LpError::Malformed("row senses do not match rhs length".into()));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{l}, {u}]")));
            }
            if l == f64::NEG_INFINITY && u == f64::INFINITY {
                return Err(LpError::Malformed(format!("variable {j} is free")));
            }
            if !self.cost[j].is_finite() {
                return Err(LpError::Malformed(format!("variable {j} has non-finite cost")));
            }
        }
        for &(i, j, v) in &self.entries {
            if i >= self.n_rows() || j >= n || !v.is_finite() {
                return Err(LpError::Malformed(format!("bad entry ({i}, {j}, {v})")));
            }
        }
        if self.rhs.iter().any(|b| !b.is_finite()) {
            return Err(LpError::Malformed("non-finite right-hand side".into()));
        }
        Ok(())
    }

    /// `A x` for this problem's constraint matrix.
    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.n_rows()];
        for &(i, j, v) in &self.entries {
            act[i] += v * x[j];
        }
        act
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Result of [`solve_lp`]. Primal values, duals and reduced costs are only
/// meaningful when `status == Optimal`.
///
/// Duals follow `reduced_cost_j = c_j − Σ_i dual_i a_ij`, so for this
/// minimization `≤` rows carry nonpositive and `≥` rows nonnegative duals.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    solve_lp_with(problem, Tolerances::default())
}

pub fn solve_lp_with(problem: &LpProblem, tol: Tolerances) -> Result<LpSolution, LpError> {
    let mut simplex = Simplex::new(problem, tol)?;
    simplex.solve()
}
