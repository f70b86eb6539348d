//! Command implementations behind the `cfx` binary, and the experiment
//! harness that reproduces the benchmark table layout.

pub mod dump;
pub mod experiment;

use std::fmt;

use cfx_core::explain::ExplainError;
use cfx_core::factual::{
    binomial, solve_factual_enumerate, solve_factual_haase, FactualError, FactualSolution, ENUMERATION_CAP,
};
use cfx_core::lp::BranchOptions;
use cfx_core::{DesiredSpace, PrecomputedUtilities};

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failure = 1,
    Usage = 2,
    Infeasible = 3,
    TimeLimit = 4,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// An error tagged with the exit code it should produce.
#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(exit: Exit, source: impl Into<anyhow::Error>) -> Self {
        CliError { exit, source: source.into() }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError::new(Exit::Usage, anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::new(Exit::Failure, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Exit::Failure, e)
    }
}

pub fn explain_exit(e: &ExplainError) -> Exit {
    match e {
        ExplainError::Config(_) => Exit::Usage,
        ExplainError::DesiredSpace(_) | ExplainError::UnattainableTarget { .. } | ExplainError::NoFeasiblePoint => {
            Exit::Infeasible
        }
        _ => Exit::Failure,
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        CliError::new(explain_exit(&e), e)
    }
}

impl From<FactualError> for CliError {
    fn from(e: FactualError) -> Self {
        let exit = match e {
            FactualError::Budget { .. } => Exit::Infeasible,
            _ => Exit::Failure,
        };
        CliError::new(exit, e)
    }
}

/// Enumeration when the number of subsets is within the default cap, the
/// Haase branch-and-bound otherwise.
pub fn solve_factual(pre: &PrecomputedUtilities, r: usize) -> Result<FactualSolution, FactualError> {
    if binomial(pre.n_candidates(), r) <= ENUMERATION_CAP {
        solve_factual_enumerate(pre, r)
    } else {
        solve_factual_haase(pre, r, &BranchOptions::default())
    }
}

/// Forces open the non-selected candidate with the largest total
/// attraction `Σ_n q_n â_nd`; lowest index on ties. Unconstrained if every
/// candidate is already open.
pub fn best_non_selected(pre: &PrecomputedUtilities, factual: &FactualSolution) -> DesiredSpace {
    let mut best: Option<(usize, f64)> = None;
    for d in (0..pre.n_candidates()).filter(|&d| !factual.z0.is_open(d)) {
        let mass: f64 = pre.a_hat.iter().zip(&pre.weights).map(|(row, w)| w * row[d]).sum();
        if best.map_or(true, |(_, m)| mass > m) {
            best = Some((d, mass));
        }
    }
    match best {
        Some((d, _)) => DesiredSpace::new(vec![d], vec![]),
        None => DesiredSpace::unconstrained(),
    }
}

/// Parses a comma-separated index list such as `0,3,4`.
pub fn parse_index_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|e| format!("bad index {t:?}: {e}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_lists() {
        assert_eq!(parse_index_list("0, 3,4").unwrap(), vec![0, 3, 4]);
        assert_eq!(parse_index_list("").unwrap(), Vec::<usize>::new());
        assert!(parse_index_list("1,x").is_err());
    }
}
