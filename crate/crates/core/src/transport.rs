//! Squared 2-Wasserstein distance between choice distributions over the
//! common location set `C`, with dual potentials for subgradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::choice::ChoiceDistribution;
use crate::instance::PrecomputedUtilities;
use crate::lp::{solve_transportation, LpError};

const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("distribution has {got} entries but the ground cost covers {expected} locations")]
    SupportMismatch { expected: usize, got: usize },
    #[error("distribution sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Squared distances between locations plus the index whose potential is
/// pinned to zero when reporting duals.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundCost {
    pub matrix: Vec<Vec<f64>>,
    pub reference: usize,
}

impl GroundCost {
    pub fn new(matrix: Vec<Vec<f64>>, reference: usize) -> Self {
        GroundCost { matrix, reference }
    }

    /// Ground cost of an instance with the first competitor as reference.
    pub fn from_precomputed(pre: &PrecomputedUtilities) -> Self {
        GroundCost { matrix: pre.ground_cost.clone(), reference: pre.n_candidates() }
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }
}

/// Coupling between a factual (rows) and counterfactual (columns) distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransportPlan(pub Vec<Vec<f64>>);

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.0.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.0.first().map_or(0, Vec::len);
        (0..n).map(|j| self.0.iter().map(|r| r[j]).sum()).collect()
    }

    pub fn cost(&self, ground: &GroundCost) -> f64 {
        self.0
            .iter()
            .zip(&ground.matrix)
            .map(|(p, c)| p.iter().zip(c).map(|(p, c)| p * c).sum::<f64>())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WassersteinResult {
    pub value: f64,
    pub plan: TransportPlan,
    /// Optimal duals of the counterfactual-marginal constraints, shifted so
    /// the reference location has potential 0. A subgradient of
    /// `W₂²(p0, ·)` at `p` on the probability simplex.
    pub potentials: Vec<f64>,
}

fn check(p: &[f64], expected: usize) -> Result<(), TransportError> {
    if p.len() != expected {
        return Err(TransportError::SupportMismatch { expected, got: p.len() });
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(TransportError::NotNormalized(total));
    }
    Ok(())
}

pub fn wasserstein2(
    p0: &ChoiceDistribution,
    p: &ChoiceDistribution,
    ground: &GroundCost,
) -> Result<WassersteinResult, TransportError> {
    check(&p0.0, ground.len())?;
    check(&p.0, ground.len())?;
    let sol = solve_transportation(&p0.0, &p.0, &ground.matrix)?;
    let shift = sol.col_potentials.get(ground.reference).copied().unwrap_or(0.0);
    let potentials = sol.col_potentials.iter().map(|v| v - shift).collect();
    let plan = TransportPlan(sol.plan);
    Ok(WassersteinResult { value: plan.cost(ground), plan, potentials })
}

/// Per-customer distances between factual and counterfactual distributions.
pub fn wasserstein_all(
    factual: &[ChoiceDistribution],
    counterfactual: &[ChoiceDistribution],
    ground: &GroundCost,
) -> Result<Vec<WassersteinResult>, TransportError> {
    factual
        .iter()
        .zip(counterfactual)
        .map(|(p0, p)| wasserstein2(p0, p, ground))
        .collect()
}

/// Sum of per-customer values, optionally weighted by customer weights.
pub fn wasserstein_sum(results: &[WassersteinResult], weights: Option<&[f64]>) -> f64 {
    match weights {
        Some(w) => results.iter().zip(w).map(|(r, w)| w * r.value).sum(),
        None => results.iter().map(|r| r.value).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(points: &[f64]) -> GroundCost {
        let m = points
            .iter()
            .map(|a| points.iter().map(|b| (a - b) * (a - b)).collect())
            .collect();
        GroundCost::new(m, points.len() - 1)
    }

    #[test]
    fn identity_is_zero() {
        let g = line(&[0.0, 1.0, 3.0]);
        let p = ChoiceDistribution(vec![0.2, 0.5, 0.3]);
        assert_eq!(wasserstein2(&p, &p, &g).unwrap().value, 0.0);
    }

    #[test]
    fn point_masses() {
        let g = line(&[0.0, 1.0, 3.0]);
        let a = ChoiceDistribution(vec![1.0, 0.0, 0.0]);
        let b = ChoiceDistribution(vec![0.0, 0.0, 1.0]);
        assert_eq!(wasserstein2(&a, &b, &g).unwrap().value, 9.0);
    }

    #[test]
    fn two_point_enumeration() {
        // One free parameter t = π_01: plan [[0.5 - t, t], [t - 0.25, 0.75 - t + 0.25 - 0.5]]…
        // minimized at t = 0.25 with cost 0.25·4.
        let g = line(&[0.0, 2.0]);
        let a = ChoiceDistribution(vec![0.5, 0.5]);
        let b = ChoiceDistribution(vec![0.25, 0.75]);
        let r = wasserstein2(&a, &b, &g).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-15);
        assert_eq!(r.potentials[1], 0.0);
    }

    #[test]
    fn errors() {
        let g = line(&[0.0, 2.0]);
        let a = ChoiceDistribution(vec![0.5, 0.5]);
        assert_eq!(
            wasserstein2(&a, &ChoiceDistribution(vec![1.0]), &g),
            Err(TransportError::SupportMismatch { expected: 2, got: 1 })
        );
        assert!(matches!(
            wasserstein2(&a, &ChoiceDistribution(vec![0.6, 0.6]), &g),
            Err(TransportError::NotNormalized(_))
        ));
    }

    #[test]
    fn sums() {
        let mk = |v: f64| WassersteinResult { value: v, plan: TransportPlan(vec![]), potentials: vec![] };
        let rs: Vec<_> = [10.0, 20.0, 30.0, 40.0].into_iter().map(mk).collect();
        assert_eq!(wasserstein_sum(&rs, None), 100.0);
        assert_eq!(wasserstein_sum(&rs, Some(&[1.0, 0.0, 0.0, 0.5])), 30.0);
    }
}
