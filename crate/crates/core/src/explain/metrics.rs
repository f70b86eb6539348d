use serde::{Deserialize, Serialize};

use super::Explanation;
use crate::choice::captured_demand;
use crate::instance::PrecomputedUtilities;
use crate::transport::GroundCost;

/// Threshold above which a transformed covariate counts as changed.
pub const SPARSITY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub q_factual: f64,
    pub q_new: f64,
    pub w2: f64,
    pub sparsity: f64,
    pub solve_time_s: f64,
    pub warm_start_time_s: f64,
    pub bound_time_s: f64,
    pub timed_out: bool,
    pub gap: f64,
}

/// Fraction of candidates whose transformed covariate moved by more than
/// [`SPARSITY_TOL`].
pub fn sparsity(phi: &[f64], phi0: &[f64]) -> f64 {
    if phi0.is_empty() {
        return 0.0;
    }
    let changed = phi.iter().zip(phi0).filter(|(a, b)| (*a - *b).abs() > SPARSITY_TOL).count();
    changed as f64 / phi0.len() as f64
}

/// Report record for one explanation; demand and transport cost are
/// recomputed from the stored decision, covariates and plans.
pub fn metrics(expl: &Explanation, pre: &PrecomputedUtilities) -> Metrics {
    let ground = GroundCost::from_precomputed(pre);
    Metrics {
        q_factual: expl.q_factual,
        q_new: captured_demand(&expl.phi.0, &expl.z, pre, &pre.weights),
        w2: expl.plans.iter().map(|p| p.cost(&ground)).sum(),
        sparsity: sparsity(&expl.phi.0, &pre.phi0),
        solve_time_s: expl.timings.solve_s,
        warm_start_time_s: expl.timings.warm_start_s,
        bound_time_s: expl.timings.bound_s,
        timed_out: expl.timed_out,
        gap: expl.gap,
    }
}
