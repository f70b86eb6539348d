//! The continuous problem over `φ` for one fixed decision `z`.

use crate::choice::{captured_demand, captured_demand_gradient, choice_probabilities, probability_jacobian, FacilityDecision};
use crate::factual::FactualSolution;
use crate::instance::PrecomputedUtilities;
use crate::transport::{wasserstein2, GroundCost, TransportError};

const MAX_NEWTON_STEPS: usize = 200;
/// Relative Newton step at which the root counts as found.
const NEWTON_TOL: f64 = 1e-14;

/// Objective parts of a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub j_cost: f64,
    pub w_cost: f64,
    pub total: f64,
}

pub struct NodeProblem<'a> {
    pub pre: &'a PrecomputedUtilities,
    pub factual: &'a FactualSolution,
    pub ground: &'a GroundCost,
    pub z: FacilityDecision,
    pub open: Vec<usize>,
    /// `α · Q^factual`.
    pub target: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub phi_min: f64,
    pub transport_weights: Option<&'a [f64]>,
}

impl<'a> NodeProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pre: &'a PrecomputedUtilities,
        factual: &'a FactualSolution,
        ground: &'a GroundCost,
        z: FacilityDecision,
        target: f64,
        lambda: f64,
        epsilon: f64,
        phi_min: f64,
        transport_weights: Option<&'a [f64]>,
    ) -> Self {
        let open = z.open_indices();
        NodeProblem { pre, factual, ground, z, open, target, lambda, epsilon, phi_min, transport_weights }
    }

    /// Same node without the regularizer.
    pub fn without_regularizer(&self) -> NodeProblem<'a> {
        NodeProblem { z: self.z.clone(), open: self.open.clone(), lambda: 0.0, ..*self }
    }

    pub fn demand(&self, phi: &[f64]) -> f64 {
        captured_demand(phi, &self.z, self.pre, &self.pre.weights)
    }

    pub fn demand_gradient(&self, phi: &[f64]) -> Vec<f64> {
        captured_demand_gradient(phi, &self.z, self.pre, &self.pre.weights)
    }

    /// Smallest `φ_d` giving every customer probability at least ε for `d`,
    /// with the other coordinates held fixed.
    fn support_floor(&self, phi: &[f64], d: usize) -> f64 {
        let mut need: f64 = 0.0;
        for n in 0..self.pre.n_customers() {
            let a = self.pre.a_hat[n][d];
            let others: f64 = self
                .open
                .iter()
                .filter(|&&k| k != d)
                .map(|&k| phi[k] * self.pre.a_hat[n][k])
                .sum::<f64>()
                + self.pre.b_sum[n];
            need = need.max(self.epsilon * others / (a * (1.0 - self.epsilon)));
        }
        need
    }

    /// Total violation of the ε-support constraints, in probability units.
    pub fn support_violation(&self, phi: &[f64]) -> f64 {
        let mut v = 0.0;
        for n in 0..self.pre.n_customers() {
            let s = crate::choice::denominator(phi, &self.z, self.pre, n);
            for &d in &self.open {
                v += (self.epsilon - phi[d] * self.pre.a_hat[n][d] / s).max(0.0);
            }
        }
        v
    }

    pub fn demand_violation(&self, phi: &[f64]) -> f64 {
        (self.target - self.demand(phi)).max(0.0)
    }

    pub fn is_feasible(&self, phi: &[f64]) -> bool {
        self.open.iter().all(|&d| phi[d] >= self.phi_min)
            && self.demand(phi) >= self.target
            && self.support_violation(phi) == 0.0
    }

    pub fn j_cost(&self, phi: &[f64]) -> f64 {
        self.open.iter().map(|&d| (phi[d] - self.pre.phi0[d]).abs()).sum()
    }

    fn customer_weight(&self, n: usize) -> f64 {
        self.transport_weights.map_or(1.0, |w| w[n])
    }

    pub fn w_cost(&self, phi: &[f64]) -> Result<f64, TransportError> {
        let mut total = 0.0;
        for n in 0..self.pre.n_customers() {
            let p = choice_probabilities(phi, &self.z, self.pre, n);
            total += self.customer_weight(n) * wasserstein2(&self.factual.p0[n], &p, self.ground)?.value;
        }
        Ok(total)
    }

    pub fn evaluate(&self, phi: &[f64]) -> Result<Evaluation, TransportError> {
        let j_cost = self.j_cost(phi);
        let w_cost = if self.lambda > 0.0 { self.w_cost(phi)? } else { 0.0 };
        Ok(Evaluation { j_cost, w_cost, total: j_cost + self.lambda * w_cost })
    }

    pub fn objective(&self, phi: &[f64]) -> Result<f64, TransportError> {
        Ok(self.evaluate(phi)?.total)
    }

    /// Objective and one subgradient (over all of `D`, zero off the open set).
    pub fn objective_subgradient(&self, phi: &[f64]) -> Result<(Evaluation, Vec<f64>), TransportError> {
        let mut g = vec![0.0; phi.len()];
        for &d in &self.open {
            let diff = phi[d] - self.pre.phi0[d];
            g[d] = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
        let j_cost = self.j_cost(phi);
        let mut w_cost = 0.0;
        if self.lambda > 0.0 {
            for n in 0..self.pre.n_customers() {
                let p = choice_probabilities(phi, &self.z, self.pre, n);
                let res = wasserstein2(&self.factual.p0[n], &p, self.ground)?;
                let omega = self.customer_weight(n);
                w_cost += omega * res.value;
                let jac = probability_jacobian(phi, &self.z, self.pre, n);
                for &d in &self.open {
                    let chain: f64 = res.potentials.iter().zip(&jac).map(|(v, row)| v * row[d]).sum();
                    g[d] += self.lambda * omega * chain;
                }
            }
        }
        Ok((Evaluation { j_cost, w_cost, total: j_cost + self.lambda * w_cost }, g))
    }

    /// Gradient of the support violation.
    pub fn support_violation_gradient(&self, phi: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; phi.len()];
        for n in 0..self.pre.n_customers() {
            let s = crate::choice::denominator(phi, &self.z, self.pre, n);
            let a = &self.pre.a_hat[n];
            for &d in &self.open {
                let p = phi[d] * a[d] / s;
                if p >= self.epsilon {
                    continue;
                }
                // violation ε − p_d; ∂p_d/∂φ_k = (1{k=d} a_d S − φ_d a_d a_k) / S²
                for &k in &self.open {
                    let own = if k == d { a[d] * s } else { 0.0 };
                    g[k] -= (own - phi[d] * a[d] * a[k]) / (s * s);
                }
            }
        }
        g
    }

    /// Raises coordinates until every ε-support constraint holds. Raising one
    /// facility lowers the others' shares, so a few sweeps are used.
    pub fn fix_support(&self, phi: &mut [f64]) {
        for _ in 0..50 {
            let mut changed = false;
            for &d in &self.open {
                let floor = self.support_floor(phi, d);
                if phi[d] < floor {
                    // small margin so the constraint holds after rounding
                    phi[d] = floor * (1.0 + 1e-12);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    /// Smallest value of `φ_j` (others fixed) with demand at least the target.
    ///
    /// Demand is concave and increasing in `φ_j`, so Newton's method started
    /// below the root approaches it monotonically from below; the last iterate
    /// is then nudged up until it is feasible.
    pub fn raise_to_target(&self, phi: &[f64], j: usize) -> Option<f64> {
        let mut trial = phi.to_vec();
        let mut v = phi[j].max(self.phi_min);
        trial[j] = v;
        let mut q = self.demand(&trial);
        if q >= self.target {
            return Some(v);
        }
        for _ in 0..MAX_NEWTON_STEPS {
            let slope = self.demand_gradient(&trial)[j];
            if slope <= 0.0 || !slope.is_finite() {
                return None;
            }
            let step = (self.target - q) / slope;
            v += step;
            trial[j] = v;
            q = self.demand(&trial);
            if q >= self.target || step <= NEWTON_TOL * v {
                break;
            }
        }
        let mut nudge = f64::EPSILON * v;
        for _ in 0..64 {
            if q >= self.target {
                return v.is_finite().then_some(v);
            }
            v += nudge;
            nudge *= 2.0;
            trial[j] = v;
            q = self.demand(&trial);
        }
        None
    }

    /// Nearby feasible point: clamps to `phi_min`, fixes support, then closes
    /// any demand shortfall by raising the single open coordinate whose
    /// repair is cheapest in objective terms.
    pub fn repair(&self, phi: &[f64]) -> Result<Option<Vec<f64>>, TransportError> {
        let mut base = phi.to_vec();
        for &d in &self.open {
            base[d] = base[d].max(self.phi_min);
        }
        for _ in 0..10 {
            self.fix_support(&mut base);
            if self.demand(&base) >= self.target {
                return Ok(self.is_feasible(&base).then_some(base));
            }
            let mut best: Option<(f64, Vec<f64>)> = None;
            for &j in &self.open {
                let Some(v) = self.raise_to_target(&base, j) else { continue };
                let mut cand = base.clone();
                cand[j] = v;
                self.fix_support(&mut cand);
                let f = self.objective(&cand)?;
                if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                    best = Some((f, cand));
                }
            }
            match best {
                Some((_, cand)) if self.is_feasible(&cand) => return Ok(Some(cand)),
                Some((_, cand)) => base = cand,
                None => return Ok(None),
            }
        }
        Ok(None)
    }

    /// Certified lower bound on `Σ|φ − φ⁰|` over the feasible set, from the
    /// linearization of the concave demand at `phi_hat`:
    /// `Q(φ) ≤ Q(φ̂) + ∇Q(φ̂)ᵀ(φ − φ̂)` for every `φ`.
    pub fn linearized_cost_bound(&self, phi_hat: &[f64]) -> f64 {
        let g = self.demand_gradient(phi_hat);
        let q_hat = self.demand(phi_hat);
        let mut deficit = self.target - q_hat;
        let mut g_max: f64 = 0.0;
        for &d in &self.open {
            deficit += g[d] * (phi_hat[d] - self.pre.phi0[d]);
            g_max = g_max.max(g[d]);
        }
        if deficit <= 0.0 || g_max <= 0.0 {
            return 0.0;
        }
        deficit / g_max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factual::solve_factual_enumerate;
    use crate::instance::{generate, precompute, GenerationConfig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn repair_reaches_target_and_linear_bound_is_below() {
        let inst = generate(&GenerationConfig::new(8, 4, 3, 21)).unwrap();
        let pre = precompute(&inst);
        let fact = solve_factual_enumerate(&pre, 2).unwrap();
        let ground = GroundCost::from_precomputed(&pre);
        let z = FacilityDecision::from_open_set(4, &[0, 3]);
        let prob = NodeProblem::new(&pre, &fact, &ground, z, 1.2 * fact.q_factual, 0.0, 1e-4, 1e-6, None);
        let fixed = prob.repair(&pre.phi0).unwrap().unwrap();
        assert!(prob.is_feasible(&fixed));
        assert!(prob.demand(&fixed) - prob.target < 1e-9);
        assert!(prob.linearized_cost_bound(&fixed) <= prob.j_cost(&fixed) + 1e-12);
        assert!(prob.linearized_cost_bound(&pre.phi0) <= prob.j_cost(&fixed) + 1e-12);
    }

    #[test]
    fn subgradient_matches_finite_differences_off_kinks() {
        let inst = generate(&GenerationConfig::new(5, 3, 2, 4)).unwrap();
        let pre = precompute(&inst);
        let fact = solve_factual_enumerate(&pre, 2).unwrap();
        let ground = GroundCost::from_precomputed(&pre);
        let z = FacilityDecision::from_open_set(3, &[1, 2]);
        let prob = NodeProblem::new(&pre, &fact, &ground, z, 0.0, 0.3, 1e-4, 1e-6, None);
        let phi = vec![1.0, 1.7, 0.6];
        let (_, g) = prob.objective_subgradient(&phi).unwrap();
        for d in [1, 2] {
            let h = 1e-6;
            let mut up = phi.clone();
            up[d] += h;
            let mut dn = phi.clone();
            dn[d] -= h;
            let fd = (prob.objective(&up).unwrap() - prob.objective(&dn).unwrap()) / (2.0 * h);
            assert_abs_diff_eq!(g[d], fd, epsilon = 1e-4 * (1.0 + fd.abs()));
        }
        assert_eq!(g[0], 0.0);
    }
}
