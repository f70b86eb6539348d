//! Local solver for the continuous problem at a fixed decision.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use super::problem::{Evaluation, NodeProblem};
use super::{ExplainError, SolverConfig};

/// Step decay horizon `τ` in `a / (1 + k/τ)`.
const STEP_HORIZON: f64 = 100.0;
const PERTURBATION_SIGMA: f64 = 0.5;
/// Pattern search stops once the step is this small relative to `‖φ‖∞`.
const POLISH_MIN_STEP: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerResult {
    pub phi: Vec<f64>,
    pub eval: Evaluation,
    /// Subgradient iterations plus polish evaluations, over all starts.
    pub iterations: usize,
}

fn past(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}

/// Scales the coordinates `coords` of `start` by a common factor so that
/// demand meets the target exactly (from above).
pub fn scale_to_target(prob: &NodeProblem, start: &[f64], coords: &[usize]) -> Option<Vec<f64>> {
    let scaled = |c: f64| {
        let mut phi = start.to_vec();
        for &d in coords {
            phi[d] = (start[d] * c).max(prob.phi_min);
        }
        phi
    };
    let feasible = |c: f64| prob.demand(&scaled(c)) >= prob.target;
    let (mut lo, mut hi) = if feasible(1.0) {
        let mut lo = 0.5;
        while feasible(lo) {
            lo *= 0.5;
            if lo < 1e-300 {
                return Some(scaled(lo));
            }
        }
        (lo, lo * 2.0)
    } else {
        let mut hi = 2.0;
        while !feasible(hi) {
            hi *= 2.0;
            if !hi.is_finite() {
                return None;
            }
        }
        (hi * 0.5, hi)
    };
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(scaled(hi))
}

struct Best {
    phi: Vec<f64>,
    total: f64,
}

impl Best {
    fn offer(slot: &mut Option<Best>, phi: &[f64], total: f64) -> bool {
        if slot.as_ref().map_or(true, |b| total < b.total) {
            *slot = Some(Best { phi: phi.to_vec(), total });
            true
        } else {
            false
        }
    }
}

/// One exact-penalty projected subgradient run. Returns the best feasible
/// point met (after repair of the final and best-penalized iterates).
fn subgradient_run(
    prob: &NodeProblem,
    cfg: &SolverConfig,
    start: &[f64],
    deadline: Option<Instant>,
    iterations: &mut usize,
) -> Result<Option<Best>, ExplainError> {
    let mut phi = start.to_vec();
    for &d in &prob.open {
        phi[d] = phi[d].max(prob.phi_min);
    }
    let scale = prob.open.iter().map(|&d| prob.pre.phi0[d]).fold(0.0f64, f64::max).max(prob.phi_min);
    let a = 0.1 * scale;
    let mut rho = cfg.penalty_initial;
    let mut feasible_best: Option<Best> = None;
    let mut penalized_best: Option<Best> = None;
    let mut k = 0usize;

    'escalation: for _ in 0..=cfg.penalty_escalations {
        let mut stall = 0usize;
        let mut stall_ref = f64::INFINITY;
        while k < cfg.max_iterations {
            if k % 16 == 0 && past(deadline) {
                break 'escalation;
            }
            let (ev, mut g) = prob.objective_subgradient(&phi)?;
            let q_gap = prob.demand_violation(&phi);
            let s_gap = prob.support_violation(&phi);
            if q_gap == 0.0 && s_gap == 0.0 {
                Best::offer(&mut feasible_best, &phi, ev.total);
            }
            let penalized = ev.total + rho * (q_gap + s_gap);
            Best::offer(&mut penalized_best, &phi, penalized);
            if penalized < stall_ref - cfg.tolerance * stall_ref.abs().max(1.0) {
                stall_ref = penalized;
                stall = 0;
            } else {
                stall += 1;
                if stall >= cfg.stall_iterations {
                    break;
                }
            }
            if q_gap > 0.0 {
                let gq = prob.demand_gradient(&phi);
                for &d in &prob.open {
                    g[d] -= rho * gq[d];
                }
            }
            if s_gap > 0.0 {
                let gs = prob.support_violation_gradient(&phi);
                for &d in &prob.open {
                    g[d] += rho * gs[d];
                }
            }
            let norm = prob.open.iter().map(|&d| g[d] * g[d]).sum::<f64>().sqrt();
            k += 1;
            *iterations += 1;
            if norm == 0.0 {
                break;
            }
            let step = a / (1.0 + k as f64 / STEP_HORIZON);
            for &d in &prob.open {
                phi[d] = (phi[d] - step * g[d] / norm).max(prob.phi_min);
            }
        }
        if prob.is_feasible(&phi) || k >= cfg.max_iterations {
            break;
        }
        rho *= cfg.penalty_growth;
    }

    let mut candidates = vec![phi];
    if let Some(b) = penalized_best {
        candidates.push(b.phi);
    }
    for c in candidates {
        if let Some(fixed) = prob.repair(&c)? {
            let total = prob.objective(&fixed)?;
            Best::offer(&mut feasible_best, &fixed, total);
        }
    }
    Ok(feasible_best)
}

/// Coordinate pattern search on the feasible set. Decreasing moves that break
/// the demand constraint are completed by raising one other open coordinate.
fn polish(
    prob: &NodeProblem,
    cfg: &SolverConfig,
    best: Best,
    deadline: Option<Instant>,
    iterations: &mut usize,
) -> Result<Best, ExplainError> {
    let Best { mut phi, mut total } = best;
    let scale = prob
        .open
        .iter()
        .map(|&d| phi[d].max(prob.pre.phi0[d]))
        .fold(0.0f64, f64::max)
        .max(prob.phi_min);
    let mut step = 0.25 * scale;
    let mut evals = 0usize;
    let cap = cfg.max_iterations.max(1);

    let try_point = |cand: Vec<f64>, phi: &mut Vec<f64>, total: &mut f64, evals: &mut usize| -> Result<bool, ExplainError> {
        if !prob.is_feasible(&cand) {
            return Ok(false);
        }
        *evals += 1;
        let f = prob.objective(&cand)?;
        if f < *total - 1e-15 * total.abs() {
            *phi = cand;
            *total = f;
            return Ok(true);
        }
        Ok(false)
    };

    while step > POLISH_MIN_STEP * scale && evals < cap && !past(deadline) {
        let mut improved = false;
        'moves: for &i in &prob.open {
            let phi0_i = prob.pre.phi0[i];
            let mut targets = vec![phi[i] - step, phi[i] + step];
            if phi[i] != phi0_i && (phi[i] - phi0_i).abs() > step {
                targets.push(phi0_i);
            }
            for t in targets {
                let t = t.max(prob.phi_min);
                if t == phi[i] {
                    continue;
                }
                let mut cand = phi.clone();
                cand[i] = t;
                if prob.demand(&cand) >= prob.target {
                    let mut fixed = cand.clone();
                    prob.fix_support(&mut fixed);
                    if try_point(fixed, &mut phi, &mut total, &mut evals)? {
                        improved = true;
                        break 'moves;
                    }
                    continue;
                }
                for &j in &prob.open {
                    if j == i {
                        continue;
                    }
                    let Some(v) = prob.raise_to_target(&cand, j) else { continue };
                    let mut paired = cand.clone();
                    paired[j] = v;
                    prob.fix_support(&mut paired);
                    if try_point(paired, &mut phi, &mut total, &mut evals)? {
                        improved = true;
                        break 'moves;
                    }
                }
            }
        }
        if improved {
            step *= 2.0;
        } else {
            step *= 0.5;
        }
    }
    *iterations += evals;
    Ok(Best { phi, total })
}

/// Multistart local search for `min F(φ)` at a fixed decision.
///
/// Starts are the supplied points, then the first supplied point scaled
/// uniformly on the open set to the demand boundary, then seeded log-normal
/// perturbations of it, up to `cfg.multistarts` runs. Returns `None` when no
/// start produced a feasible point.
pub fn inner_solve(
    prob: &NodeProblem,
    cfg: &SolverConfig,
    starts: &[Vec<f64>],
    seed: u64,
    deadline: Option<Instant>,
) -> Result<Option<InnerResult>, ExplainError> {
    let first = starts.first().cloned().unwrap_or_else(|| prob.pre.phi0.clone());
    let mut points: Vec<Vec<f64>> = Vec::new();
    for s in starts {
        if !points.contains(s) {
            points.push(s.clone());
        }
    }
    if let Some(scaled) = scale_to_target(prob, &first, &prob.open) {
        if !points.contains(&scaled) {
            points.push(scaled);
        }
    }
    points.truncate(cfg.multistarts);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = LogNormal::new(0.0, PERTURBATION_SIGMA).expect("valid log-normal");
    while points.len() < cfg.multistarts {
        let mut p = first.clone();
        for &d in &prob.open {
            p[d] = (p[d] * noise.sample(&mut rng)).max(prob.phi_min);
        }
        points.push(p);
    }

    let mut iterations = 0usize;
    let mut results: Vec<Best> = Vec::new();
    for p in &points {
        if past(deadline) && !results.is_empty() {
            break;
        }
        if let Some(b) = subgradient_run(prob, cfg, p, deadline, &mut iterations)? {
            results.push(b);
        }
    }
    if results.is_empty() {
        return Ok(None);
    }
    results.sort_by(|a, b| a.total.total_cmp(&b.total));
    // Polishing is cheap without transport solves; otherwise only the two
    // most promising runs are refined.
    let keep = if prob.lambda == 0.0 { results.len() } else { 2 };
    let mut best: Option<Best> = None;
    for r in results.into_iter().take(keep) {
        let r = polish(prob, cfg, r, deadline, &mut iterations)?;
        if best.as_ref().map_or(true, |b| r.total < b.total) {
            best = Some(r);
        }
    }
    let best = best.expect("nonempty");
    let eval = prob.evaluate(&best.phi)?;
    Ok(Some(InnerResult { phi: best.phi, eval, iterations }))
}

/// Cost-only solve (`λ = 0`) from a feasible start. The problem is convex in
/// this case, so a single pattern search from the start replaces the
/// multistart subgradient phase.
pub fn cost_only_solve(
    prob: &NodeProblem,
    cfg: &SolverConfig,
    start: &[f64],
    deadline: Option<Instant>,
) -> Result<Option<InnerResult>, ExplainError> {
    debug_assert!(prob.lambda == 0.0);
    let Some(phi) = prob.repair(start)? else { return Ok(None) };
    let total = prob.j_cost(&phi);
    let mut iterations = 0usize;
    let best = polish(prob, cfg, Best { phi, total }, deadline, &mut iterations)?;
    let eval = prob.evaluate(&best.phi)?;
    Ok(Some(InnerResult { phi: best.phi, eval, iterations }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::FacilityDecision;
    use crate::factual::FactualSolution;
    use crate::factual::FactualMethod;
    use crate::instance::{Candidate, Competitor, Customer, Instance, precompute};
    use crate::transport::GroundCost;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_single_facility() {
        // Customer and candidate co-located (â = 1), one competitor with b = 1
        // requires distance 0 too; put it on top of the customer.
        let inst = Instance::new(
            vec![Customer { location: [0.0, 0.0], weight: 1.0 }],
            vec![Candidate { location: [0.0, 0.0], covariate: 0.0 }],
            vec![Competitor { location: [0.0, 0.0] }],
            -0.1,
        )
        .unwrap();
        let pre = precompute(&inst);
        let fact = FactualSolution::from_decision(&pre, FacilityDecision::from_open_set(1, &[0]), FactualMethod::Enumeration);
        assert_abs_diff_eq!(fact.q_factual, 0.5, epsilon = 1e-15);
        let ground = GroundCost::from_precomputed(&pre);
        let z = FacilityDecision::from_open_set(1, &[0]);
        let prob = NodeProblem::new(&pre, &fact, &ground, z, 0.6, 0.0, 1e-4, 1e-6, None);
        let cfg = SolverConfig::new(1.2, 0.0, 1);
        let res = inner_solve(&prob, &cfg, &[pre.phi0.clone()], 1, None).unwrap().unwrap();
        assert_abs_diff_eq!(res.phi[0], 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(res.eval.total, 0.5, epsilon = 1e-9);
        let res = cost_only_solve(&prob, &cfg, &pre.phi0, None).unwrap().unwrap();
        assert_abs_diff_eq!(res.phi[0], 1.5, epsilon = 1e-9);
    }
}
