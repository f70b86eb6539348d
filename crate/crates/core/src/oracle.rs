//! Slow, independent reference implementations used to check the solvers.
//!
//! Nothing here is tuned; each routine is written as directly as possible
//! from its definition.

use crate::choice::FacilityDecision;
use crate::explain::DesiredSpace;
use crate::instance::PrecomputedUtilities;
use crate::lp::RowSense;

const TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum OracleLp {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl OracleLp {
    pub fn objective(&self) -> Option<f64> {
        match self {
            OracleLp::Optimal { objective, .. } => Some(*objective),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, obj: &mut [f64], r: usize, q: usize) {
        let p = self.rows[r][q];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && row[q] != 0.0 {
                let f = row[q];
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        let f = obj[q];
        for (v, pv) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        self.basis[r] = q;
    }

    /// Bland's rule until optimal; `false` if unbounded.
    fn run(&mut self, obj: &mut [f64], allowed: &[bool]) -> bool {
        let rhs = obj.len() - 1;
        loop {
            let Some(q) = (0..rhs).find(|&j| allowed[j] && obj[j] < -TOL) else { return true };
            let mut leave: Option<(f64, usize, usize)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[q] > TOL {
                    let ratio = row[rhs] / row[q];
                    let better = match leave {
                        None => true,
                        Some((best, _, b)) => ratio < best - TOL || (ratio <= best + TOL && self.basis[i] < b),
                    };
                    if better {
                        leave = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            let Some((_, r, _)) = leave else { return false };
            self.pivot(obj, r, q);
        }
    }
}

/// `min cᵀx` subject to `rows` and `x ≥ 0`, by a dense two-phase tableau
/// simplex with Bland's rule.
pub fn tableau_lp(c: &[f64], rows: &[(Vec<f64>, RowSense, f64)]) -> OracleLp {
    let n = c.len();
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let width = n + n_slack + m;
    let mut tab = Tableau { rows: Vec::with_capacity(m), basis: Vec::with_capacity(m) };
    let mut slack = n;
    for (i, (a, sense, b)) in rows.iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(a);
        match sense {
            RowSense::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
            RowSense::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            RowSense::Eq => {}
        }
        row[width] = *b;
        if *b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n + n_slack + i] = 1.0;
        tab.rows.push(row);
        tab.basis.push(n + n_slack + i);
    }
    let first_art = n + n_slack;

    // Phase 1: minimize the sum of artificials.
    let mut obj = vec![0.0; width + 1];
    for row in &tab.rows {
        for j in 0..first_art {
            obj[j] -= row[j];
        }
        obj[width] -= row[width];
    }
    let all = vec![true; width];
    tab.run(&mut obj, &all);
    let scale = 1.0 + rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
    if -obj[width] > 1e-8 * scale {
        return OracleLp::Infeasible;
    }
    // Drive artificials out of the basis; rows where that is impossible are
    // redundant and dropped.
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= first_art {
            if let Some(q) = (0..first_art).find(|&j| tab.rows[i][j].abs() > 1e-9) {
                tab.pivot(&mut obj, i, q);
            } else {
                tab.rows.remove(i);
                tab.basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase 2.
    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(c);
    let mut obj = vec![0.0; width + 1];
    obj[..width].copy_from_slice(&cost);
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        let cb = cost[b];
        if cb != 0.0 {
            for (v, a) in obj.iter_mut().zip(row) {
                *v -= cb * a;
            }
        }
    }
    let allowed: Vec<bool> = (0..width).map(|j| j < first_art).collect();
    if !tab.run(&mut obj, &allowed) {
        return OracleLp::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (row, &b) in tab.rows.iter().zip(&tab.basis) {
        if b < n {
            x[b] = row[width];
        }
    }
    OracleLp::Optimal { objective: c.iter().zip(&x).map(|(a, b)| a * b).sum(), x }
}

/// Optimal transport cost between `p` and `q` as an explicit LP.
pub fn transport_lp(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (p.len(), q.len());
    let c: Vec<f64> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| cost[i][j]).collect();
    let mut rows = Vec::with_capacity(m + n);
    for (i, &pi) in p.iter().enumerate() {
        let mut a = vec![0.0; m * n];
        a[i * n..(i + 1) * n].fill(1.0);
        rows.push((a, RowSense::Eq, pi));
    }
    for (j, &qj) in q.iter().enumerate() {
        let mut a = vec![0.0; m * n];
        for i in 0..m {
            a[i * n + j] = 1.0;
        }
        rows.push((a, RowSense::Eq, qj));
    }
    tableau_lp(&c, &rows).objective().expect("transport LP is feasible and bounded")
}

/// Choice probabilities written out from the logit formula.
pub fn logit(phi: &[f64], z: &FacilityDecision, pre: &PrecomputedUtilities, n: usize) -> Vec<f64> {
    let nd = pre.n_candidates();
    let mut p = vec![0.0; pre.n_locations()];
    for d in 0..nd {
        if z.is_open(d) {
            p[d] = phi[d] * pre.a_hat[n][d];
        }
    }
    for (e, &b) in pre.b[n].iter().enumerate() {
        p[nd + e] = b;
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Smallest `φ` for which one facility, alone against competitors of total
/// attraction `b`, captures `target` of a single customer with weight `q`.
pub fn single_customer_threshold(a_hat: f64, b: f64, q: f64, target: f64) -> f64 {
    target * b / (a_hat * (q - target))
}

pub struct GridSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub budget: usize,
    pub epsilon: f64,
    pub phi_min: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOptimum {
    pub z: FacilityDecision,
    pub phi: Vec<f64>,
    pub objective: f64,
}

/// Exponents `k` of the grid `φ⁰_d · 2^{k/8}`.
pub const GRID_EXPONENTS: std::ops::RangeInclusive<i32> = -16..=32;

/// Best feasible grid point over every decision in the desired space, with
/// each open coordinate ranging over `φ⁰_d · 2^{k/8}`, 49 values per
/// facility. `None` if no grid point is feasible.
pub fn grid_explain(
    pre: &PrecomputedUtilities,
    p0: &[Vec<f64>],
    q_factual: f64,
    desired: &DesiredSpace,
    spec: &GridSpec,
) -> Option<GridOptimum> {
    let target = spec.alpha * q_factual;
    let levels: Vec<f64> = GRID_EXPONENTS.map(|k| 2f64.powf(k as f64 / 8.0)).collect();
    let mut best: Option<GridOptimum> = None;
    for z in desired.decisions(pre.n_candidates(), spec.budget) {
        let open = z.open_indices();
        let mut idx = vec![0usize; open.len()];
        loop {
            let mut phi = pre.phi0.clone();
            for (&d, &k) in open.iter().zip(&idx) {
                phi[d] = pre.phi0[d] * levels[k];
            }
            if open.iter().all(|&d| phi[d] >= spec.phi_min) {
                let dists: Vec<Vec<f64>> = (0..pre.n_customers()).map(|n| logit(&phi, &z, pre, n)).collect();
                let q: f64 = dists
                    .iter()
                    .zip(&pre.weights)
                    .map(|(p, w)| w * open.iter().map(|&d| p[d]).sum::<f64>())
                    .sum();
                let supported = dists.iter().all(|p| open.iter().all(|&d| p[d] >= spec.epsilon));
                if q >= target && supported {
                    let j: f64 = open.iter().map(|&d| (phi[d] - pre.phi0[d]).abs()).sum();
                    let w: f64 = if spec.lambda > 0.0 {
                        dists.iter().zip(p0).map(|(p, p0)| transport_lp(p0, p, &pre.ground_cost)).sum()
                    } else {
                        0.0
                    };
                    let objective = j + spec.lambda * w;
                    if best.as_ref().map_or(true, |b| objective < b.objective) {
                        best = Some(GridOptimum { z: z.clone(), phi, objective });
                    }
                }
            }
            // odometer over the open coordinates
            let mut pos = 0;
            while pos < idx.len() {
                idx[pos] += 1;
                if idx[pos] < levels.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
            if pos == idx.len() {
                break;
            }
        }
    }
    best
}

/// Captured demand of every `r`-subset, maximized by enumeration.
pub fn brute_force_factual(pre: &PrecomputedUtilities, r: usize) -> (Vec<usize>, f64) {
    use itertools::Itertools;
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for open in (0..pre.n_candidates()).combinations(r) {
        let z = FacilityDecision::from_open_set(pre.n_candidates(), &open);
        let q: f64 = (0..pre.n_customers())
            .map(|n| {
                let p = logit(&pre.phi0, &z, pre, n);
                pre.weights[n] * open.iter().map(|&d| p[d]).sum::<f64>()
            })
            .sum();
        if q > best.1 {
            best = (open, q);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tableau_textbook() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6)
        let rows = vec![
            (vec![1.0, 0.0], RowSense::Le, 4.0),
            (vec![0.0, 2.0], RowSense::Le, 12.0),
            (vec![3.0, 2.0], RowSense::Le, 18.0),
        ];
        let OracleLp::Optimal { objective, x } = tableau_lp(&[-3.0, -5.0], &rows) else { panic!() };
        assert_abs_diff_eq!(objective, -36.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn tableau_infeasible_and_unbounded() {
        let rows = vec![(vec![1.0], RowSense::Ge, 2.0), (vec![1.0], RowSense::Le, 1.0)];
        assert_eq!(tableau_lp(&[1.0], &rows), OracleLp::Infeasible);
        let rows = vec![(vec![1.0, -1.0], RowSense::Le, 1.0)];
        assert_eq!(tableau_lp(&[-1.0, 0.0], &rows), OracleLp::Unbounded);
    }

    #[test]
    fn transport_with_redundant_row() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_abs_diff_eq!(transport_lp(&[0.5, 0.5], &[1.0, 0.0], &cost), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn threshold_closed_form() {
        // φ/(φ + 1) = 0.6 → φ = 1.5
        assert_abs_diff_eq!(single_customer_threshold(1.0, 1.0, 1.0, 0.6), 1.5, epsilon = 1e-15);
    }
}
