//! Bounded-variable revised simplex.
//!
//! Every row `i` is turned into `a_i x + s_i = b_i` with a slack whose bounds
//! encode the sense (`≤`: `s ≥ 0`, `≥`: `s ≤ 0`, `=`: `s = 0`). Phase 1 adds
//! one artificial per row whose slack start is infeasible. The basis inverse
//! is stored densely (row-major) and updated by elementary row operations that
//! only touch the nonzeros of the pivot row. Duals are updated incrementally
//! between refactorizations.

use super::{LpError, LpProblem, LpSolution, LpStatus, RowSense, Tolerances};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
}

/// Simplex state that can be re-solved after bound changes (used by
/// branch-and-bound). Costs and the constraint matrix are fixed.
pub struct Simplex {
    m: usize,
    n_struct: usize,
    cols: Vec<Vec<(usize, f64)>>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    x: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    tol: Tolerances,
    warm: bool,
    bland: bool,
    degenerate: usize,
}

enum Primal {
    Optimal,
    Unbounded,
}

impl Simplex {
    pub fn new(problem: &LpProblem, tol: Tolerances) -> Result<Self, LpError> {
        problem.validate()?;
        let n = problem.n_vars();
        let m = problem.n_rows();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + 2 * m];
        for &(i, j, v) in &problem.entries {
            cols[j].push((i, v));
        }
        for col in cols.iter_mut().take(n) {
            col.sort_by_key(|&(i, _)| i);
            // merge duplicate triplets
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for &(i, v) in col.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == i => last.1 += v,
                    _ => merged.push((i, v)),
                }
            }
            *col = merged;
        }
        let mut lower = problem.lower.clone();
        let mut upper = problem.upper.clone();
        let mut cost = problem.cost.clone();
        for (i, sense) in problem.senses.iter().enumerate() {
            cols[n + i].push((i, 1.0));
            cols[n + m + i].push((i, 1.0));
            let (l, u) = match sense {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lower.push(l);
            upper.push(u);
            cost.push(0.0);
        }
        for _ in 0..m {
            lower.push(0.0);
            upper.push(0.0);
            cost.push(0.0);
        }
        let total = n + 2 * m;
        Ok(Simplex {
            m,
            n_struct: n,
            cols,
            cost,
            lower,
            upper,
            rhs: problem.rhs.clone(),
            basis: Vec::new(),
            status: vec![Status::AtLower; total],
            x: vec![0.0; total],
            binv: Vec::new(),
            since_refactor: 0,
            iterations: 0,
            tol,
            warm: false,
            bland: false,
            degenerate: 0,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_struct
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    /// Changes the bounds of structural variable `j`. The current basis is kept
    /// for the next [`solve`](Self::solve).
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(j < self.n_struct, "only structural bounds can change");
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Solves from the current basis if one is available, from scratch otherwise.
    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        for j in 0..self.n_struct {
            if self.lower[j] > self.upper[j] {
                return Ok(self.solution(LpStatus::Infeasible));
            }
        }
        if self.warm {
            if let Some(status) = self.reoptimize()? {
                return Ok(self.solution(status));
            }
        }
        let status = self.cold_solve()?;
        Ok(self.solution(status))
    }

    fn n_total(&self) -> usize {
        self.cols.len()
    }

    fn art(&self, i: usize) -> usize {
        self.n_struct + self.m + i
    }

    fn cold_solve(&mut self) -> Result<LpStatus, LpError> {
        let (n, m) = (self.n_struct, self.m);
        self.bland = false;
        self.degenerate = 0;
        for j in 0..n {
            if self.lower[j].is_finite() {
                self.status[j] = Status::AtLower;
                self.x[j] = self.lower[j];
            } else {
                self.status[j] = Status::AtUpper;
                self.x[j] = self.upper[j];
            }
        }
        let mut residual = self.rhs.clone();
        for j in 0..n {
            if self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    residual[i] -= a * self.x[j];
                }
            }
        }
        self.basis = vec![0; m];
        self.binv = vec![0.0; m * m];
        let mut phase1 = vec![0.0; self.n_total()];
        let mut need_phase1 = false;
        for i in 0..m {
            let s = n + i;
            let a = self.art(i);
            self.lower[a] = 0.0;
            self.upper[a] = 0.0;
            self.status[a] = Status::AtLower;
            self.x[a] = 0.0;
            self.cols[a][0].1 = 1.0;
            let r = residual[i];
            let (ls, us) = (self.lower[s], self.upper[s]);
            if r >= ls - self.tol.primal && r <= us + self.tol.primal {
                self.basis[i] = s;
                self.status[s] = Status::Basic;
                self.x[s] = r;
                self.binv[i * m + i] = 1.0;
            } else {
                let (bound, status) = if r < ls { (ls, Status::AtLower) } else { (us, Status::AtUpper) };
                self.status[s] = status;
                self.x[s] = bound;
                let rr = r - bound;
                let sigma = rr.signum();
                self.cols[a][0].1 = sigma;
                self.upper[a] = f64::INFINITY;
                self.basis[i] = a;
                self.status[a] = Status::Basic;
                self.x[a] = rr.abs();
                self.binv[i * m + i] = sigma;
                phase1[a] = 1.0;
                need_phase1 = true;
            }
        }
        self.since_refactor = 0;

        if need_phase1 {
            self.primal(&phase1)?;
            let infeas: f64 = (0..m).map(|i| self.x[self.art(i)]).sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |acc, b| acc.max(b.abs()));
            for i in 0..m {
                let a = self.art(i);
                self.upper[a] = 0.0;
                if self.status[a] != Status::Basic {
                    self.status[a] = Status::AtLower;
                    self.x[a] = 0.0;
                }
            }
            if infeas > 10.0 * self.tol.primal * scale {
                self.warm = false;
                return Ok(LpStatus::Infeasible);
            }
        }
        let cost = self.cost.clone();
        match self.primal(&cost)? {
            Primal::Optimal => {
                self.warm = true;
                self.polish()
            }
            Primal::Unbounded => {
                self.warm = false;
                Ok(LpStatus::Unbounded)
            }
        }
    }

    /// Warm re-solve after bound changes. Returns `None` when the basis is not
    /// usable and a cold start is needed.
    fn reoptimize(&mut self) -> Result<Option<LpStatus>, LpError> {
        let cost = self.cost.clone();
        let y = self.duals(&cost);
        for j in 0..self.n_total() {
            if self.status[j] == Status::Basic {
                continue;
            }
            let (l, u) = (self.lower[j], self.upper[j]);
            let status = if l == u {
                Status::AtLower
            } else if l.is_finite() && u.is_finite() {
                if self.reduced_cost(&cost, &y, j) >= 0.0 {
                    Status::AtLower
                } else {
                    Status::AtUpper
                }
            } else if l.is_finite() {
                Status::AtLower
            } else {
                Status::AtUpper
            };
            self.status[j] = status;
            self.x[j] = if status == Status::AtLower { l } else { u };
        }
        self.recompute_xb();
        if !self.dual_feasible(&cost, &y) {
            return Ok(None);
        }
        self.bland = false;
        self.degenerate = 0;
        if !self.dual()? {
            return Ok(Some(LpStatus::Infeasible));
        }
        match self.primal(&cost)? {
            Primal::Optimal => self.polish().map(Some),
            Primal::Unbounded => {
                self.warm = false;
                Ok(Some(LpStatus::Unbounded))
            }
        }
    }

    /// Guards against drift in the updated inverse: refactors if the basic
    /// solution does not reproduce the right-hand side, then re-optimizes.
    fn polish(&mut self) -> Result<LpStatus, LpError> {
        for _ in 0..3 {
            if self.residual_norm() <= self.tol.primal {
                return Ok(LpStatus::Optimal);
            }
            self.refactor()?;
            if !self.dual()? {
                return Ok(LpStatus::Infeasible);
            }
            let cost = self.cost.clone();
            if let Primal::Unbounded = self.primal(&cost)? {
                self.warm = false;
                return Ok(LpStatus::Unbounded);
            }
        }
        Ok(LpStatus::Optimal)
    }

    fn residual_norm(&self) -> f64 {
        let mut r = self.rhs.clone();
        for j in 0..self.n_total() {
            if self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * self.x[j];
                }
            }
        }
        r.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        if cb.iter().all(|&c| c == 0.0) {
            return vec![0.0; m];
        }
        let mut y = vec![0.0; m];
        for (i, c) in cb.iter().enumerate() {
            if *c != 0.0 {
                for (yk, b) in y.iter_mut().zip(&self.binv[i * m..(i + 1) * m]) {
                    *yk += c * b;
                }
            }
        }
        y
    }

    /// Row `r` of the basis inverse.
    fn inverse_row(&self, r: usize) -> Vec<f64> {
        self.binv[r * self.m..(r + 1) * self.m].to_vec()
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(i, a)| y[i] * a).sum::<f64>()
    }

    fn dual_feasible(&self, cost: &[f64], y: &[f64]) -> bool {
        (0..self.n_total()).all(|j| {
            if self.status[j] == Status::Basic || self.lower[j] == self.upper[j] {
                return true;
            }
            let d = self.reduced_cost(cost, y, j);
            match self.status[j] {
                Status::AtLower => d >= -self.tol.dual,
                Status::AtUpper => d <= self.tol.dual,
                Status::Basic => true,
            }
        })
    }

    fn column(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let col = &self.cols[q];
        (0..m)
            .map(|i| {
                let row = &self.binv[i * m..(i + 1) * m];
                col.iter().map(|&(k, a)| row[k] * a).sum()
            })
            .collect()
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let mut pivot_row: Vec<(usize, f64)> = Vec::new();
        for (k, v) in self.binv[r * m..(r + 1) * m].iter_mut().enumerate() {
            if *v != 0.0 {
                *v /= piv;
                pivot_row.push((k, *v));
            }
        }
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for &(k, v) in &pivot_row {
                row[k] -= a * v;
            }
        }
        let leaving = self.basis[r];
        debug_assert_ne!(self.status[leaving], Status::Basic);
        self.basis[r] = q;
        self.status[q] = Status::Basic;
        self.since_refactor += 1;
        self.iterations += 1;
    }

    fn tick(&mut self) -> Result<(), LpError> {
        if self.iterations >= self.tol.max_iterations {
            return Err(LpError::IterationLimit(self.tol.max_iterations));
        }
        if self.since_refactor >= self.tol.refactor_every {
            if self.residual_norm() > 0.1 * self.tol.primal {
                self.refactor()?;
            } else {
                self.recompute_xb();
                self.since_refactor = 0;
            }
        }
        Ok(())
    }

    fn note_step(&mut self, step: f64) {
        if step <= 1e-12 {
            self.degenerate += 1;
            if self.degenerate >= self.tol.degenerate_streak {
                self.bland = true;
            }
        } else {
            self.degenerate = 0;
            self.bland = false;
        }
    }

    fn primal(&mut self, cost: &[f64]) -> Result<Primal, LpError> {
        let m = self.m;
        let mut y = self.duals(cost);
        let mut stale = 0usize;
        loop {
            self.tick()?;
            if stale >= self.tol.refactor_every || self.since_refactor == 0 {
                y = self.duals(cost);
                stale = 0;
            }
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.n_total() {
                if self.status[j] == Status::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j);
                let eligible = match self.status[j] {
                    Status::AtLower => d < -self.tol.dual,
                    Status::AtUpper => d > self.tol.dual,
                    Status::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if self.bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.map_or(true, |(_, best)| d.abs() > best.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((q, d_q)) = entering else {
                if stale == 0 {
                    return Ok(Primal::Optimal);
                }
                // confirm optimality against freshly computed duals
                stale = self.tol.refactor_every;
                continue;
            };
            let dir = if self.status[q] == Status::AtLower { 1.0 } else { -1.0 };
            let alpha = self.column(q);

            let limit = |i: usize| -> Option<f64> {
                let a = alpha[i];
                if a.abs() <= self.tol.pivot {
                    return None;
                }
                let rate = -dir * a;
                let j = self.basis[i];
                let xb = self.x[j];
                if rate < 0.0 {
                    self.lower[j].is_finite().then(|| ((xb - self.lower[j]) / -rate).max(0.0))
                } else {
                    self.upper[j].is_finite().then(|| ((self.upper[j] - xb) / rate).max(0.0))
                }
            };
            let mut theta = f64::INFINITY;
            for i in 0..m {
                if let Some(t) = limit(i) {
                    theta = theta.min(t);
                }
            }
            let mut leave: Option<usize> = None;
            if theta.is_finite() {
                let cutoff = theta + 1e-12 * (1.0 + theta);
                for i in 0..m {
                    let Some(t) = limit(i) else { continue };
                    if t > cutoff {
                        continue;
                    }
                    leave = match leave {
                        None => Some(i),
                        Some(best) if self.bland => {
                            if self.basis[i] < self.basis[best] { Some(i) } else { Some(best) }
                        }
                        Some(best) => {
                            if alpha[i].abs() > alpha[best].abs() { Some(i) } else { Some(best) }
                        }
                    };
                }
            }
            let flip = self.upper[q] - self.lower[q];
            if flip <= theta {
                if !flip.is_finite() {
                    return Ok(Primal::Unbounded);
                }
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                for i in 0..m {
                    self.x[self.basis[i]] -= dir * flip * alpha[i];
                }
                self.status[q] = if dir > 0.0 { Status::AtUpper } else { Status::AtLower };
                self.iterations += 1;
                self.note_step(flip);
                continue;
            }
            let r = leave.expect("finite ratio has a row");
            self.x[q] += dir * theta;
            for i in 0..m {
                self.x[self.basis[i]] -= dir * theta * alpha[i];
            }
            let out = self.basis[r];
            if -dir * alpha[r] < 0.0 {
                self.x[out] = self.lower[out];
                self.status[out] = Status::AtLower;
            } else {
                self.x[out] = self.upper[out];
                self.status[out] = Status::AtUpper;
            }
            let step = d_q / alpha[r];
            for (yk, rk) in y.iter_mut().zip(&self.binv[r * m..(r + 1) * m]) {
                *yk += step * rk;
            }
            stale += 1;
            self.pivot(r, q, &alpha);
            self.note_step(theta);
        }
    }

    /// Dual simplex from a dual-feasible basis. Returns `false` when the primal
    /// is infeasible.
    fn dual(&mut self) -> Result<bool, LpError> {
        let m = self.m;
        let cost = self.cost.clone();
        let mut y = self.duals(&cost);
        let mut stale = 0usize;
        loop {
            self.tick()?;
            if stale >= self.tol.refactor_every || self.since_refactor == 0 {
                y = self.duals(&cost);
                stale = 0;
            }
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let j = self.basis[i];
                let v = (self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]);
                if v > self.tol.primal && leave.map_or(true, |(_, best)| v > best) {
                    leave = Some((i, v));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(true);
            };
            let out = self.basis[r];
            let increase = self.x[out] < self.lower[out];
            let rho = self.inverse_row(r);
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.n_total() {
                if self.status[j] == Status::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let a: f64 = self.cols[j].iter().map(|&(i, v)| rho[i] * v).sum();
                let at_lower = self.status[j] == Status::AtLower;
                let ok = if increase {
                    (at_lower && a < -self.tol.pivot) || (!at_lower && a > self.tol.pivot)
                } else {
                    (at_lower && a > self.tol.pivot) || (!at_lower && a < -self.tol.pivot)
                };
                if !ok {
                    continue;
                }
                let d = self.reduced_cost(&cost, &y, j);
                let d = if at_lower { d.max(0.0) } else { (-d).max(0.0) };
                let ratio = d / a.abs();
                entering = match entering {
                    None => Some((j, ratio, a.abs())),
                    Some((bj, br, ba)) => {
                        if ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba) {
                            Some((j, ratio, a.abs()))
                        } else {
                            Some((bj, br, ba))
                        }
                    }
                };
            }
            let Some((q, _, _)) = entering else {
                return Ok(false);
            };
            let d_q = self.reduced_cost(&cost, &y, q);
            let alpha = self.column(q);
            let target = if increase { self.lower[out] } else { self.upper[out] };
            let delta = (self.x[out] - target) / alpha[r];
            self.x[q] += delta;
            for i in 0..m {
                self.x[self.basis[i]] -= alpha[i] * delta;
            }
            self.x[out] = target;
            self.status[out] = if increase { Status::AtLower } else { Status::AtUpper };
            let step = d_q / alpha[r];
            for (yk, rk) in y.iter_mut().zip(&rho) {
                *yk += step * rk;
            }
            stale += 1;
            self.pivot(r, q, &alpha);
        }
    }

    fn recompute_xb(&mut self) {
        let m = self.m;
        let mut v = self.rhs.clone();
        for j in 0..self.n_total() {
            if self.status[j] != Status::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    v[i] -= a * self.x[j];
                }
            }
        }
        let nz: Vec<(usize, f64)> = v.iter().copied().enumerate().filter(|(_, vk)| *vk != 0.0).collect();
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = nz.iter().map(|&(k, vk)| row[k] * vk).sum();
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination with partial
    /// pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m]; // row-major
        for (k, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
                .unwrap_or(c);
            let pv = a[p * m + c];
            if pv.abs() < 1e-12 {
                return Err(LpError::SingularBasis { iterations: self.iterations, pivot: pv });
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            for k in 0..m {
                a[c * m + k] /= pv;
                inv[c * m + k] /= pv;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_xb();
        Ok(())
    }

    fn solution(&self, status: LpStatus) -> LpSolution {
        let n = self.n_struct;
        let x = self.x[..n].to_vec();
        let (duals, reduced_costs) = if status == LpStatus::Optimal {
            let y = self.duals(&self.cost);
            let d = (0..n).map(|j| self.reduced_cost(&self.cost, &y, j)).collect();
            (y, d)
        } else {
            (vec![0.0; self.m], vec![0.0; n])
        };
        let objective = match status {
            LpStatus::Optimal => x.iter().zip(&self.cost).map(|(x, c)| x * c).sum(),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        LpSolution { status, x, duals, reduced_costs, objective, iterations: self.iterations }
    }
}
