//! Transportation simplex (MODI) on a spanning-tree basis.

use super::{LpError, Tolerances};

#[derive(Clone, Debug)]
pub struct TransportSolution {
    pub plan: Vec<Vec<f64>>,
    pub value: f64,
    /// Row potentials `u`; `u_i + v_j ≤ cost_ij` with equality on the support.
    pub row_potentials: Vec<f64>,
    /// Column potentials `v`.
    pub col_potentials: Vec<f64>,
    pub iterations: usize,
}

/// Solves `min Σ cost_ij π_ij` over couplings of `supplies` and `demands`.
///
/// Marginals must be nonnegative with totals equal within
/// [`Tolerances::marginal_balance`]; the demand side is rescaled to close any
/// remaining drift. Zero-mass rows and columns are removed before solving and
/// come back as zero rows/columns of the plan, with potentials chosen so the
/// full dual stays feasible.
pub fn solve_transportation(
    supplies: &[f64],
    demands: &[f64],
    cost: &[Vec<f64>],
) -> Result<TransportSolution, LpError> {
    let tol = Tolerances::default();
    let (m_full, n_full) = (supplies.len(), demands.len());
    if cost.len() != m_full || cost.iter().any(|row| row.len() != n_full) {
        return Err(LpError::Domain(format!(
            "cost matrix does not match marginals {m_full}x{n_full}"
        )));
    }
    if let Some(v) = supplies.iter().chain(demands).find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(LpError::Domain(format!("marginal entry {v} is negative or not finite")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(LpError::Domain("non-finite transport cost".into()));
    }
    let total_s: f64 = supplies.iter().sum();
    let total_d: f64 = demands.iter().sum();
    if (total_s - total_d).abs() > tol.marginal_balance {
        return Err(LpError::Domain(format!(
            "marginals are unbalanced: {total_s} vs {total_d}"
        )));
    }

    let rows: Vec<usize> = (0..m_full).filter(|&i| supplies[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n_full).filter(|&j| demands[j] > 0.0).collect();
    let mut plan = vec![vec![0.0; n_full]; m_full];
    if rows.is_empty() || cols.is_empty() {
        let u = vec![0.0; m_full];
        let v = (0..n_full)
            .map(|j| cost.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect();
        return Ok(TransportSolution {
            plan,
            value: 0.0,
            row_potentials: u,
            col_potentials: v,
            iterations: 0,
        });
    }
    let scale = total_s / total_d;
    let a: Vec<f64> = rows.iter().map(|&i| supplies[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| demands[j] * scale).collect();
    let nc = cols.len();
    let c: Vec<f64> = rows.iter().flat_map(|&i| cols.iter().map(move |&j| cost[i][j])).collect();

    let mut tree = BasisTree::northwest_corner(&a, &b);
    let iterations = tree.optimize(&c, &tol)?;
    tree.potentials(&c);
    let (u, v) = (&tree.u, &tree.v);

    let mut value = 0.0;
    for (k, &(i, j)) in tree.cells.iter().enumerate() {
        let f = tree.flow[k];
        plan[rows[i]][cols[j]] = f;
        value += f * c[i * nc + j];
    }

    let mut row_pot = vec![f64::NAN; m_full];
    let mut col_pot = vec![f64::NAN; n_full];
    for (k, &i) in rows.iter().enumerate() {
        row_pot[i] = u[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        col_pot[j] = v[k];
    }
    // Zero-mass columns: tightest value that keeps active rows feasible.
    for j in 0..n_full {
        if col_pot[j].is_nan() {
            col_pot[j] = rows
                .iter()
                .map(|&i| cost[i][j] - row_pot[i])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for i in 0..m_full {
        if row_pot[i].is_nan() {
            row_pot[i] = (0..n_full)
                .map(|j| cost[i][j] - col_pot[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    Ok(TransportSolution { plan, value, row_potentials: row_pot, col_potentials: col_pot, iterations })
}

/// Spanning-tree basis over `m` row nodes and `n` column nodes (column `j`
/// is node `m + j`), with scratch space reused across pivots.
struct BasisTree {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    u: Vec<f64>,
    v: Vec<f64>,
    // node adjacency in compressed form: cells of node k are
    // adj[start[k]..start[k + 1]]
    start: Vec<usize>,
    adj: Vec<usize>,
    parent: Vec<usize>,
    queue: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl BasisTree {
    /// Northwest-corner start with exactly `m + n − 1` basic cells (zero-flow
    /// cells kept on ties so the basis stays a spanning tree).
    fn northwest_corner(a: &[f64], b: &[f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let mut cells = Vec::with_capacity(m + n - 1);
        let mut flow = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let f = ra[i].min(rb[j]).max(0.0);
            cells.push((i, j));
            flow.push(f);
            ra[i] -= f;
            rb[j] -= f;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || ra[i] <= rb[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut basic = vec![false; m * n];
        for &(i, j) in &cells {
            basic[i * n + j] = true;
        }
        let nodes = m + n;
        BasisTree {
            m,
            n,
            cells,
            flow,
            basic,
            u: vec![0.0; m],
            v: vec![0.0; n],
            start: vec![0; nodes + 1],
            adj: vec![0; 2 * (nodes - 1)],
            parent: vec![NONE; nodes],
            queue: Vec::with_capacity(nodes),
        }
    }

    fn rebuild_adjacency(&mut self) {
        let m = self.m;
        self.start.fill(0);
        for &(i, j) in &self.cells {
            self.start[i + 1] += 1;
            self.start[m + j + 1] += 1;
        }
        for k in 1..self.start.len() {
            self.start[k] += self.start[k - 1];
        }
        let mut fill = self.start.clone();
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            self.adj[fill[i]] = k;
            fill[i] += 1;
            self.adj[fill[m + j]] = k;
            fill[m + j] += 1;
        }
    }

    fn other_end(&self, node: usize, k: usize) -> usize {
        let (i, j) = self.cells[k];
        if node < self.m {
            self.m + j
        } else {
            i
        }
    }

    /// Breadth-first search from `root`, recording the cell leading to
    /// every node in `parent`.
    fn search(&mut self, root: usize) {
        self.parent.fill(NONE);
        self.queue.clear();
        self.queue.push(root);
        let mut head = 0;
        while head < self.queue.len() {
            let node = self.queue[head];
            head += 1;
            for idx in self.start[node]..self.start[node + 1] {
                let k = self.adj[idx];
                if self.parent[node] == k {
                    continue;
                }
                let other = self.other_end(node, k);
                self.parent[other] = k;
                self.queue.push(other);
            }
        }
    }

    /// Dual potentials with `u[0] = 0`; `c` is row-major `m × n`.
    fn potentials(&mut self, c: &[f64]) {
        self.rebuild_adjacency();
        self.search(0);
        self.u[0] = 0.0;
        for q in 1..self.queue.len() {
            let node = self.queue[q];
            let (i, j) = self.cells[self.parent[node]];
            let cij = c[i * self.n + j];
            if node < self.m {
                self.u[i] = cij - self.v[j];
            } else {
                self.v[j] = cij - self.u[i];
            }
        }
    }

    /// Cells on the tree path from row `i` to column `j`, starting at row
    /// `i`. Uses the search tree rooted at row 0 built by `potentials`.
    fn path(&self, i: usize, j: usize, out: &mut Vec<usize>) {
        // climb both ends to their common ancestor
        let depth = |mut node: usize| {
            let mut d = 0;
            while node != 0 {
                node = self.other_end(node, self.parent[node]);
                d += 1;
            }
            d
        };
        let (mut a, mut b) = (i, self.m + j);
        let (mut da, mut db) = (depth(a), depth(b));
        let mut from_a = Vec::new();
        let mut from_b = Vec::new();
        while da > db {
            let k = self.parent[a];
            from_a.push(k);
            a = self.other_end(a, k);
            da -= 1;
        }
        while db > da {
            let k = self.parent[b];
            from_b.push(k);
            b = self.other_end(b, k);
            db -= 1;
        }
        while a != b {
            let ka = self.parent[a];
            from_a.push(ka);
            a = self.other_end(a, ka);
            let kb = self.parent[b];
            from_b.push(kb);
            b = self.other_end(b, kb);
        }
        out.clear();
        out.extend(from_a);
        out.extend(from_b.into_iter().rev());
    }

    fn optimize(&mut self, c: &[f64], tol: &Tolerances) -> Result<usize, LpError> {
        let cmax = c.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let opt_tol = 1e-12 * cmax;
        let cap = 50 * self.m * self.n + 1000;
        let mut bland = false;
        let mut degenerate = 0usize;
        let mut path = Vec::with_capacity(self.m + self.n);
        for it in 0..cap {
            self.potentials(c);
            let mut enter: Option<(usize, usize, f64)> = None;
            'scan: for i in 0..self.m {
                for j in 0..self.n {
                    if self.basic[i * self.n + j] {
                        continue;
                    }
                    let r = c[i * self.n + j] - self.u[i] - self.v[j];
                    if r < -opt_tol {
                        if bland {
                            enter = Some((i, j, r));
                            break 'scan;
                        }
                        if enter.map_or(true, |(_, _, best)| r < best) {
                            enter = Some((i, j, r));
                        }
                    }
                }
            }
            let Some((ei, ej, _)) = enter else {
                return Ok(it);
            };
            self.path(ei, ej, &mut path);
            let mut theta = f64::INFINITY;
            let mut leave = usize::MAX;
            for &k in path.iter().step_by(2) {
                let f = self.flow[k];
                let better = f < theta || (f == theta && self.cells[k] < self.cells[leave]);
                if better {
                    theta = f;
                    leave = k;
                }
            }
            for (pos, &k) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[k] = (self.flow[k] - theta).max(0.0);
                } else {
                    self.flow[k] += theta;
                }
            }
            let (li, lj) = self.cells[leave];
            self.basic[li * self.n + lj] = false;
            self.basic[ei * self.n + ej] = true;
            self.cells[leave] = (ei, ej);
            self.flow[leave] = theta;
            if theta <= 1e-15 {
                degenerate += 1;
                if degenerate >= tol.degenerate_streak {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
        Err(LpError::IterationLimit(cap))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_marginals_cost_nothing() {
        let p = [0.2, 0.3, 0.5];
        let c = vec![vec![0.0, 1.0, 4.0], vec![1.0, 0.0, 1.0], vec![4.0, 1.0, 0.0]];
        let s = solve_transportation(&p, &p, &c).unwrap();
        assert_abs_diff_eq!(s.value, 0.0, epsilon = 1e-15);
        for i in 0..3 {
            assert_abs_diff_eq!(s.plan[i][i], p[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn point_mass_to_point_mass() {
        let c = vec![vec![0.0, 9.0, 25.0], vec![9.0, 0.0, 4.0], vec![25.0, 4.0, 0.0]];
        let s = solve_transportation(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &c).unwrap();
        assert_eq!(s.value, 25.0);
        assert_eq!(s.plan[0][2], 1.0);
    }

    #[test]
    fn duals_are_feasible_and_tight_on_support() {
        let a = [0.1, 0.0, 0.4, 0.5];
        let b = [0.3, 0.3, 0.0, 0.4];
        let c = vec![
            vec![3.0, 1.0, 7.0, 4.0],
            vec![2.0, 6.0, 5.0, 9.0],
            vec![8.0, 3.0, 3.0, 2.0],
            vec![4.0, 5.0, 1.0, 6.0],
        ];
        let s = solve_transportation(&a, &b, &c).unwrap();
        let dual: f64 = (0..4).map(|i| a[i] * s.row_potentials[i] + b[i] * s.col_potentials[i]).sum();
        assert_abs_diff_eq!(dual, s.value, epsilon = 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                let slack = c[i][j] - s.row_potentials[i] - s.col_potentials[j];
                assert!(slack >= -1e-12, "({i},{j}) slack {slack}");
                if s.plan[i][j] > 0.0 {
                    assert!(slack.abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_marginals() {
        let c = vec![vec![0.0; 2]; 2];
        assert!(matches!(
            solve_transportation(&[-0.1, 1.1], &[0.5, 0.5], &c),
            Err(LpError::Domain(_))
        ));
        assert!(matches!(
            solve_transportation(&[0.5, 0.5], &[0.5, 0.6], &c),
            Err(LpError::Domain(_))
        ));
        assert!(matches!(solve_transportation(&[1.0], &[0.5, 0.5], &c), Err(LpError::Domain(_))));
    }

    #[test]
    fn small_drift_is_rescaled() {
        let c = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let s = solve_transportation(&[0.5, 0.5], &[0.25, 0.75 + 5e-11], &c).unwrap();
        let col0: f64 = s.plan.iter().map(|r| r[0]).sum();
        let total: f64 = s.plan.iter().flatten().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(col0, 0.25, epsilon = 1e-10);
    }
}
