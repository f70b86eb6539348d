use cfx_core::lp::{solve_binary_milp, solve_lp, BranchOptions, LpProblem, LpStatus, MilpStatus, RowSense};
use cfx_core::oracle::{tableau_lp, OracleLp};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Random {
    cost: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<(Vec<f64>, RowSense, f64)>,
}

fn random_lp(seed: u64, m: usize, n: usize) -> Random {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let upper = (0..n)
        .map(|_| if rng.random_bool(0.3) { rng.random_range(0.5..5.0) } else { f64::INFINITY })
        .collect();
    let mut rows = Vec::with_capacity(m + 1);
    for _ in 0..m {
        let a: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.6) { rng.random_range(-3.0..3.0) } else { 0.0 })
            .collect();
        let sense = match rng.random_range(0..4) {
            0 => RowSense::Ge,
            1 => RowSense::Eq,
            _ => RowSense::Le,
        };
        rows.push((a, sense, rng.random_range(-2.0..10.0)));
    }
    // keeps most instances bounded
    rows.push((vec![1.0; n], RowSense::Le, 50.0));
    Random { cost, upper, rows }
}

fn as_problem(r: &Random) -> LpProblem {
    let mut p = LpProblem::new();
    for (c, u) in r.cost.iter().zip(&r.upper) {
        p.add_var(*c, 0.0, *u);
    }
    for (a, sense, b) in &r.rows {
        let coefs: Vec<(usize, f64)> = a.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        p.add_row(&coefs, *sense, *b);
    }
    p
}

fn oracle(r: &Random) -> OracleLp {
    let n = r.cost.len();
    let mut rows = r.rows.clone();
    for (j, u) in r.upper.iter().enumerate() {
        if u.is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, RowSense::Le, *u));
        }
    }
    tableau_lp(&r.cost, &rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]
    #[test]
    fn revised_simplex_matches_tableau(seed in any::<u64>()) {
        let r = random_lp(seed, 10, 20);
        let sol = solve_lp(&as_problem(&r)).unwrap();
        match oracle(&r) {
            OracleLp::Optimal { objective, .. } => {
                prop_assert_eq!(sol.status, LpStatus::Optimal);
                prop_assert!((sol.objective - objective).abs() <= 1e-7 * (1.0 + objective.abs()),
                    "{} vs {}", sol.objective, objective);
                let activity = as_problem(&r).row_activity(&sol.x);
                for ((_, sense, b), &act) in r.rows.iter().zip(&activity) {
                    let ok = match sense {
                        RowSense::Le => act <= b + 1e-7,
                        RowSense::Ge => act >= b - 1e-7,
                        RowSense::Eq => (act - b).abs() <= 1e-7,
                    };
                    prop_assert!(ok);
                }
            }
            OracleLp::Infeasible => prop_assert_eq!(sol.status, LpStatus::Infeasible),
            OracleLp::Unbounded => prop_assert_eq!(sol.status, LpStatus::Unbounded),
        }
    }
}

#[test]
fn binary_branch_and_bound_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let k = 8;
        let cost: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..2.0)).collect();
        let weights: Vec<Vec<f64>> = (0..3).map(|_| (0..k).map(|_| rng.random_range(0.0..3.0)).collect()).collect();
        let caps: Vec<f64> = (0..3).map(|_| rng.random_range(2.0..8.0)).collect();
        let mut p = LpProblem::new();
        let vars: Vec<usize> = cost.iter().map(|c| p.add_var(*c, 0.0, 1.0)).collect();
        for (w, cap) in weights.iter().zip(&caps) {
            let coefs: Vec<(usize, f64)> = vars.iter().zip(w).map(|(j, a)| (*j, *a)).collect();
            p.add_row(&coefs, RowSense::Le, *cap);
        }
        let sol = solve_binary_milp(&p, &vars, &BranchOptions::default()).unwrap();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << k) {
            let x: Vec<f64> = (0..k).map(|j| (mask >> j & 1) as f64).collect();
            let fits = weights.iter().zip(&caps).all(|(w, cap)| w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= *cap);
            if fits {
                best = best.min(cost.iter().zip(&x).map(|(a, b)| a * b).sum());
            }
        }
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.objective - best).abs() <= 1e-9, "{} vs {best}", sol.objective);
        assert!(sol.root_bound <= sol.objective + 1e-9);
    }
}
