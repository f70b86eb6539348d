use cfx_core::factual::{solve_factual_enumerate, solve_factual_enumerate_capped, solve_factual_haase, FactualError};
use cfx_core::instance::{generate, precompute, GenerationConfig};
use cfx_core::lp::BranchOptions;
use cfx_core::oracle::brute_force_factual;

#[test]
fn enumeration_matches_brute_force() {
    for seed in 0..20 {
        let pre = precompute(&generate(&GenerationConfig::new(9, 6, 3, seed)).unwrap());
        for r in 1..=6 {
            let sol = solve_factual_enumerate(&pre, r).unwrap();
            let (open, q) = brute_force_factual(&pre, r);
            assert!((sol.q_factual - q).abs() <= 1e-12);
            assert_eq!(sol.z0.open_indices(), open, "seed {seed} r {r}");
        }
    }
}

#[test]
fn haase_matches_enumeration() {
    for (seed, (n, d, r)) in [(3, 6, 2), (12, 7, 3), (20, 8, 4), (25, 6, 5), (8, 5, 1)].into_iter().enumerate() {
        let pre = precompute(&generate(&GenerationConfig::new(n, d, 4, seed as u64 + 100)).unwrap());
        let enumerated = solve_factual_enumerate(&pre, r).unwrap();
        let haase = solve_factual_haase(&pre, r, &BranchOptions::default()).unwrap();
        assert!((enumerated.q_factual - haase.q_factual).abs() <= 1e-7, "n {n} d {d} r {r}");
        assert!(haase.root_bound.unwrap() >= haase.q_factual - 1e-7);
    }
}

#[test]
fn factual_distributions_are_consistent() {
    let pre = precompute(&generate(&GenerationConfig::new(10, 5, 2, 1)).unwrap());
    let sol = solve_factual_enumerate(&pre, 2).unwrap();
    let mut q = 0.0;
    for (p, w) in sol.p0.iter().zip(&pre.weights) {
        assert!((p.total() - 1.0).abs() < 1e-12);
        for d in 0..5 {
            if !sol.z0.is_open(d) {
                assert_eq!(p.0[d], 0.0);
            }
        }
        q += w * p.candidate_mass(5);
    }
    assert!((q - sol.q_factual).abs() < 1e-12);
}

#[test]
fn invalid_budgets_and_cap() {
    let pre = precompute(&generate(&GenerationConfig::new(4, 3, 1, 0)).unwrap());
    assert!(matches!(solve_factual_enumerate(&pre, 0), Err(FactualError::Budget { .. })));
    assert!(matches!(solve_factual_enumerate(&pre, 4), Err(FactualError::Budget { .. })));
    assert!(matches!(solve_factual_enumerate_capped(&pre, 2, 2), Err(FactualError::CapExceeded { .. })));
}
