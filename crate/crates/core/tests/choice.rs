use cfx_core::choice::{
    all_choice_probabilities, captured_demand, captured_demand_gradient, choice_probabilities, probability_jacobian,
    FacilityDecision, TransformedCovariates,
};
use cfx_core::instance::{generate, precompute, GenerationConfig, PrecomputedUtilities};
use proptest::prelude::*;

fn setup(n: usize, d: usize, e: usize, seed: u64) -> PrecomputedUtilities {
    precompute(&generate(&GenerationConfig::new(n, d, e, seed)).unwrap())
}

fn decision(d: usize, mask: u32) -> FacilityDecision {
    let open: Vec<usize> = (0..d).filter(|k| mask >> k & 1 == 1).collect();
    FacilityDecision::from_open_set(d, &open)
}

fn arb_case() -> impl Strategy<Value = (PrecomputedUtilities, Vec<f64>, FacilityDecision)> {
    (1usize..6, 1usize..7, 1usize..4, any::<u64>()).prop_flat_map(|(n, d, e, seed)| {
        let pre = setup(n, d, e, seed);
        (prop::collection::vec(-3.0f64..3.0, d), 0u32..(1 << d))
            .prop_map(move |(x, mask)| (pre.clone(), TransformedCovariates::transform(&x).0, decision(d, mask)))
    })
}

proptest! {
    #[test]
    fn probabilities_normalize((pre, phi, z) in arb_case()) {
        for p in all_choice_probabilities(&phi, &z, &pre) {
            prop_assert!((p.total() - 1.0).abs() <= 1e-12);
            prop_assert!(p.0.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn closed_candidates_are_inert((pre, phi, z) in arb_case(), bump in 0.1f64..10.0) {
        let mut moved = phi.clone();
        for d in 0..phi.len() {
            if !z.is_open(d) {
                moved[d] *= bump;
            }
        }
        prop_assert_eq!(all_choice_probabilities(&phi, &z, &pre), all_choice_probabilities(&moved, &z, &pre));
    }

    #[test]
    fn jacobian_matches_central_differences((pre, phi, z) in arb_case()) {
        for n in 0..pre.n_customers() {
            let jac = probability_jacobian(&phi, &z, &pre, n);
            for d in z.open_indices() {
                let h = 1e-6 * phi[d];
                let mut up = phi.clone();
                let mut down = phi.clone();
                up[d] += h;
                down[d] -= h;
                let pu = choice_probabilities(&up, &z, &pre, n);
                let pd = choice_probabilities(&down, &z, &pre, n);
                for c in 0..pre.n_locations() {
                    let fd = (pu.0[c] - pd.0[c]) / (2.0 * h);
                    let err = (jac[c][d] - fd).abs() / jac[c][d].abs().max(1e-6);
                    prop_assert!(err <= 1e-5, "c={} d={} analytic={} fd={}", c, d, jac[c][d], fd);
                }
            }
        }
    }

    #[test]
    fn demand_is_concave_along_lines((pre, phi, z) in arb_case(), dir in prop::collection::vec(0.0f64..1.0, 6)) {
        // Q(φ + t·v) lies below its tangent at t = 0 for v ≥ 0.
        let v: Vec<f64> = (0..phi.len()).map(|d| dir[d % dir.len()]).collect();
        let q0 = captured_demand(&phi, &z, &pre, &pre.weights);
        let g = captured_demand_gradient(&phi, &z, &pre, &pre.weights);
        let slope: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        for t in [0.1, 1.0, 10.0] {
            let moved: Vec<f64> = phi.iter().zip(&v).map(|(p, v)| p + t * v).collect();
            let q = captured_demand(&moved, &z, &pre, &pre.weights);
            prop_assert!(q <= q0 + t * slope + 1e-12);
            prop_assert!(q >= q0 - 1e-12);
        }
    }
}

#[test]
fn demand_gradient_matches_differences() {
    let pre = setup(12, 5, 3, 4);
    let z = decision(5, 0b10110);
    let phi = vec![0.7, 1.3, 2.0, 0.4, 1.1];
    let g = captured_demand_gradient(&phi, &z, &pre, &pre.weights);
    for d in 0..5 {
        let h = 1e-6;
        let mut up = phi.clone();
        let mut down = phi.clone();
        up[d] += h;
        down[d] -= h;
        let fd = (captured_demand(&up, &z, &pre, &pre.weights) - captured_demand(&down, &z, &pre, &pre.weights)) / (2.0 * h);
        assert!((g[d] - fd).abs() <= 1e-8 * g[d].abs().max(1.0), "d={d}");
    }
}

#[test]
fn covariate_round_trip() {
    let x = vec![-1.5, 0.0, 2.25];
    let back = TransformedCovariates::transform(&x).recover().unwrap();
    for (a, b) in x.iter().zip(&back) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(TransformedCovariates(vec![1.0, 0.0]).recover().is_err());
}
