//! Benchmark fixtures.

use cfx_core::{
    generate, precompute, solve_factual_enumerate, DesiredSpace, FactualSolution, GenerationConfig,
    PrecomputedUtilities,
};

pub struct Fixture {
    pub pre: PrecomputedUtilities,
    pub factual: FactualSolution,
    /// Forces the best-covered closed candidate open.
    pub desired: DesiredSpace,
}

/// Generated market with `e` competitors, its factual optimum at budget `r`
/// and a one-facility desired space.
pub fn fixture(n: usize, d: usize, e: usize, r: usize, seed: u64) -> Fixture {
    let inst = generate(&GenerationConfig::new(n, d, e, seed)).expect("valid generation config");
    let pre = precompute(&inst);
    let factual = solve_factual_enumerate(&pre, r).expect("budget below candidate count");
    let target = (0..d)
        .filter(|&j| !factual.z0.is_open(j))
        .max_by(|&a, &b| {
            let mass = |j: usize| pre.a_hat.iter().map(|row| row[j]).sum::<f64>();
            mass(a).total_cmp(&mass(b))
        })
        .expect("a closed candidate");
    Fixture { pre, factual, desired: DesiredSpace::new(vec![target], vec![]) }
}
