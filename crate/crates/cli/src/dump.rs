//! Plot-ready tables: per-customer choice distributions before and after
//! the explanation.

use std::io::Write;

use cfx_core::{Explanation, FactualSolution, PrecomputedUtilities};
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionRecord {
    pub customer: usize,
    pub alternative: usize,
    /// `candidate` or `competitor`.
    pub kind: &'static str,
    pub factual: f64,
    pub counterfactual: f64,
}

/// One record per customer and alternative.
pub fn distribution_records(
    pre: &PrecomputedUtilities,
    factual: &FactualSolution,
    expl: &Explanation,
) -> Vec<DistributionRecord> {
    let nd = pre.n_candidates();
    let mut out = Vec::with_capacity(pre.n_customers() * pre.n_locations());
    for (n, (p0, p)) in factual.p0.iter().zip(&expl.distributions).enumerate() {
        for (c, (a, b)) in p0.0.iter().zip(&p.0).enumerate() {
            out.push(DistributionRecord {
                customer: n,
                alternative: c,
                kind: if c < nd { "candidate" } else { "competitor" },
                factual: *a,
                counterfactual: *b,
            });
        }
    }
    out
}

pub fn write_distributions<W: Write>(records: &[DistributionRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
