//! Multinomial logit choice model with facility availability.
//!
//! For customer `n` and an open set given by `z`, with
//! `S_n = Σ_k φ_k â_nk z_k + b_n`:
//!
//! ```text
//! p_n(d) = φ_d â_nd z_d / S_n        (candidate d)
//! p_n(e) = b_ne / S_n                (competitor e)
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::PrecomputedUtilities;

#[derive(Debug, Error, PartialEq)]
pub enum ChoiceError {
    #[error("transformed covariate phi[{index}] = {value} is not strictly positive")]
    NonPositivePhi { index: usize, value: f64 },
}

/// Exponentiated facility attractiveness, `φ_d = exp(x_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransformedCovariates(pub Vec<f64>);

impl TransformedCovariates {
    pub fn transform(x: &[f64]) -> Self {
        TransformedCovariates(x.iter().map(|v| v.exp()).collect())
    }

    /// Inverse of [`transform`](Self::transform): `x_d = ln φ_d`.
    pub fn recover(&self) -> Result<Vec<f64>, ChoiceError> {
        self.0
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                if value > 0.0 {
                    Ok(value.ln())
                } else {
                    Err(ChoiceError::NonPositivePhi { index, value })
                }
            })
            .collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Open/closed state of every candidate site.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FacilityDecision {
    pub open: Vec<bool>,
}

impl FacilityDecision {
    pub fn closed(n_candidates: usize) -> Self {
        FacilityDecision { open: vec![false; n_candidates] }
    }

    pub fn from_open_set(n_candidates: usize, open: &[usize]) -> Self {
        let mut z = Self::closed(n_candidates);
        for &d in open {
            z.open[d] = true;
        }
        z
    }

    pub fn is_open(&self, d: usize) -> bool {
        self.open[d]
    }

    pub fn open_indices(&self) -> Vec<usize> {
        self.open.iter().enumerate().filter(|(_, &o)| o).map(|(d, _)| d).collect()
    }

    pub fn n_open(&self) -> usize {
        self.open.iter().filter(|&&o| o).count()
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }
}

/// Choice probabilities of one customer over all of `C`, candidates first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChoiceDistribution(pub Vec<f64>);

impl ChoiceDistribution {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Mass on the candidate block (the first `n_candidates` entries).
    pub fn candidate_mass(&self, n_candidates: usize) -> f64 {
        self.0[..n_candidates].iter().sum()
    }
}

/// `S_n`, the MNL denominator for customer `n`.
pub fn denominator(phi: &[f64], z: &FacilityDecision, pre: &PrecomputedUtilities, n: usize) -> f64 {
    let a = &pre.a_hat[n];
    phi.iter()
        .zip(a)
        .zip(&z.open)
        .filter(|(_, &open)| open)
        .map(|((p, a), _)| p * a)
        .sum::<f64>()
        + pre.b_sum[n]
}

pub fn choice_probabilities(
    phi: &[f64],
    z: &FacilityDecision,
    pre: &PrecomputedUtilities,
    n: usize,
) -> ChoiceDistribution {
    let s = denominator(phi, z, pre, n);
    let a = &pre.a_hat[n];
    let mut p = Vec::with_capacity(pre.n_locations());
    for d in 0..phi.len() {
        p.push(if z.open[d] { phi[d] * a[d] / s } else { 0.0 });
    }
    p.extend(pre.b[n].iter().map(|b| b / s));
    ChoiceDistribution(p)
}

pub fn all_choice_probabilities(
    phi: &[f64],
    z: &FacilityDecision,
    pre: &PrecomputedUtilities,
) -> Vec<ChoiceDistribution> {
    (0..pre.n_customers()).map(|n| choice_probabilities(phi, z, pre, n)).collect()
}

/// Expected captured demand `Q = Σ_n q_n Σ_{d open} p_n(d)`.
pub fn captured_demand(
    phi: &[f64],
    z: &FacilityDecision,
    pre: &PrecomputedUtilities,
    weights: &[f64],
) -> f64 {
    (0..pre.n_customers())
        .map(|n| {
            let s = denominator(phi, z, pre, n);
            weights[n] * (s - pre.b_sum[n]) / s
        })
        .sum()
}

/// Captured demand of each candidate, `Σ_n q_n p_n(d)`.
pub fn captured_demand_by_facility(
    phi: &[f64],
    z: &FacilityDecision,
    pre: &PrecomputedUtilities,
    weights: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; phi.len()];
    for n in 0..pre.n_customers() {
        let s = denominator(phi, z, pre, n);
        for d in z.open_indices() {
            out[d] += weights[n] * phi[d] * pre.a_hat[n][d] / s;
        }
    }
    out
}

/// `∂Q/∂φ_d`; zero for closed candidates.
pub fn captured_demand_gradient(
    phi: &[f64],
    z: &FacilityDecision,
    pre: &PrecomputedUtilities,
    weights: &[f64],
) -> Vec<f64> {
    let mut g = vec![0.0; phi.len()];
    for n in 0..pre.n_customers() {
        let s = denominator(phi, z, pre, n);
        let k = weights[n] * pre.b_sum[n] / (s * s);
        for d in z.open_indices() {
            g[d] += k * pre.a_hat[n][d];
        }
    }
    g
}

/// Jacobian `∂p_n(c)/∂φ_d`, rows over `C`, columns over `D`. Columns of closed
/// candidates are identically zero.
pub fn probability_jacobian(
    phi: &[f64],
    z: &FacilityDecision,
    pre: &PrecomputedUtilities,
    n: usize,
) -> Vec<Vec<f64>> {
    let n_cand = phi.len();
    let s = denominator(phi, z, pre, n);
    let s2 = s * s;
    let a = &pre.a_hat[n];
    let mut jac = vec![vec![0.0; n_cand]; pre.n_locations()];
    for d in z.open_indices() {
        for dp in z.open_indices() {
            let own = if d == dp { a[d] * s } else { 0.0 };
            jac[dp][d] = (own - phi[dp] * a[dp] * a[d]) / s2;
        }
        for (e, b) in pre.b[n].iter().enumerate() {
            jac[n_cand + e][d] = -b * a[d] / s2;
        }
    }
    jac
}
