//! Problem instances: customers, candidate sites, competitors and the fixed
//! utility quantities derived from them.
//!
//! Locations are indexed as one ordered set: candidates first (`0..|D|`),
//! competitors after (`|D|..|D|+|E|`). Every distribution, transport plan and
//! ground-cost matrix in the crate uses that ordering.

use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default slope of the distance term in the deterministic utility.
pub const DEFAULT_UTILITY_SLOPE: f64 = -0.1;
/// Default side length of the square in which sites are drawn.
pub const DEFAULT_BOX_SIDE: f64 = 20.0;
/// Version tag written into every instance file.
pub const INSTANCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error("invalid instance: {0}")]
    Validation(String),
    #[error("failed to parse instance file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub location: [f64; 2],
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub location: [f64; 2],
    /// Factual attractiveness covariate `x⁰_d`.
    pub covariate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Competitor {
    pub location: [f64; 2],
}

/// A competitive facility location instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub customers: Vec<Customer>,
    pub candidates: Vec<Candidate>,
    pub competitors: Vec<Competitor>,
    #[serde(default = "default_slope")]
    pub utility_slope: f64,
}

fn default_schema_version() -> u32 {
    INSTANCE_SCHEMA_VERSION
}

fn default_slope() -> f64 {
    DEFAULT_UTILITY_SLOPE
}

impl Instance {
    pub fn new(
        customers: Vec<Customer>,
        candidates: Vec<Candidate>,
        competitors: Vec<Competitor>,
        utility_slope: f64,
    ) -> Result<Self, InstanceError> {
        let inst = Instance {
            schema_version: INSTANCE_SCHEMA_VERSION,
            customers,
            candidates,
            competitors,
            utility_slope,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn n_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn n_competitors(&self) -> usize {
        self.competitors.len()
    }

    /// Number of alternatives `|C| = |D| + |E|`.
    pub fn n_locations(&self) -> usize {
        self.candidates.len() + self.competitors.len()
    }

    /// Coordinates of location `c` in the combined candidate-then-competitor order.
    pub fn location(&self, c: usize) -> [f64; 2] {
        let d = self.candidates.len();
        if c < d {
            self.candidates[c].location
        } else {
            self.competitors[c - d].location
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.customers.iter().map(|c| c.weight).collect()
    }

    pub fn covariates(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.covariate).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.customers.iter().map(|c| c.weight).sum()
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let bad = |msg: String| Err(InstanceError::Validation(msg));
        if self.customers.is_empty() {
            return bad("`customers` must be non-empty".into());
        }
        if self.candidates.is_empty() {
            return bad("`candidates` must be non-empty".into());
        }
        if self.competitors.is_empty() {
            return bad("`competitors` must be non-empty".into());
        }
        if !self.utility_slope.is_finite() {
            return bad("`utility_slope` must be finite".into());
        }
        for (i, c) in self.customers.iter().enumerate() {
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return bad(format!("customers[{i}].weight must be positive, got {}", c.weight));
            }
            check_point(&c.location, &format!("customers[{i}].location"))?;
        }
        for (i, c) in self.candidates.iter().enumerate() {
            if !c.covariate.is_finite() {
                return bad(format!("candidates[{i}].covariate must be finite"));
            }
            check_point(&c.location, &format!("candidates[{i}].location"))?;
        }
        for (i, c) in self.competitors.iter().enumerate() {
            check_point(&c.location, &format!("competitors[{i}].location"))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, InstanceError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let inst: Instance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }

    /// Writes the instance as JSON. Floats use the shortest representation that
    /// parses back to the identical bit pattern.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

fn check_point(p: &[f64; 2], field: &str) -> Result<(), InstanceError> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(InstanceError::Validation(format!("{field} must be finite")))
    }
}

/// How customer weights `q_n` are assigned by the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Constant(f64),
    Uniform { low: f64, high: f64 },
}

impl Default for WeightRule {
    fn default() -> Self {
        WeightRule::Constant(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub n_customers: usize,
    pub n_candidates: usize,
    pub n_competitors: usize,
    pub box_side: f64,
    pub weight_rule: WeightRule,
    pub utility_slope: f64,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn new(n_customers: usize, n_candidates: usize, n_competitors: usize, seed: u64) -> Self {
        GenerationConfig {
            n_customers,
            n_candidates,
            n_competitors,
            box_side: DEFAULT_BOX_SIDE,
            weight_rule: WeightRule::default(),
            utility_slope: DEFAULT_UTILITY_SLOPE,
            seed,
        }
    }

    fn validate(&self) -> Result<(), InstanceError> {
        let bad = |msg: &str| Err(InstanceError::Config(msg.to_string()));
        if self.n_customers == 0 {
            return bad("n_customers must be at least 1");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if self.n_competitors == 0 {
            return bad("n_competitors must be at least 1");
        }
        if !(self.box_side > 0.0) || !self.box_side.is_finite() {
            return bad("box_side must be positive and finite");
        }
        if !self.utility_slope.is_finite() {
            return bad("utility_slope must be finite");
        }
        match self.weight_rule {
            WeightRule::Constant(w) if !(w > 0.0) || !w.is_finite() => {
                bad("constant weight must be positive")
            }
            WeightRule::Uniform { low, high } if !(low > 0.0 && high >= low && high.is_finite()) => {
                bad("uniform weights need 0 < low <= high")
            }
            _ => Ok(()),
        }
    }
}

/// Draws an instance: all sites i.i.d. uniform on `[0, box_side]²`, factual
/// covariates zero, weights per `weight_rule`. Deterministic in `seed`.
pub fn generate(config: &GenerationConfig) -> Result<Instance, InstanceError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coord = Uniform::new_inclusive(0.0, config.box_side)
        .map_err(|e| InstanceError::Config(e.to_string()))?;
    let point = |rng: &mut ChaCha8Rng| [coord.sample(rng), coord.sample(rng)];

    let mut customers = Vec::with_capacity(config.n_customers);
    for _ in 0..config.n_customers {
        let location = point(&mut rng);
        let weight = match config.weight_rule {
            WeightRule::Constant(w) => w,
            WeightRule::Uniform { low, high } if high > low => {
                Uniform::new_inclusive(low, high)
                    .map_err(|e| InstanceError::Config(e.to_string()))?
                    .sample(&mut rng)
            }
            WeightRule::Uniform { low, .. } => low,
        };
        customers.push(Customer { location, weight });
    }
    let candidates = (0..config.n_candidates)
        .map(|_| Candidate { location: point(&mut rng), covariate: 0.0 })
        .collect();
    let competitors = (0..config.n_competitors)
        .map(|_| Competitor { location: point(&mut rng) })
        .collect();
    Instance::new(customers, candidates, competitors, config.utility_slope)
}

/// Fixed quantities of the choice model that do not depend on the decision or
/// the counterfactual covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedUtilities {
    /// `a_hat[n][d] = exp(slope · dist(n, d))`.
    pub a_hat: Vec<Vec<f64>>,
    /// `b[n][e] = exp(slope · dist(n, e))`.
    pub b: Vec<Vec<f64>>,
    /// `b_sum[n] = Σ_e b[n][e]`.
    pub b_sum: Vec<f64>,
    /// Squared Euclidean distance between locations, over `C × C`.
    pub ground_cost: Vec<Vec<f64>>,
    /// Factual transformed covariates `φ⁰_d = exp(x⁰_d)`.
    pub phi0: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PrecomputedUtilities {
    pub fn n_customers(&self) -> usize {
        self.a_hat.len()
    }

    pub fn n_candidates(&self) -> usize {
        self.phi0.len()
    }

    pub fn n_competitors(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn n_locations(&self) -> usize {
        self.ground_cost.len()
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn precompute(inst: &Instance) -> PrecomputedUtilities {
    let slope = inst.utility_slope;
    let a_hat: Vec<Vec<f64>> = inst
        .customers
        .iter()
        .map(|n| {
            inst.candidates
                .iter()
                .map(|d| (slope * dist(n.location, d.location)).exp())
                .collect()
        })
        .collect();
    let b: Vec<Vec<f64>> = inst
        .customers
        .iter()
        .map(|n| {
            inst.competitors
                .iter()
                .map(|e| (slope * dist(n.location, e.location)).exp())
                .collect()
        })
        .collect();
    let b_sum = b.iter().map(|row| row.iter().sum()).collect();
    let n_loc = inst.n_locations();
    let ground_cost = (0..n_loc)
        .map(|c| {
            let p = inst.location(c);
            (0..n_loc)
                .map(|k| {
                    let q = inst.location(k);
                    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                    dx * dx + dy * dy
                })
                .collect()
        })
        .collect();
    PrecomputedUtilities {
        a_hat,
        b,
        b_sum,
        ground_cost,
        phi0: inst.candidates.iter().map(|c| c.covariate.exp()).collect(),
        weights: inst.weights(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny() -> Instance {
        Instance::new(
            vec![Customer { location: [0.0, 0.0], weight: 1.0 }],
            vec![Candidate { location: [0.0, 0.0], covariate: 0.0 }],
            vec![Competitor { location: [3.0, 4.0] }],
            DEFAULT_UTILITY_SLOPE,
        )
        .unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenerationConfig::new(10, 4, 3, 7);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = GenerationConfig { seed: 8, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn generation_respects_recipe() {
        let inst = generate(&GenerationConfig::new(4, 3, 2, 1)).unwrap();
        assert_eq!(inst.n_locations(), 5);
        assert!(inst.candidates.iter().all(|c| c.covariate == 0.0));
        assert!(inst.customers.iter().all(|c| c.weight == 1.0));
        for c in 0..inst.n_locations() {
            let p = inst.location(c);
            assert!(p.iter().all(|v| (0.0..=20.0).contains(v)));
        }
    }

    #[test]
    fn degenerate_configs_are_rejected() {
        let mut cfg = GenerationConfig::new(4, 3, 2, 1);
        cfg.box_side = 0.0;
        assert!(matches!(generate(&cfg), Err(InstanceError::Config(_))));
        let cfg = GenerationConfig::new(4, 0, 2, 1);
        assert!(matches!(generate(&cfg), Err(InstanceError::Config(_))));
    }

    #[test]
    fn precompute_hand_values() {
        let pre = precompute(&tiny());
        assert_eq!(pre.a_hat[0][0], 1.0);
        assert_relative_eq!(pre.b[0][0], (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(pre.b_sum[0], (-0.5f64).exp(), max_relative = 1e-15);
        assert_eq!(pre.ground_cost[0][1], 25.0);
        assert_eq!(pre.ground_cost[1][0], 25.0);
        assert_eq!(pre.ground_cost[0][0], 0.0);
        assert_eq!(pre.phi0, vec![1.0]);
    }

    #[test]
    fn precomputed_values_are_bounded_and_symmetric() {
        let inst = generate(&GenerationConfig::new(12, 5, 4, 3)).unwrap();
        let pre = precompute(&inst);
        for row in pre.a_hat.iter().chain(pre.b.iter()) {
            assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
        for c in 0..pre.n_locations() {
            assert_eq!(pre.ground_cost[c][c], 0.0);
            for k in 0..pre.n_locations() {
                assert_eq!(pre.ground_cost[c][k], pre.ground_cost[k][c]);
            }
        }
        assert_eq!(precompute(&inst), pre);
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let mut cfg = GenerationConfig::new(6, 3, 2, 11);
        cfg.weight_rule = WeightRule::Uniform { low: 0.5, high: 2.0 };
        let mut inst = generate(&cfg).unwrap();
        inst.candidates[1].covariate = 0.1 + 0.2;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        inst.save(&path).unwrap();
        let back = Instance::load(&path).unwrap();
        assert_eq!(back, inst);
        for (a, b) in back.customers.iter().zip(&inst.customers) {
            assert_eq!(a.location[0].to_bits(), b.location[0].to_bits());
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
        }
    }

    #[test]
    fn missing_field_names_the_field() {
        let text = r#"{"customers": [{"location": [0,0], "weight": 1}],
                       "competitors": [{"location": [1,1]}]}"#;
        let err = Instance::from_json(text).unwrap_err();
        assert!(matches!(err, InstanceError::Parse(_)));
        assert!(err.to_string().contains("candidates"), "{err}");
    }

    #[test]
    fn negative_weight_fails_validation() {
        let text = r#"{"customers": [{"location": [0,0], "weight": -1}],
                       "candidates": [{"location": [1,0], "covariate": 0}],
                       "competitors": [{"location": [1,1]}]}"#;
        let err = Instance::from_json(text).unwrap_err();
        assert!(matches!(err, InstanceError::Validation(_)));
        assert!(err.to_string().contains("weight"));
    }
}
