//! Relative counterfactual explanations for the choice-based competitive
//! facility location problem under multinomial logit demand.

pub mod choice;
pub mod explain;
pub mod factual;
pub mod instance;
pub mod lp;
#[cfg(any(test, feature = "oracles"))]
pub mod oracle;
pub mod transport;

pub use choice::{ChoiceDistribution, FacilityDecision, TransformedCovariates};
pub use explain::{explain, DesiredSpace, Explanation, LowerBoundResult, SolverConfig};
pub use factual::{solve_factual_enumerate, solve_factual_haase, FactualSolution};
pub use instance::{generate, precompute, GenerationConfig, Instance, PrecomputedUtilities};
pub use transport::{wasserstein2, GroundCost, TransportPlan, WassersteinResult};
