//! Group and individual fairness notions.

pub mod distance;
pub mod engine;
pub mod notions;

pub use distance::{braycurtis, heom, hmom, similarity_exp, total_variation, DistanceMetric, PreparedFeatures};
pub use engine::{FairnessConfig, FairnessEngine, NotionValues};
pub use notions::{
    consistency_score_complement, equal_opportunity, individual_fairness, overall_accuracy_equality,
    predictive_equality, predictive_parity, statistical_parity, FairnessValue, NotionSpec,
};
