//! Fairness-aware multi-objective reinforcement learning.
//!
//! Fairness notions evaluated over a history of interactions are appended
//! to the performance reward, and a multi-objective agent learns the
//! trade-offs between them.

pub mod env;
pub mod fairness;
pub mod history;
pub mod mdp;
pub mod neural;
pub mod pareto;
pub mod agents;
pub mod experiment;

pub use fairness::{FairnessConfig, FairnessEngine, FairnessValue};
pub use history::{FairnessHistory, WindowSpec};
pub use mdp::{Environment, Interaction, Objective, RewardVector};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("mdp: {0}")]
    Mdp(String),
    #[error("history: {0}")]
    History(String),
    #[error("config: {0}")]
    Config(String),
    #[error("neural: {0}")]
    Neural(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/fairness-notions.md")]
    pub struct FairnessNotions;
    #[doc = include_str!("../../../book/src/histories.md")]
    pub struct Histories;
    #[doc = include_str!("../../../book/src/distances.md")]
    pub struct Distances;
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub struct Scenarios;
    #[doc = include_str!("../../../book/src/agents.md")]
    pub struct Agents;
    #[doc = include_str!("../../../book/src/pareto.md")]
    pub struct Pareto;
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub struct Experiments;
}
