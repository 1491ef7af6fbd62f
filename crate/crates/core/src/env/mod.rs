//! Simulated scenarios.

pub mod fraud;
pub mod hiring;

use serde::{Deserialize, Serialize};

use crate::mdp::{Environment, GroupId};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "lowercase")]
pub enum Scenario {
    Hiring(hiring::HiringConfig),
    Fraud(fraud::FraudGenSpec),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Hiring(_) => "hiring",
            Scenario::Fraud(_) => "fraud",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment + Send>, Error> {
        Ok(match self {
            Scenario::Hiring(c) => Box::new(hiring::HiringEnv::new(c.clone())?),
            Scenario::Fraud(c) => Box::new(fraud::FraudEnv::new(c.clone())?),
        })
    }

    /// The protected and reference groups used by group notions.
    pub fn default_groups(&self) -> (GroupId, GroupId) {
        match self {
            Scenario::Hiring(_) => (hiring::WOMEN, hiring::MEN),
            Scenario::Fraud(_) => (fraud::CONTINENT_A, fraud::CONTINENT_B),
        }
    }
}

/// Human-readable description of a scenario's defaults and schema.
pub fn describe(name: &str) -> Option<String> {
    match name {
        "hiring" => Some(hiring::describe()),
        "fraud" => Some(fraud::describe()),
        _ => None,
    }
}
