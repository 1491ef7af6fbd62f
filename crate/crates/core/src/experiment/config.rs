//! Declarative experiment files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{DqnConfig, PcnConfig};
use crate::env::fraud::{FraudBiasSpec, FraudGenSpec};
use crate::env::hiring::{BiasSpec, HiringConfig, PopulationPreset, PopulationSpec};
use crate::env::Scenario;
use crate::fairness::DistanceMetric;
use crate::history::WindowSpec;
use crate::mdp::{objectives_label, parse_objectives, Objective};
use crate::pareto::{FRAUD_REWARD_MAX, HIRING_REWARD_MAX};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Hiring,
    Fraud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[default]
    Pcn,
    Dqn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Normalization {
    pub hiring_reward_max: f64,
    pub fraud_reward_max: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization { hiring_reward_max: HIRING_REWARD_MAX, fraud_reward_max: FRAUD_REWARD_MAX }
    }
}

fn default_windows() -> Vec<WindowSpec> {
    vec![WindowSpec::sliding(500)]
}

fn default_distances() -> Vec<DistanceMetric> {
    vec![DistanceMetric::Heom]
}

fn default_labels() -> Vec<String> {
    vec!["default".into()]
}

fn default_biases() -> Vec<String> {
    vec!["none".into()]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_steps() -> usize {
    500_000
}

fn default_eval_episodes() -> usize {
    5
}

fn default_representatives() -> usize {
    10
}

fn default_candidates() -> usize {
    32
}

fn default_trace_interval() -> usize {
    1000
}

fn default_lambda() -> f64 {
    0.1
}

fn default_k() -> usize {
    5
}

/// One experiment file. Every list is a grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioName,
    #[serde(default)]
    pub agent: AgentKind,
    /// Objective sets such as `"R-SP-IF"`.
    pub objectives: Vec<String>,
    #[serde(default = "default_windows")]
    pub windows: Vec<WindowSpec>,
    #[serde(default = "default_distances")]
    pub distances: Vec<DistanceMetric>,
    #[serde(default = "default_labels")]
    pub populations: Vec<String>,
    #[serde(default = "default_biases")]
    pub biases: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_representatives")]
    pub representatives: usize,
    /// Buffered commands evaluated per seed before the final selection.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_trace_interval")]
    pub trace_interval: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Also write one evaluation episode per cell as a replayable trace.
    #[serde(default)]
    pub traces: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub hiring: HiringConfig,
    #[serde(default)]
    pub fraud: FraudGenSpec,
    #[serde(default)]
    pub pcn: PcnConfig,
    #[serde(default)]
    pub dqn: DqnConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `FAREL_SEED` and `FAREL_STEPS` from `lookup`.
    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), Error> {
        if let Some(s) = lookup("FAREL_SEED") {
            let seed = s.trim().parse().map_err(|_| Error::Config(format!("FAREL_SEED={s} is not a seed")))?;
            self.seeds = vec![seed];
        }
        if let Some(s) = lookup("FAREL_STEPS") {
            self.steps =
                s.trim().parse().map_err(|_| Error::Config(format!("FAREL_STEPS={s} is not a count")))?;
        }
        self.validate()
    }

    pub fn apply_env_overrides(&mut self) -> Result<(), Error> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    pub fn objective_sets(&self) -> Result<Vec<Vec<Objective>>, Error> {
        self.objectives.iter().map(|s| parse_objectives(s)).collect()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let sets = self.objective_sets()?;
        if sets.is_empty() {
            return Err(Error::Config("no objective sets".into()));
        }
        for set in &sets {
            if !set.contains(&Objective::R) {
                return Err(Error::Config(format!("objective set {} lacks R", objectives_label(set))));
            }
        }
        for w in &self.windows {
            w.validate()?;
        }
        let axes = [
            ("windows", self.windows.len()),
            ("distances", self.distances.len()),
            ("populations", self.populations.len()),
            ("biases", self.biases.len()),
            ("seeds", self.seeds.len()),
        ];
        for (name, n) in axes {
            if n == 0 {
                return Err(Error::Config(format!("{name} is empty")));
            }
        }
        for p in &self.populations {
            self.population(p)?;
        }
        for b in &self.biases {
            self.scenario_for(&self.populations[0], b)?;
        }
        if self.steps == 0 || self.eval_episodes == 0 || self.representatives == 0 {
            return Err(Error::Config("steps, eval_episodes and representatives must be positive".into()));
        }
        if self.trace_interval == 0 || self.candidates == 0 {
            return Err(Error::Config("trace_interval and candidates must be positive".into()));
        }
        if !(self.lambda > 0.0) || self.k == 0 {
            return Err(Error::Config("lambda and k must be positive".into()));
        }
        match self.scenario {
            ScenarioName::Hiring => self.hiring.population.validate()?,
            ScenarioName::Fraud => self.fraud.validate()?,
        }
        Ok(())
    }

    fn population(&self, name: &str) -> Result<Option<PopulationSpec>, Error> {
        match self.scenario {
            ScenarioName::Hiring => {
                let preset = PopulationPreset::parse(name)
                    .ok_or_else(|| Error::Config(format!("unknown hiring population {name:?}")))?;
                Ok(Some(PopulationSpec { joint: preset.joint(), ..self.hiring.population.clone() }))
            }
            ScenarioName::Fraud if name == "default" => Ok(None),
            ScenarioName::Fraud => Err(Error::Config(format!("fraud has no population preset {name:?}"))),
        }
    }

    fn scenario_for(&self, population: &str, bias: &str) -> Result<Scenario, Error> {
        let unknown = || Error::Config(format!("unknown {} bias {bias:?}", self.scenario_label()));
        Ok(match self.scenario {
            ScenarioName::Hiring => {
                let mut c = self.hiring.clone();
                c.population = self.population(population)?.expect("hiring population");
                c.bias = BiasSpec { amount: c.bias.amount, ..BiasSpec::parse(bias).ok_or_else(unknown)? };
                Scenario::Hiring(c)
            }
            ScenarioName::Fraud => {
                let mut c = self.fraud.clone();
                c.bias = FraudBiasSpec { amount: c.bias.amount, ..FraudBiasSpec::parse(bias).ok_or_else(unknown)? };
                Scenario::Fraud(c)
            }
        })
    }

    fn scenario_label(&self) -> &'static str {
        match self.scenario {
            ScenarioName::Hiring => "hiring",
            ScenarioName::Fraud => "fraud",
        }
    }

    pub fn reward_max(&self) -> f64 {
        match self.scenario {
            ScenarioName::Hiring => self.normalization.hiring_reward_max,
            ScenarioName::Fraud => self.normalization.fraud_reward_max,
        }
    }

    /// Every grid cell, seeds innermost.
    pub fn cells(&self) -> Result<Vec<Cell>, Error> {
        let mut out = Vec::new();
        for objectives in self.objective_sets()? {
            for window in &self.windows {
                for distance in &self.distances {
                    for population in &self.populations {
                        for bias in &self.biases {
                            let scenario = self.scenario_for(population, bias)?;
                            for &seed in &self.seeds {
                                out.push(Cell {
                                    scenario: scenario.clone(),
                                    agent: self.agent,
                                    objectives: objectives.clone(),
                                    window: *window,
                                    distance: *distance,
                                    population: population.clone(),
                                    bias: bias.clone(),
                                    seed,
                                    steps: self.steps,
                                    eval_episodes: self.eval_episodes,
                                    representatives: self.representatives,
                                    candidates: self.candidates,
                                    trace_interval: self.trace_interval,
                                    lambda: self.lambda,
                                    k: self.k,
                                    traces: self.traces,
                                    reward_max: self.reward_max(),
                                    pcn: self.pcn.clone(),
                                    dqn: self.dqn.clone(),
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One seed of one configuration: everything a run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub scenario: Scenario,
    pub agent: AgentKind,
    pub objectives: Vec<Objective>,
    pub window: WindowSpec,
    pub distance: DistanceMetric,
    pub population: String,
    pub bias: String,
    pub seed: u64,
    pub steps: usize,
    pub eval_episodes: usize,
    pub representatives: usize,
    pub candidates: usize,
    pub trace_interval: usize,
    pub lambda: f64,
    pub k: usize,
    pub traces: bool,
    pub reward_max: f64,
    pub pcn: PcnConfig,
    pub dqn: DqnConfig,
}

impl Cell {
    /// Directory of the configuration this seed belongs to.
    pub fn group(&self) -> String {
        format!(
            "{}_{}_{}_{}_{}_{}",
            objectives_label(&self.objectives),
            self.window.label(),
            self.distance.label(),
            self.population,
            self.bias,
            match self.agent {
                AgentKind::Pcn => "pcn",
                AgentKind::Dqn => "dqn",
            }
        )
    }

    pub fn relative_dir(&self) -> PathBuf {
        PathBuf::from(self.group()).join(format!("seed{}", self.seed))
    }

    /// Hex sha256 of the cell's canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("cells serialize");
        hex::encode(Sha256::digest(&json))
    }
}
