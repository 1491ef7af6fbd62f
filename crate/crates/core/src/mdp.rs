//! The fairness-extended MDP contract: objectives, reward vectors, feature
//! vectors, interactions and the episode loop that threads a
//! [`FairnessEngine`] into every step's reward.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fairness::{FairnessConfig, FairnessEngine};
use crate::Error;

/// An objective of the reward vector. The declaration order is the canonical
/// column order used everywhere (reward vectors, tables, radar axes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    /// Performance reward.
    R,
    /// Statistical parity.
    SP,
    /// Equal opportunity.
    EO,
    /// Overall accuracy equality.
    OAE,
    /// Predictive parity.
    PP,
    /// Predictive equality.
    PE,
    /// Individual fairness.
    IF,
    /// Consistency score complement.
    CSC,
}

impl Objective {
    pub const ALL: [Objective; 8] = [
        Objective::R,
        Objective::SP,
        Objective::EO,
        Objective::OAE,
        Objective::PP,
        Objective::PE,
        Objective::IF,
        Objective::CSC,
    ];

    /// The seven fairness notions, without the performance reward.
    pub const NOTIONS: [Objective; 7] = [
        Objective::SP,
        Objective::EO,
        Objective::OAE,
        Objective::PP,
        Objective::PE,
        Objective::IF,
        Objective::CSC,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Objective::R => "R",
            Objective::SP => "SP",
            Objective::EO => "EO",
            Objective::OAE => "OAE",
            Objective::PP => "PP",
            Objective::PE => "PE",
            Objective::IF => "IF",
            Objective::CSC => "CSC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// True for the confusion-matrix based notions.
    pub fn is_group(self) -> bool {
        matches!(
            self,
            Objective::SP | Objective::EO | Objective::OAE | Objective::PP | Objective::PE
        )
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Objective::ALL
            .into_iter()
            .find(|o| o.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown objective `{s}`")))
    }
}

/// Parses a dash-separated objective list such as `R-SP-IF` into canonical
/// order. `R` must be present.
pub fn parse_objectives(s: &str) -> Result<Vec<Objective>, Error> {
    let mut out = Vec::new();
    for part in s.split(['-', ',', '.']).filter(|p| !p.trim().is_empty()) {
        let o: Objective = part.parse()?;
        if out.contains(&o) {
            return Err(Error::Config(format!("objective `{o}` listed twice in `{s}`")));
        }
        out.push(o);
    }
    if !out.contains(&Objective::R) {
        return Err(Error::Config(format!("objective list `{s}` must include R")));
    }
    out.sort();
    Ok(out)
}

/// Formats objectives the way [`parse_objectives`] reads them.
pub fn objectives_label(objectives: &[Objective]) -> String {
    objectives.iter().map(|o| o.label()).collect::<Vec<_>>().join("-")
}

/// A reward vector: the performance reward followed by one value per
/// requested fairness notion, in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub labels: Vec<Objective>,
    pub values: Vec<f64>,
}

impl RewardVector {
    pub fn zeros(labels: &[Objective]) -> Self {
        RewardVector { labels: labels.to_vec(), values: vec![0.0; labels.len()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, objective: Objective) -> Option<f64> {
        self.labels.iter().position(|&l| l == objective).map(|i| self.values[i])
    }

    /// Componentwise accumulation. Both vectors must carry the same labels.
    pub fn add_assign(&mut self, other: &RewardVector) {
        debug_assert_eq!(self.labels, other.labels);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// Values for `objectives`, in the order given. Missing labels yield 0.
    pub fn project(&self, objectives: &[Objective]) -> Vec<f64> {
        objectives.iter().map(|&o| self.get(o).unwrap_or(0.0)).collect()
    }
}

/// Packs a performance reward and fairness values into a canonical reward
/// vector.
pub fn assemble_reward(perf: f64, fairness: &[(Objective, f64)]) -> Result<RewardVector, Error> {
    let mut pairs = Vec::with_capacity(fairness.len() + 1);
    pairs.push((Objective::R, perf));
    for &(o, v) in fairness {
        if pairs.iter().any(|&(l, _)| l == o) {
            return Err(Error::Mdp(format!("duplicate reward label `{o}`")));
        }
        pairs.push((o, v));
    }
    pairs.sort_by_key(|&(o, _)| o);
    Ok(RewardVector {
        labels: pairs.iter().map(|&(o, _)| o).collect(),
        values: pairs.iter().map(|&(_, v)| v).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeature {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub sensitive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalFeature {
    pub name: String,
    pub cardinality: u32,
    #[serde(default)]
    pub sensitive: bool,
}

/// Describes the layout of the [`FeatureVector`]s an environment emits.
/// Sensitive positions never enter a distance computation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub numeric: Vec<NumericFeature>,
    pub nominal: Vec<NominalFeature>,
}

impl FeatureSchema {
    pub fn check(&self, x: &FeatureVector) -> Result<(), Error> {
        if x.numeric.len() != self.numeric.len() || x.nominal.len() != self.nominal.len() {
            return Err(Error::Mdp(format!(
                "feature vector has {}+{} values, schema expects {}+{}",
                x.numeric.len(),
                x.nominal.len(),
                self.numeric.len(),
                self.nominal.len()
            )));
        }
        Ok(())
    }
}

/// The person or transaction acted upon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub numeric: Vec<f64>,
    pub nominal: Vec<u32>,
}

/// Identifies a group (e.g. "women", "continent A").
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

/// One agent-environment interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub t: u64,
    pub state: Vec<f64>,
    pub individual: FeatureVector,
    pub groups: Vec<GroupId>,
    pub action: usize,
    pub action_dist: Vec<f64>,
    pub reward: RewardVector,
    pub feedback: Option<usize>,
}

impl Interaction {
    pub fn validate(&self, action_count: usize) -> Result<(), Error> {
        if self.action >= action_count {
            return Err(Error::Mdp(format!("action {} out of range", self.action)));
        }
        if self.action_dist.len() != action_count {
            return Err(Error::Mdp(format!(
                "action distribution has {} entries for {} actions",
                self.action_dist.len(),
                action_count
            )));
        }
        let total: f64 = self.action_dist.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.action_dist.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Mdp(format!("action distribution sums to {total}")));
        }
        if self.groups.is_empty() {
            return Err(Error::Mdp(format!("interaction {} has no group", self.t)));
        }
        if let Some(f) = self.feedback {
            if f >= action_count {
                return Err(Error::Mdp(format!("feedback {f} out of range")));
            }
        }
        Ok(())
    }
}

/// What an environment reports after one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub feedback: Option<usize>,
    pub individual: FeatureVector,
    pub groups: Vec<GroupId>,
    pub done: bool,
}

/// A sequential decision problem with feedback signals.
///
/// Implementations must be deterministic given the seed passed to
/// [`Environment::reset`].
pub trait Environment {
    fn action_count(&self) -> usize;
    fn observation_size(&self) -> usize;
    fn horizon(&self) -> usize;
    fn schema(&self) -> FeatureSchema;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: usize) -> StepOutcome;
}

/// An action and the distribution it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub action: usize,
    pub distribution: Vec<f64>,
}

impl Decision {
    pub fn deterministic(action: usize, action_count: usize) -> Self {
        let mut distribution = vec![0.0; action_count];
        distribution[action] = 1.0;
        Decision { action, distribution }
    }
}

pub trait ActionSelector {
    fn select(&mut self, observation: &[f64]) -> Decision;

    /// Called with the full reward vector after every step.
    fn observe(&mut self, _reward: &RewardVector) {}

    /// Called once when the episode ends. `terminal` is false when the episode
    /// was cut short by `max_steps`.
    fn end_episode(&mut self, _terminal: bool) {}
}

/// Always picks the same action.
#[derive(Debug, Clone)]
pub struct FixedAction {
    pub action: usize,
    pub action_count: usize,
}

impl ActionSelector for FixedAction {
    fn select(&mut self, _observation: &[f64]) -> Decision {
        Decision::deterministic(self.action, self.action_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub interactions: Vec<Interaction>,
    pub returns: RewardVector,
    /// The episode hit `max_steps` before the environment finished.
    pub truncated: bool,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }
}

/// Runs one episode. Every interaction's reward holds the fairness values
/// evaluated after that interaction joined the history. The engine is not
/// reset, so a history may span several episodes.
pub fn run_episode<E, P>(
    env: &mut E,
    seed: u64,
    policy: &mut P,
    engine: &mut FairnessEngine,
    max_steps: usize,
) -> Result<EpisodeTrace, Error>
where
    E: Environment + ?Sized,
    P: ActionSelector + ?Sized,
{
    let labels = engine.config().objectives.clone();
    let mut returns = RewardVector::zeros(&labels);
    let mut interactions = Vec::new();
    let mut obs = env.reset(seed);
    let limit = env.horizon();
    let mut terminal = limit == 0;
    let mut truncated = false;
    let actions = env.action_count();

    for step in 0..limit {
        if step >= max_steps {
            truncated = true;
            break;
        }
        let decision = policy.select(&obs);
        let outcome = env.step(decision.action);
        let mut interaction = Interaction {
            t: engine.clock(),
            state: std::mem::take(&mut obs),
            individual: outcome.individual,
            groups: outcome.groups,
            action: decision.action,
            action_dist: decision.distribution,
            reward: RewardVector { labels: vec![Objective::R], values: vec![outcome.reward] },
            feedback: outcome.feedback,
        };
        interaction.validate(actions)?;
        let values = engine.push(&interaction)?;
        interaction.reward = values.reward(outcome.reward, &labels);
        policy.observe(&interaction.reward);
        returns.add_assign(&interaction.reward);
        interactions.push(interaction);
        obs = outcome.observation;
        if outcome.done || step + 1 == limit {
            terminal = true;
            break;
        }
    }
    if limit > 0 {
        policy.end_episode(terminal && !truncated);
    }
    Ok(EpisodeTrace { interactions, returns, truncated })
}

/// First line of a trace file: everything needed to recompute fairness
/// offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: FeatureSchema,
    pub fairness: FairnessConfig,
    pub action_count: usize,
}

/// Writes a header line followed by one interaction per line.
pub fn write_trace<W: Write>(mut w: W, header: &TraceHeader, trace: &EpisodeTrace) -> Result<(), Error> {
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for x in &trace.interactions {
        serde_json::to_writer(&mut w, x)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<(TraceHeader, Vec<Interaction>), Error> {
    let mut lines = r.lines();
    let header_line = lines.next().ok_or_else(|| Error::Mdp("empty trace file".into()))??;
    let header: TraceHeader = serde_json::from_str(&header_line)?;
    let mut interactions = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        interactions.push(serde_json::from_str(&line)?);
    }
    Ok((header, interactions))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assemble_packs_and_orders() {
        let r = assemble_reward(0.3, &[(Objective::SP, -0.1)]).unwrap();
        assert_eq!(r.labels, vec![Objective::R, Objective::SP]);
        assert_eq!(r.values, vec![0.3, -0.1]);

        let r = assemble_reward(0.0, &[]).unwrap();
        assert_eq!(r.labels, vec![Objective::R]);
        assert_eq!(r.values, vec![0.0]);

        let r = assemble_reward(0.3, &[(Objective::IF, -0.2), (Objective::SP, -0.1)]).unwrap();
        assert_eq!(r.labels, vec![Objective::R, Objective::SP, Objective::IF]);
        assert_eq!(r.values, vec![0.3, -0.1, -0.2]);
    }

    #[test]
    fn assemble_rejects_duplicates() {
        assert!(assemble_reward(0.0, &[(Objective::SP, -0.1), (Objective::SP, 0.0)]).is_err());
        assert!(assemble_reward(0.0, &[(Objective::R, 1.0)]).is_err());
    }

    #[test]
    fn objective_lists_parse_canonically() {
        assert_eq!(
            parse_objectives("IF-R-SP").unwrap(),
            vec![Objective::R, Objective::SP, Objective::IF]
        );
        assert!(parse_objectives("SP-IF").is_err());
        assert!(parse_objectives("R-XX").is_err());
        assert_eq!(objectives_label(&Objective::ALL), "R-SP-EO-OAE-PP-PE-IF-CSC");
    }

    #[test]
    fn interaction_validation() {
        let mut x = Interaction {
            t: 0,
            state: vec![],
            individual: FeatureVector::default(),
            groups: vec![GroupId(0)],
            action: 1,
            action_dist: vec![0.25, 0.75],
            reward: RewardVector::zeros(&[Objective::R]),
            feedback: Some(0),
        };
        assert!(x.validate(2).is_ok());
        x.action_dist = vec![0.5, 0.6];
        assert!(x.validate(2).is_err());
        x.action_dist = vec![0.5, 0.5];
        x.groups.clear();
        assert!(x.validate(2).is_err());
        x.groups.push(GroupId(1));
        x.feedback = Some(2);
        assert!(x.validate(2).is_err());
    }
}
