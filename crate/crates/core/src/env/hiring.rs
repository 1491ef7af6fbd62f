//! Job hiring: an agent screens a stream of applicants for a company.
//!
//! The company is summarised by five team features, each normalised by the
//! target team size `K`. An applicant's goodness is how much hiring them
//! would move those features.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::history::POSITIVE_ACTION;
use crate::mdp::{
    Environment, FeatureSchema, FeatureVector, GroupId, NominalFeature, NumericFeature, StepOutcome,
};
use crate::Error;

pub const REJECT: usize = 0;
pub const HIRE: usize = 1;

pub const MEN: GroupId = GroupId(0);
pub const WOMEN: GroupId = GroupId(1);
pub const BELGIAN: GroupId = GroupId(2);
pub const FOREIGN: GroupId = GroupId(3);

pub const MIN_AGE: u32 = 18;
pub const MAX_AGE: u32 = 65;
/// Longest possible career, used to normalise experience.
pub const MAX_EXPERIENCE: u32 = MAX_AGE - MIN_AGE;
pub const LANGUAGES: usize = 4;
pub const COMPANY_FEATURES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Man,
    Woman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nationality {
    Belgian,
    Foreign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Applicant {
    pub gender: Gender,
    pub nationality: Nationality,
    /// 0 single, 1 married, 2 divorced, 3 widowed.
    pub marital_status: u32,
    pub age: u32,
    pub degree: bool,
    pub extra_degree: bool,
    pub experience: u32,
    pub languages: [bool; LANGUAGES],
}

impl Applicant {
    pub fn groups(&self) -> Vec<GroupId> {
        let g = match self.gender {
            Gender::Man => MEN,
            Gender::Woman => WOMEN,
        };
        let n = match self.nationality {
            Nationality::Belgian => BELGIAN,
            Nationality::Foreign => FOREIGN,
        };
        vec![g, n]
    }

    pub fn features(&self) -> FeatureVector {
        let mut nominal = vec![
            (self.gender == Gender::Woman) as u32,
            (self.nationality == Nationality::Foreign) as u32,
            self.marital_status,
            self.degree as u32,
            self.extra_degree as u32,
        ];
        nominal.extend(self.languages.iter().map(|&l| l as u32));
        FeatureVector { numeric: vec![self.age as f64, self.experience as f64], nominal }
    }

    /// Share of `{degree, extra degree, experience}` that is non-zero.
    fn potential(&self) -> f64 {
        let held = self.degree as u32 + self.extra_degree as u32 + (self.experience > 0) as u32;
        held as f64 / 3.0
    }

    fn encode(&self, out: &mut Vec<f64>) {
        out.push((self.gender == Gender::Woman) as u8 as f64);
        out.push((self.nationality == Nationality::Foreign) as u8 as f64);
        out.push((self.age - MIN_AGE) as f64 / MAX_EXPERIENCE as f64);
        out.push(self.marital_status as f64 / 3.0);
        out.push(self.degree as u8 as f64);
        out.push(self.extra_degree as u8 as f64);
        out.push(self.experience as f64 / MAX_EXPERIENCE as f64);
        out.extend(self.languages.iter().map(|&l| l as u8 as f64));
    }
}

pub fn schema() -> FeatureSchema {
    let nominal = |name: &str, cardinality: u32, sensitive: bool| NominalFeature {
        name: name.into(),
        cardinality,
        sensitive,
    };
    let mut nominals = vec![
        nominal("gender", 2, true),
        nominal("nationality", 2, true),
        nominal("marital_status", 4, true),
        nominal("degree", 2, false),
        nominal("extra_degree", 2, false),
    ];
    for lang in ["dutch", "french", "english", "german"] {
        nominals.push(nominal(lang, 2, false));
    }
    FeatureSchema {
        numeric: vec![
            NumericFeature { name: "age".into(), min: MIN_AGE as f64, max: MAX_AGE as f64, sensitive: true },
            NumericFeature {
                name: "experience".into(),
                min: 0.0,
                max: MAX_EXPERIENCE as f64,
                sensitive: false,
            },
        ],
        nominal: nominals,
    }
}

pub fn max_experience(age: u32, degree: bool, extra_degree: bool) -> u32 {
    let spent = MIN_AGE + 3 * degree as u32 + 2 * extra_degree as u32;
    age.saturating_sub(spent)
}

/// `P(year) = (year + 1) / sum_{y <= max_e} (y + 1)`.
pub fn experience_probability(year: u32, max_e: u32) -> f64 {
    if year > max_e {
        return 0.0;
    }
    let total = (max_e as f64 + 1.0) * (max_e as f64 + 2.0) / 2.0;
    (year as f64 + 1.0) / total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationPreset {
    Default,
    Gender,
    NationalityGender,
}

impl PopulationPreset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "default" => Some(PopulationPreset::Default),
            "gender" => Some(PopulationPreset::Gender),
            "nationality-gender" | "nationality_gender" => Some(PopulationPreset::NationalityGender),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PopulationPreset::Default => "default",
            PopulationPreset::Gender => "gender",
            PopulationPreset::NationalityGender => "nationality-gender",
        }
    }

    /// Joint proportions for (Belgian man, Belgian woman, foreign man,
    /// foreign woman).
    pub fn joint(self) -> [f64; 4] {
        match self {
            PopulationPreset::Default => [0.30, 0.31, 0.20, 0.19],
            // men to 70% with the nationality split unchanged
            PopulationPreset::Gender => [0.61 * 0.7, 0.61 * 0.3, 0.39 * 0.7, 0.39 * 0.3],
            PopulationPreset::NationalityGender => [0.40, 0.40, 0.15, 0.05],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    /// (Belgian man, Belgian woman, foreign man, foreign woman).
    pub joint: [f64; 4],
    pub degree: f64,
    /// Probability of an extra degree given a degree.
    pub extra_degree: f64,
    pub languages: [f64; LANGUAGES],
    pub marital_status: [f64; 4],
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec::preset(PopulationPreset::Default)
    }
}

impl PopulationSpec {
    pub fn preset(preset: PopulationPreset) -> Self {
        PopulationSpec {
            joint: preset.joint(),
            degree: 0.45,
            extra_degree: 0.3,
            languages: [0.6, 0.4, 0.2, 0.1],
            marital_status: [0.45, 0.40, 0.10, 0.05],
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let total: f64 = self.joint.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.joint.iter().any(|&p| p < 0.0) {
            return Err(Error::Config(format!("population proportions sum to {total}")));
        }
        let marital: f64 = self.marital_status.iter().sum();
        if (marital - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("marital status proportions sum to {marital}")));
        }
        let probs = [self.degree, self.extra_degree].into_iter().chain(self.languages);
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Applicant {
        let cell = WeightedIndex::new(self.joint).expect("validated proportions").sample(rng);
        let nationality = if cell < 2 { Nationality::Belgian } else { Nationality::Foreign };
        let gender = if cell % 2 == 0 { Gender::Man } else { Gender::Woman };
        let age = rng.random_range(MIN_AGE..=MAX_AGE);
        let degree = rng.random_bool(self.degree);
        let extra_degree = degree && rng.random_bool(self.extra_degree);
        let max_e = max_experience(age, degree, extra_degree);
        let weights = (0..=max_e).map(|y| experience_probability(y, max_e));
        let experience = WeightedIndex::new(weights).expect("positive weights").sample(rng) as u32;
        let marital_status =
            WeightedIndex::new(self.marital_status).expect("validated proportions").sample(rng) as u32;
        let mut languages = [false; LANGUAGES];
        for (flag, &p) in languages.iter_mut().zip(&self.languages) {
            *flag = rng.random_bool(p);
        }
        Applicant { gender, nationality, marital_status, age, degree, extra_degree, experience, languages }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiringBiasKind {
    None,
    Men,
    BelgianMen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub kind: HiringBiasKind,
    pub amount: f64,
}

impl Default for BiasSpec {
    fn default() -> Self {
        BiasSpec { kind: HiringBiasKind::None, amount: 0.1 }
    }
}

impl BiasSpec {
    pub fn new(kind: HiringBiasKind) -> Self {
        BiasSpec { kind, ..BiasSpec::default() }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let kind = match s {
            "none" => HiringBiasKind::None,
            "men" => HiringBiasKind::Men,
            "belgian_men" | "belgian-men" => HiringBiasKind::BelgianMen,
            _ => return None,
        };
        Some(BiasSpec::new(kind))
    }

    pub fn applies(&self, a: &Applicant) -> bool {
        match self.kind {
            HiringBiasKind::None => false,
            HiringBiasKind::Men => a.gender == Gender::Man,
            HiringBiasKind::BelgianMen => {
                a.gender == Gender::Man && a.nationality == Nationality::Belgian
            }
        }
    }

    pub fn offset(&self, a: &Applicant) -> f64 {
        if self.applies(a) {
            self.amount
        } else {
            0.0
        }
    }
}

/// Per-period probability of leaving, by age bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBracket {
    pub min_age: u32,
    pub max_age: u32,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttritionTable {
    pub brackets: Vec<AgeBracket>,
    /// Steps between attrition draws.
    pub period: usize,
}

impl Default for AttritionTable {
    fn default() -> Self {
        AttritionTable {
            brackets: vec![AgeBracket { min_age: MIN_AGE, max_age: MAX_AGE, probability: 0.02 }],
            period: 100,
        }
    }
}

impl AttritionTable {
    pub fn flat(probability: f64) -> Self {
        AttritionTable {
            brackets: vec![AgeBracket { min_age: 0, max_age: u32::MAX, probability }],
            ..AttritionTable::default()
        }
    }

    pub fn probability(&self, age: u32) -> f64 {
        self.brackets
            .iter()
            .find(|b| (b.min_age..=b.max_age).contains(&age))
            .map_or(0.0, |b| b.probability)
    }
}

/// Indices of the employees who leave this period.
pub fn attrition<R: Rng + ?Sized>(team: &[Applicant], table: &AttritionTable, rng: &mut R) -> Vec<usize> {
    team.iter()
        .enumerate()
        .filter(|(_, e)| {
            let p = table.probability(e.age).clamp(0.0, 1.0);
            rng.random_bool(p)
        })
        .map(|(i, _)| i)
        .collect()
}

/// The company's employees and its target size.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanyState {
    pub team: Vec<Applicant>,
    pub target_size: usize,
}

impl CompanyState {
    /// Potential mean, degree share, extra-degree share, experience and
    /// language entropy, each in `[0, 1]`. `potential_noise` is added to the
    /// potential mean.
    pub fn features(&self, potential_noise: f64) -> [f64; COMPANY_FEATURES] {
        let k = self.target_size as f64;
        let n = self.team.len() as f64;
        let potential: f64 = self.team.iter().map(Applicant::potential).sum::<f64>() / k;
        let degrees = self.team.iter().filter(|e| e.degree).count() as f64 / k;
        let extra = self.team.iter().filter(|e| e.extra_degree).count() as f64 / k;
        let experience =
            self.team.iter().map(|e| e.experience as f64).sum::<f64>() / (k * MAX_EXPERIENCE as f64);
        let mut speakers = [0.0; LANGUAGES];
        for e in &self.team {
            for (s, &l) in speakers.iter_mut().zip(&e.languages) {
                *s += l as u8 as f64;
            }
        }
        let entropy = normalized_entropy(&speakers) * (n / k).min(1.0);
        [potential + potential_noise, degrees, extra, experience, entropy].map(|f| f.clamp(0.0, 1.0))
    }

    pub fn with_hire(&self, applicant: &Applicant) -> CompanyState {
        let mut next = self.clone();
        next.team.push(applicant.clone());
        next
    }
}

/// Shannon entropy of the L1-normalised `counts`, divided by its maximum.
pub fn normalized_entropy(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 || counts.len() < 2 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / total;
            -p * p.ln()
        })
        .sum();
    (h / (counts.len() as f64).ln()).clamp(0.0, 1.0)
}

/// `(K / N) * sum(estimated - current)`, clamped to `[-1, 1]`.
pub fn goodness_score(current: &[f64], estimated: &[f64], target_size: f64) -> f64 {
    let n = current.len() as f64;
    let diff: f64 = estimated.iter().zip(current).map(|(e, c)| e - c).sum();
    (target_size / n * diff).clamp(-1.0, 1.0)
}

/// Goodness of hiring `applicant`, drawing the estimated potential with
/// standard deviation `potential_std`.
pub fn goodness<R: Rng + ?Sized>(
    state: &CompanyState,
    current: &[f64; COMPANY_FEATURES],
    applicant: &Applicant,
    potential_std: f64,
    rng: &mut R,
) -> f64 {
    let noise = gaussian(potential_std, rng);
    let estimated = state.with_hire(applicant).features(noise);
    goodness_score(current, &estimated, state.target_size as f64)
}

fn gaussian<R: Rng + ?Sized>(std: f64, rng: &mut R) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("positive std").sample(rng)
    } else {
        0.0
    }
}

/// Reward for `action`; rejection mirrors hiring exactly.
pub fn reward(goodness: f64, action: usize, epsilon: f64, bias: f64, noise: f64) -> f64 {
    let hire = goodness - epsilon + noise + bias;
    if action == HIRE {
        hire
    } else {
        -hire
    }
}

pub fn feedback(goodness: f64, epsilon: f64) -> usize {
    if goodness >= epsilon {
        HIRE
    } else {
        REJECT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HiringConfig {
    pub population: PopulationSpec,
    pub bias: BiasSpec,
    pub target_size: usize,
    pub initial_team: usize,
    pub horizon: usize,
    pub epsilon: f64,
    pub reward_noise: f64,
    pub potential_std: f64,
    pub attrition: AttritionTable,
}

impl Default for HiringConfig {
    fn default() -> Self {
        HiringConfig {
            population: PopulationSpec::default(),
            bias: BiasSpec::default(),
            target_size: 100,
            initial_team: 50,
            horizon: 1000,
            epsilon: 0.5,
            reward_noise: 0.01,
            potential_std: 0.01,
            attrition: AttritionTable::default(),
        }
    }
}

impl HiringConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.population.validate()?;
        if self.target_size == 0 {
            return Err(Error::Config("target team size must be positive".into()));
        }
        if self.reward_noise < 0.0 || self.potential_std < 0.0 {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if self.attrition.period == 0 {
            return Err(Error::Config("attrition period must be positive".into()));
        }
        Ok(())
    }
}

pub struct HiringEnv {
    config: HiringConfig,
    rng: ChaCha8Rng,
    company: CompanyState,
    applicant: Applicant,
    current: [f64; COMPANY_FEATURES],
    steps: usize,
}

impl HiringEnv {
    pub fn new(config: HiringConfig) -> Result<Self, Error> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let applicant = config.population.sample(&mut rng);
        let company = CompanyState { team: Vec::new(), target_size: config.target_size };
        Ok(HiringEnv { config, rng, company, applicant, current: [0.0; COMPANY_FEATURES], steps: 0 })
    }

    pub fn config(&self) -> &HiringConfig {
        &self.config
    }

    pub fn company(&self) -> &CompanyState {
        &self.company
    }

    pub fn applicant(&self) -> &Applicant {
        &self.applicant
    }

    fn present_next(&mut self) -> Vec<f64> {
        self.applicant = self.config.population.sample(&mut self.rng);
        let noise = gaussian(self.config.potential_std, &mut self.rng);
        self.current = self.company.features(noise);
        self.observation()
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(COMPANY_FEATURES + 12);
        obs.extend_from_slice(&self.current);
        obs.push((self.company.team.len() as f64 / self.config.target_size as f64).min(1.0));
        self.applicant.encode(&mut obs);
        obs
    }
}

impl Environment for HiringEnv {
    fn action_count(&self) -> usize {
        2
    }

    fn observation_size(&self) -> usize {
        COMPANY_FEATURES + 1 + 7 + LANGUAGES
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn schema(&self) -> FeatureSchema {
        schema()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.steps = 0;
        let team = (0..self.config.initial_team).map(|_| self.config.population.sample(&mut self.rng)).collect();
        self.company = CompanyState { team, target_size: self.config.target_size };
        self.present_next()
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        let cfg = &self.config;
        let g = goodness(&self.company, &self.current, &self.applicant, cfg.potential_std, &mut self.rng);
        let noise = gaussian(cfg.reward_noise, &mut self.rng);
        let r = reward(g, action, cfg.epsilon, cfg.bias.offset(&self.applicant), noise);
        let correct = feedback(g, cfg.epsilon);
        debug_assert_eq!(HIRE, POSITIVE_ACTION);
        let individual = self.applicant.features();
        let groups = self.applicant.groups();
        if action == HIRE {
            self.company.team.push(self.applicant.clone());
        }
        self.steps += 1;
        if self.steps % cfg.attrition.period == 0 {
            let leaving = attrition(&self.company.team, &cfg.attrition, &mut self.rng);
            for i in leaving.into_iter().rev() {
                self.company.team.swap_remove(i);
            }
        }
        let done = self.steps >= self.config.horizon;
        let observation = self.present_next();
        StepOutcome { observation, reward: r, feedback: Some(correct), individual, groups, done }
    }
}

pub fn describe() -> String {
    let cfg = HiringConfig::default();
    let mut out = String::new();
    out.push_str("scenario: hiring\n");
    out.push_str("actions: 0 reject, 1 hire\n");
    out.push_str(&format!(
        "observation: {} values (5 company features, team size / K, 11 applicant values)\n",
        COMPANY_FEATURES + 1 + 7 + LANGUAGES
    ));
    out.push_str("groups: 0 men, 1 women, 2 belgian, 3 foreign\n");
    out.push_str(&format!(
        "defaults: K={} initial_team={} horizon={} epsilon={} reward_noise={} potential_std={}\n",
        cfg.target_size, cfg.initial_team, cfg.horizon, cfg.epsilon, cfg.reward_noise, cfg.potential_std
    ));
    out.push_str(&format!(
        "attrition: {} per {} steps\n",
        cfg.attrition.brackets[0].probability, cfg.attrition.period
    ));
    for p in [PopulationPreset::Default, PopulationPreset::Gender, PopulationPreset::NationalityGender] {
        let j = p.joint();
        out.push_str(&format!(
            "population {}: belgian men {:.3}, belgian women {:.3}, foreign men {:.3}, foreign women {:.3}\n",
            p.label(),
            j[0],
            j[1],
            j[2],
            j[3]
        ));
    }
    out.push_str("biases: none, men, belgian_men (+0.1 to the hire reward)\n");
    out.push_str("features:\n");
    let s = schema();
    for f in &s.numeric {
        out.push_str(&format!(
            "  {} numeric [{}, {}]{}\n",
            f.name,
            f.min,
            f.max,
            if f.sensitive { " sensitive" } else { "" }
        ));
    }
    for f in &s.nominal {
        out.push_str(&format!(
            "  {} nominal ({} values){}\n",
            f.name,
            f.cardinality,
            if f.sensitive { " sensitive" } else { "" }
        ));
    }
    out
}
