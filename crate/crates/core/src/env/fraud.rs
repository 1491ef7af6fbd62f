//! Fraud detection over a synthetic week of card transactions.
//!
//! Customers on two continents pay merchants; some payments are fraudulent.
//! The agent either ignores a transaction or asks for authentication.
//! Authenticating genuine customers erodes their satisfaction until they
//! leave.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::mdp::{
    Environment, FeatureSchema, FeatureVector, GroupId, NominalFeature, NumericFeature, StepOutcome,
};
use crate::Error;

pub const IGNORE: usize = 0;
pub const AUTHENTICATE: usize = 1;

pub const CONTINENT_A: GroupId = GroupId(0);
pub const CONTINENT_B: GroupId = GroupId(1);

pub const COUNTRIES_PER_CONTINENT: u32 = 4;
pub const CURRENCIES: u32 = 3;
pub const MAX_AMOUNT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Continent {
    A,
    B,
}

impl Continent {
    pub fn index(self) -> usize {
        match self {
            Continent::A => 0,
            Continent::B => 1,
        }
    }

    pub fn group(self) -> GroupId {
        match self {
            Continent::A => CONTINENT_A,
            Continent::B => CONTINENT_B,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub card_id: u32,
    pub merchant_id: u32,
    pub currency: u32,
    pub country: u32,
    pub continent: Continent,
    pub amount: f64,
    pub day: u32,
    pub hour: u32,
    pub is_fraud: bool,
}

impl Transaction {
    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            numeric: vec![self.amount, self.hour as f64, self.day as f64],
            nominal: vec![self.merchant_id, self.currency, self.country, self.continent.index() as u32],
        }
    }
}

pub fn schema(merchants: u32) -> FeatureSchema {
    FeatureSchema {
        numeric: vec![
            NumericFeature { name: "amount".into(), min: 0.0, max: MAX_AMOUNT, sensitive: false },
            NumericFeature { name: "hour".into(), min: 0.0, max: 23.0, sensitive: false },
            NumericFeature { name: "day".into(), min: 0.0, max: 6.0, sensitive: false },
        ],
        nominal: vec![
            NominalFeature { name: "merchant".into(), cardinality: merchants, sensitive: false },
            NominalFeature { name: "currency".into(), cardinality: CURRENCIES, sensitive: false },
            NominalFeature {
                name: "country".into(),
                cardinality: 2 * COUNTRIES_PER_CONTINENT,
                sensitive: true,
            },
            NominalFeature { name: "continent".into(), cardinality: 2, sensitive: true },
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FraudBiasKind {
    None,
    ContinentA,
    ContinentAMerchant0,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FraudBiasSpec {
    pub kind: FraudBiasKind,
    pub amount: f64,
}

impl Default for FraudBiasSpec {
    fn default() -> Self {
        FraudBiasSpec { kind: FraudBiasKind::None, amount: 0.1 }
    }
}

impl FraudBiasSpec {
    pub fn new(kind: FraudBiasKind) -> Self {
        FraudBiasSpec { kind, ..FraudBiasSpec::default() }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let kind = match s {
            "none" => FraudBiasKind::None,
            "continent_a" | "continent-a" => FraudBiasKind::ContinentA,
            "continent_a_merchant0" | "continent-a-merchant0" => FraudBiasKind::ContinentAMerchant0,
            _ => return None,
        };
        Some(FraudBiasSpec::new(kind))
    }

    pub fn applies(&self, txn: &Transaction) -> bool {
        match self.kind {
            FraudBiasKind::None => false,
            FraudBiasKind::ContinentA => txn.continent == Continent::A,
            FraudBiasKind::ContinentAMerchant0 => txn.continent == Continent::A && txn.merchant_id == 0,
        }
    }

    pub fn offset(&self, txn: &Transaction) -> f64 {
        if self.applies(txn) {
            self.amount
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FraudGenSpec {
    pub fraud_rate: f64,
    pub continent_a_share: f64,
    /// Relative fraud propensity of continents A and B.
    pub continent_weights: [f64; 2],
    pub customers_per_continent: usize,
    pub merchants: u32,
    pub hours: u32,
    pub arrivals_per_hour: f64,
    pub max_transactions: usize,
    pub satisfaction_decay: f64,
    pub leave_threshold: f64,
    /// Log-normal (mu, sigma) of genuine and fraudulent amounts.
    pub genuine_amount: (f64, f64),
    pub fraud_amount: (f64, f64),
    /// Probability that a payment uses the home continent's currency.
    pub home_currency: f64,
    pub bias: FraudBiasSpec,
}

impl Default for FraudGenSpec {
    fn default() -> Self {
        FraudGenSpec {
            fraud_rate: 0.10,
            continent_a_share: 0.5,
            continent_weights: [0.44, 0.73],
            customers_per_continent: 200,
            merchants: 10,
            hours: 168,
            arrivals_per_hour: 1000.0 / 168.0,
            max_transactions: 1000,
            satisfaction_decay: 0.1,
            leave_threshold: 0.5,
            genuine_amount: (3.5, 1.0),
            fraud_amount: (4.5, 1.0),
            home_currency: 0.8,
            bias: FraudBiasSpec::default(),
        }
    }
}

impl FraudGenSpec {
    pub fn validate(&self) -> Result<(), Error> {
        let probs = [self.fraud_rate, self.continent_a_share, self.home_currency];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("fraud probabilities must lie in [0, 1]".into()));
        }
        if self.continent_weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("continent weights must be non-negative".into()));
        }
        if self.fraud_probability(Continent::A) > 1.0 || self.fraud_probability(Continent::B) > 1.0 {
            return Err(Error::Config("continent fraud probability exceeds 1".into()));
        }
        if self.merchants == 0 || self.customers_per_continent == 0 {
            return Err(Error::Config("need at least one merchant and customer".into()));
        }
        if self.hours == 0 || self.max_transactions == 0 {
            return Err(Error::Config("an episode needs at least one hour and one transaction".into()));
        }
        if !(self.arrivals_per_hour > 0.0) {
            return Err(Error::Config("arrival rate must be positive".into()));
        }
        Ok(())
    }

    /// `P(fraud | continent)`, scaled so the overall rate is `fraud_rate`.
    pub fn fraud_probability(&self, c: Continent) -> f64 {
        let pa = self.continent_a_share;
        let [wa, wb] = self.continent_weights;
        let norm = pa * wa + (1.0 - pa) * wb;
        if norm <= 0.0 {
            return 0.0;
        }
        self.fraud_rate * self.continent_weights[c.index()] / norm
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Customer {
    pub card_id: u32,
    pub continent: Continent,
    pub country: u32,
    pub satisfaction: f64,
    pub active: bool,
}

/// Customers and the clock of the transaction stream.
#[derive(Debug, Clone, PartialEq)]
pub struct FraudGenerator {
    pub spec: FraudGenSpec,
    pub customers: Vec<Customer>,
    pub hour: u32,
    pending: u64,
    pub emitted: usize,
}

impl FraudGenerator {
    pub fn new<R: Rng + ?Sized>(spec: FraudGenSpec, rng: &mut R) -> Self {
        let mut customers = Vec::new();
        for continent in [Continent::A, Continent::B] {
            for _ in 0..spec.customers_per_continent {
                let offset = continent.index() as u32 * COUNTRIES_PER_CONTINENT;
                customers.push(Customer {
                    card_id: customers.len() as u32,
                    continent,
                    country: offset + rng.random_range(0..COUNTRIES_PER_CONTINENT),
                    satisfaction: 1.0,
                    active: true,
                });
            }
        }
        FraudGenerator { spec, customers, hour: 0, pending: 0, emitted: 0 }
    }

    pub fn active(&self, c: Continent) -> usize {
        self.customers.iter().filter(|x| x.active && x.continent == c).count()
    }

    pub fn mean_satisfaction(&self) -> f64 {
        let n = self.customers.len().max(1) as f64;
        self.customers.iter().map(|c| c.satisfaction).sum::<f64>() / n
    }

    /// Moves the clock forward until an hour has arrivals left.
    fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let arrivals = Poisson::new(self.spec.arrivals_per_hour).expect("validated rate");
        while self.pending == 0 {
            if self.hour >= self.spec.hours {
                return false;
            }
            self.pending = arrivals.sample(rng) as u64;
            if self.pending == 0 {
                self.hour += 1;
            }
        }
        true
    }
}

/// Draws the next transaction; `None` once the week or the cap is over, or
/// every customer has left.
pub fn next_transaction<R: Rng + ?Sized>(gen: &mut FraudGenerator, rng: &mut R) -> Option<Transaction> {
    if gen.emitted >= gen.spec.max_transactions || !gen.advance(rng) {
        return None;
    }
    let preferred = if rng.random_bool(gen.spec.continent_a_share) { Continent::A } else { Continent::B };
    let continent = if gen.active(preferred) > 0 {
        preferred
    } else {
        let other = if preferred == Continent::A { Continent::B } else { Continent::A };
        if gen.active(other) == 0 {
            return None;
        }
        other
    };
    let pool: Vec<usize> = gen
        .customers
        .iter()
        .enumerate()
        .filter(|(_, c)| c.active && c.continent == continent)
        .map(|(i, _)| i)
        .collect();
    let customer = &gen.customers[pool[rng.random_range(0..pool.len())]];
    let is_fraud = rng.random_bool(gen.spec.fraud_probability(continent).clamp(0.0, 1.0));
    let (mu, sigma) = if is_fraud { gen.spec.fraud_amount } else { gen.spec.genuine_amount };
    let amount = LogNormal::new(mu, sigma).expect("valid log-normal").sample(rng);
    let currency = if rng.random_bool(gen.spec.home_currency) { continent.index() as u32 } else { 2 };
    let txn = Transaction {
        card_id: customer.card_id,
        merchant_id: rng.random_range(0..gen.spec.merchants),
        currency,
        country: customer.country,
        continent,
        amount,
        day: gen.hour / 24,
        hour: gen.hour % 24,
        is_fraud,
    };
    gen.pending -= 1;
    if gen.pending == 0 {
        gen.hour += 1;
    }
    gen.emitted += 1;
    Some(txn)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessOutcome {
    pub reward: f64,
    pub feedback: Option<usize>,
    pub satisfaction_delta: f64,
    /// The customer left after this authentication.
    pub cancelled: bool,
}

/// The correct action, revealed only when the agent authenticates.
pub fn feedback_rule(txn: &Transaction, action: usize) -> Option<usize> {
    (action == AUTHENTICATE).then_some(if txn.is_fraud { AUTHENTICATE } else { IGNORE })
}

/// Applies `action` to `txn`, updating the customer's satisfaction.
pub fn process(gen: &mut FraudGenerator, txn: &Transaction, action: usize, bias: &FraudBiasSpec) -> ProcessOutcome {
    let feedback = feedback_rule(txn, action);
    let mut satisfaction_delta = 0.0;
    let mut cancelled = false;
    let mut reward = match (action == AUTHENTICATE, txn.is_fraud) {
        (false, _) => 0.0,
        (true, false) => 1.0,
        (true, true) => -1.0,
    };
    if action == AUTHENTICATE && !txn.is_fraud {
        let decay = gen.spec.satisfaction_decay;
        let threshold = gen.spec.leave_threshold;
        if let Some(c) = gen.customers.get_mut(txn.card_id as usize) {
            let before = c.satisfaction;
            c.satisfaction = (c.satisfaction - decay).max(0.0);
            satisfaction_delta = c.satisfaction - before;
            if c.satisfaction < threshold - 1e-9 {
                c.active = false;
                cancelled = true;
                reward = -1.0;
                log::debug!("customer {} cancelled after authentication", c.card_id);
            }
        }
    }
    reward += bias.offset(txn);
    ProcessOutcome { reward, feedback, satisfaction_delta, cancelled }
}

pub struct FraudEnv {
    spec: FraudGenSpec,
    rng: ChaCha8Rng,
    gen: FraudGenerator,
    current: Option<Transaction>,
    genuine_seen: usize,
    seen: usize,
    cancellations: usize,
}

impl FraudEnv {
    pub fn new(spec: FraudGenSpec) -> Result<Self, Error> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gen = FraudGenerator::new(spec.clone(), &mut rng);
        Ok(FraudEnv { spec, rng, gen, current: None, genuine_seen: 0, seen: 0, cancellations: 0 })
    }

    pub fn spec(&self) -> &FraudGenSpec {
        &self.spec
    }

    pub fn generator(&self) -> &FraudGenerator {
        &self.gen
    }

    pub fn current(&self) -> Option<&Transaction> {
        self.current.as_ref()
    }

    pub fn cancellations(&self) -> usize {
        self.cancellations
    }

    fn draw(&mut self) -> Vec<f64> {
        self.current = next_transaction(&mut self.gen, &mut self.rng);
        if let Some(t) = &self.current {
            self.seen += 1;
            self.genuine_seen += (!t.is_fraud) as usize;
        }
        self.observation()
    }

    fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.observation_size());
        let ratio = if self.seen == 0 { 1.0 } else { self.genuine_seen as f64 / self.seen as f64 };
        obs.push(ratio);
        obs.push(self.gen.mean_satisfaction());
        let mut merchant = vec![0.0; self.spec.merchants as usize];
        let mut currency = [0.0; CURRENCIES as usize];
        match &self.current {
            Some(t) => {
                obs.push((t.amount / MAX_AMOUNT).min(1.0));
                obs.push(t.hour as f64 / 23.0);
                obs.push(t.day as f64 / 6.0);
                merchant[t.merchant_id as usize] = 1.0;
                currency[t.currency as usize] = 1.0;
                obs.extend(merchant);
                obs.extend(currency);
                obs.push(t.continent.index() as f64);
            }
            None => obs.resize(self.observation_size(), 0.0),
        }
        obs
    }
}

impl Environment for FraudEnv {
    fn action_count(&self) -> usize {
        2
    }

    fn observation_size(&self) -> usize {
        2 + 3 + self.spec.merchants as usize + CURRENCIES as usize + 1
    }

    fn horizon(&self) -> usize {
        self.spec.max_transactions
    }

    fn schema(&self) -> FeatureSchema {
        schema(self.spec.merchants)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.gen = FraudGenerator::new(self.spec.clone(), &mut self.rng);
        self.seen = 0;
        self.genuine_seen = 0;
        self.cancellations = 0;
        self.draw()
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        let txn = self.current.take().expect("step after the stream ended");
        let out = process(&mut self.gen, &txn, action, &self.spec.bias);
        self.cancellations += out.cancelled as usize;
        let observation = self.draw();
        StepOutcome {
            observation,
            reward: out.reward,
            feedback: out.feedback,
            individual: txn.features(),
            groups: vec![txn.continent.group()],
            done: self.current.is_none(),
        }
    }
}

pub fn describe() -> String {
    let spec = FraudGenSpec::default();
    let mut out = String::new();
    out.push_str("scenario: fraud\n");
    out.push_str("actions: 0 ignore, 1 authenticate\n");
    out.push_str(&format!(
        "observation: {} values (genuine ratio, mean satisfaction, amount, hour, day, merchant one-hot, currency one-hot, continent)\n",
        2 + 3 + spec.merchants as usize + CURRENCIES as usize + 1
    ));
    out.push_str("groups: 0 continent A, 1 continent B\n");
    out.push_str(&format!(
        "defaults: fraud_rate={} P(A)={} P(fraud|A)={:.5} P(fraud|B)={:.5}\n",
        spec.fraud_rate,
        spec.continent_a_share,
        spec.fraud_probability(Continent::A),
        spec.fraud_probability(Continent::B)
    ));
    out.push_str(&format!(
        "stream: {} hours, {:.3} arrivals per hour, at most {} transactions, {} customers per continent, {} merchants\n",
        spec.hours, spec.arrivals_per_hour, spec.max_transactions, spec.customers_per_continent, spec.merchants
    ));
    out.push_str(&format!(
        "satisfaction: -{} per genuine authentication, customer leaves below {}\n",
        spec.satisfaction_decay, spec.leave_threshold
    ));
    out.push_str("rewards: authenticate genuine +1, authenticate fraud -1, ignore 0, cancellation -1\n");
    out.push_str("biases: none, continent_a, continent_a_merchant0 (+0.1)\n");
    out.push_str("features:\n");
    let s = schema(spec.merchants);
    for f in &s.numeric {
        out.push_str(&format!("  {} numeric [{}, {}]\n", f.name, f.min, f.max));
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
