//! Per-step fairness evaluation with incremental individual notions.
//!
//! Group notions read the history's cached confusion matrices. Individual
//! fairness keeps weighted pair sums that decay by `gamma^2` per step and
//! are patched on insertion and removal. CSC keeps each member's
//! neighbour list and only recomputes lists that lose a neighbour.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::distance::{total_variation, DistanceMetric, PreparedFeatures};
use super::notions::{
    clamp_unit, evaluate_over, group_notion, FairnessValue, NotionSpec,
};
use crate::Error;
use crate::history::{discount_weight, FairnessHistory, WindowSpec};
use crate::mdp::{FeatureSchema, GroupId, Interaction, Objective, RewardVector};

fn default_lambda() -> f64 {
    0.1
}

fn default_k() -> usize {
    5
}

fn default_guiding() -> Objective {
    Objective::IF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessConfig {
    /// Reward components, `R` first.
    pub objectives: Vec<Objective>,
    pub window: WindowSpec,
    pub distance: DistanceMetric,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Protected group first, reference group second.
    pub groups: (GroupId, GroupId),
    /// Notion whose stability drives pruning of discounted histories.
    #[serde(default = "default_guiding")]
    pub guiding: Objective,
}

impl FairnessConfig {
    pub fn new(objectives: Vec<Objective>, window: WindowSpec, groups: (GroupId, GroupId)) -> Self {
        FairnessConfig {
            objectives,
            window,
            distance: DistanceMetric::Heom,
            lambda: default_lambda(),
            k: default_k(),
            groups,
            guiding: default_guiding(),
        }
    }

    pub fn spec(&self, kind: Objective) -> NotionSpec {
        NotionSpec { kind, groups: self.groups, distance: self.distance, lambda: self.lambda, k: self.k }
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.window.validate()?;
        if self.objectives.first() != Some(&Objective::R) {
            return Err(Error::Config("objectives must start with R".into()));
        }
        for (i, o) in self.objectives.iter().enumerate() {
            if self.objectives[..i].contains(o) {
                return Err(Error::Config(format!("objective {o} listed twice")));
            }
        }
        if self.groups.0 == self.groups.1 {
            return Err(Error::Config("the two groups must differ".into()));
        }
        if self.guiding == Objective::R {
            return Err(Error::Config("R cannot guide pruning".into()));
        }
        self.spec(self.guiding).validate()
    }

    fn tracks(&self, kind: Objective) -> bool {
        self.objectives.contains(&kind) || (self.window.is_discounted() && self.guiding == kind)
    }
}

/// Values of every tracked notion after one push.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NotionValues {
    values: [Option<FairnessValue>; 8],
}

impl NotionValues {
    pub fn get(&self, kind: Objective) -> Option<FairnessValue> {
        self.values[kind.index()]
    }

    pub fn set(&mut self, kind: Objective, value: FairnessValue) {
        self.values[kind.index()] = Some(value);
    }

    /// Builds the reward vector for `labels`; untracked or undefined notions
    /// contribute 0.
    pub fn reward(&self, perf: f64, labels: &[Objective]) -> RewardVector {
        let values = labels
            .iter()
            .map(|&o| match o {
                Objective::R => perf,
                o => self.get(o).map(FairnessValue::or_zero).unwrap_or(0.0),
            })
            .collect();
        RewardVector { labels: labels.to_vec(), values }
    }
}

/// Weighted sums over ordered pairs, expressed at time `anchor`.
#[derive(Debug, Clone, Default)]
struct PairSums {
    sum: f64,
    norm: f64,
    weight: f64,
    count: usize,
    anchor: u64,
}

impl PairSums {
    fn advance(&mut self, t: u64, gamma: f64) {
        if self.count > 0 && gamma < 1.0 && t > self.anchor {
            let f = discount_weight(gamma, t - self.anchor);
            self.sum *= f * f;
            self.norm *= f * f;
            self.weight *= f;
        }
        self.anchor = self.anchor.max(t);
    }

    /// Adds a member of weight 1; `cross` is the weighted sum of its terms
    /// against current members.
    fn insert(&mut self, cross: f64) {
        self.sum += 2.0 * cross;
        self.norm += 2.0 * self.weight;
        self.weight += 1.0;
        self.count += 1;
    }

    fn remove(&mut self, w: f64, cross: f64) {
        self.count -= 1;
        if self.count == 0 {
            *self = PairSums { anchor: self.anchor, ..PairSums::default() };
            return;
        }
        self.sum -= 2.0 * w * cross;
        self.weight -= w;
        self.norm -= 2.0 * w * self.weight;
    }

    fn value(&self) -> FairnessValue {
        if self.count < 2 || self.norm <= 0.0 {
            return FairnessValue::undefined();
        }
        FairnessValue::defined(clamp_unit(-1.0 + self.sum / self.norm, "IF"))
    }
}

#[derive(Debug, Clone, Copy)]
struct Neighbour {
    dist: f64,
    t: u64,
    action: f64,
}

fn closer(a: &Neighbour, b: &Neighbour) -> std::cmp::Ordering {
    a.dist.total_cmp(&b.dist).then(a.t.cmp(&b.t))
}

#[derive(Debug, Clone)]
struct KnnEntry {
    t: u64,
    action: f64,
    features: PreparedFeatures,
    neighbours: Vec<Neighbour>,
    score: f64,
}

impl KnnEntry {
    fn rescore(&mut self, k: usize) -> f64 {
        let sum: f64 = self.neighbours.iter().map(|n| n.action).sum();
        let old = self.score;
        self.score = (self.action - sum).abs() / k as f64;
        self.score - old
    }
}

#[derive(Debug, Clone)]
struct KnnTracker {
    k: usize,
    metric: DistanceMetric,
    gamma: f64,
    entries: VecDeque<KnnEntry>,
    weighted: f64,
    weight: f64,
    anchor: u64,
}

impl KnnTracker {
    fn new(k: usize, metric: DistanceMetric, gamma: f64) -> Self {
        KnnTracker { k, metric, gamma, entries: VecDeque::new(), weighted: 0.0, weight: 0.0, anchor: 0 }
    }

    fn clear(&mut self) {
        self.entries.clear();
        self.weighted = 0.0;
        self.weight = 0.0;
        self.anchor = 0;
    }

    fn advance(&mut self, t: u64) {
        if !self.entries.is_empty() && self.gamma < 1.0 && t > self.anchor {
            let f = discount_weight(self.gamma, t - self.anchor);
            self.weighted *= f;
            self.weight *= f;
        }
        self.anchor = self.anchor.max(t);
    }

    fn neighbours_of(&self, idx: usize) -> Vec<Neighbour> {
        let me = &self.entries[idx];
        let mut all: Vec<Neighbour> = self
            .entries
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != idx)
            .map(|(_, e)| Neighbour { dist: me.features.distance(&e.features, self.metric), t: e.t, action: e.action })
            .collect();
        keep_nearest(&mut all, self.k);
        all
    }

    fn insert(&mut self, t: u64, action: usize, features: PreparedFeatures) {
        self.advance(t);
        let action = action as f64;
        let mut own = Vec::with_capacity(self.entries.len());
        for e in self.entries.iter_mut() {
            let dist = features.distance(&e.features, self.metric);
            own.push(Neighbour { dist, t: e.t, action: e.action });
            let cand = Neighbour { dist, t, action };
            let full = e.neighbours.len() >= self.k;
            if full && closer(&cand, e.neighbours.last().expect("k >= 1")).is_ge() {
                continue;
            }
            let pos = e.neighbours.partition_point(|n| closer(n, &cand).is_lt());
            e.neighbours.insert(pos, cand);
            e.neighbours.truncate(self.k);
            let delta = e.rescore(self.k);
            self.weighted += discount_weight(self.gamma, t - e.t) * delta;
        }
        keep_nearest(&mut own, self.k);
        let mut entry = KnnEntry { t, action, features, neighbours: own, score: 0.0 };
        self.weighted += entry.rescore(self.k);
        self.weight += 1.0;
        self.entries.push_back(entry);
    }

    fn remove(&mut self, t: u64) {
        let Ok(idx) = self.entries.binary_search_by_key(&t, |e| e.t) else {
            return;
        };
        let gone = self.entries.remove(idx).expect("index from search");
        let w = discount_weight(self.gamma, self.anchor - t);
        self.weighted -= w * gone.score;
        self.weight -= w;
        if self.entries.is_empty() {
            self.weighted = 0.0;
            self.weight = 0.0;
            return;
        }
        for i in 0..self.entries.len() {
            if self.entries[i].neighbours.iter().any(|n| n.t == t) {
                let fresh = self.neighbours_of(i);
                let e = &mut self.entries[i];
                e.neighbours = fresh;
                let delta = e.rescore(self.k);
                self.weighted += discount_weight(self.gamma, self.anchor - e.t) * delta;
            }
        }
    }

    fn value(&self) -> FairnessValue {
        if self.entries.len() < self.k + 1 || self.weight <= 0.0 {
            return FairnessValue::undefined();
        }
        FairnessValue::defined(clamp_unit(-self.weighted / self.weight, "CSC"))
    }
}

fn keep_nearest(all: &mut Vec<Neighbour>, k: usize) {
    if all.len() > k {
        all.select_nth_unstable_by(k, closer);
        all.truncate(k);
    }
    all.sort_by(closer);
}

/// Owns the shared history and evaluates every configured notion after
/// each interaction.
#[derive(Debug, Clone)]
pub struct FairnessEngine {
    config: FairnessConfig,
    schema: FeatureSchema,
    history: FairnessHistory,
    step: FairnessHistory,
    prepared: VecDeque<PreparedFeatures>,
    pairs: Option<PairSums>,
    pairs_window: Option<PairSums>,
    knn: Option<KnnTracker>,
    clock: u64,
    last: NotionValues,
    last_delta: Option<f64>,
    window_log: Option<Vec<usize>>,
}

impl FairnessEngine {
    pub fn new(config: FairnessConfig, schema: FeatureSchema) -> Result<Self, Error> {
        config.validate()?;
        let gamma = config.window.gamma();
        let pairs = config.tracks(Objective::IF).then(PairSums::default);
        let pairs_window =
            (config.window.is_discounted() && config.guiding == Objective::IF).then(PairSums::default);
        let knn = config.tracks(Objective::CSC).then(|| KnnTracker::new(config.k, config.distance, gamma));
        Ok(FairnessEngine {
            history: FairnessHistory::new(config.window),
            step: FairnessHistory::new(WindowSpec::sliding(1)),
            prepared: VecDeque::new(),
            pairs,
            pairs_window,
            knn,
            clock: 0,
            last: NotionValues::default(),
            last_delta: None,
            window_log: None,
            config,
            schema,
        })
    }

    pub fn config(&self) -> &FairnessConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn history(&self) -> &FairnessHistory {
        &self.history
    }

    /// The one-interaction history.
    pub fn step_history(&self) -> &FairnessHistory {
        &self.step
    }

    /// Timestamp the next interaction should carry.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn window_len(&self) -> usize {
        self.history.len()
    }

    pub fn current(&self) -> NotionValues {
        self.last
    }

    /// Guiding-notion change measured at the last push (discounted only).
    pub fn last_delta(&self) -> Option<f64> {
        self.last_delta
    }

    /// Starts recording the history length after every push.
    pub fn record_window_lengths(&mut self) {
        self.window_log.get_or_insert_with(Vec::new);
    }

    pub fn take_window_lengths(&mut self) -> Vec<usize> {
        self.window_log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn reset(&mut self) {
        *self = FairnessEngine::new(self.config.clone(), self.schema.clone()).expect("validated config");
    }

    pub fn attach_feedback(&mut self, t: u64, correct: usize) -> Result<(), Error> {
        self.history.attach_feedback(t, correct)?;
        if self.step.now() == Some(t) {
            self.step.attach_feedback(t, correct)?;
        }
        Ok(())
    }

    fn term(&self, x: &PreparedFeatures, dist: &[f64], j: usize) -> f64 {
        let other = &self.history.get(j).expect("aligned buffers").action_dist;
        x.pair_term(&self.prepared[j], self.config.distance, self.config.lambda)
            - total_variation(dist, other)
    }

    /// Weighted cross sum of `x` against members `range` at time `now`.
    fn cross(&self, x: &PreparedFeatures, dist: &[f64], range: std::ops::Range<usize>, now: u64) -> f64 {
        let gamma = self.config.window.gamma();
        range
            .map(|j| {
                let tj = self.history.get(j).expect("aligned buffers").t;
                discount_weight(gamma, now - tj) * self.term(x, dist, j)
            })
            .sum()
    }

    /// Appends `x` to the history and returns every tracked notion.
    pub fn push(&mut self, x: &Interaction) -> Result<NotionValues, Error> {
        self.schema.check(&x.individual)?;
        if x.action_dist.is_empty() || x.groups.is_empty() {
            return Err(Error::Mdp(format!("interaction {} is malformed", x.t)));
        }
        if let Some(last) = self.history.now() {
            if x.t <= last {
                return Err(Error::History(format!("timestep {} does not follow {}", x.t, last)));
            }
        }
        let t = x.t;
        let w = self.config.window.window();
        let gamma = self.config.window.gamma();
        let discounted = self.config.window.is_discounted();
        let px = PreparedFeatures::new(&self.schema, &x.individual);
        let n = self.prepared.len();
        // the member leaving the newest-w window, and the w-1 that stay
        let leaving = (n >= w).then(|| n - w);
        let stay = n + 1 - w.min(n + 1)..n;

        if self.pairs.is_some() || self.pairs_window.is_some() {
            let window_cross = self.cross(&px, &x.action_dist, stay.clone(), t);
            let leaving_cross = leaving.map(|y| {
                let yx = self.history.get(y).expect("aligned buffers");
                let py = self.prepared[y].clone();
                (discount_weight(gamma, t - yx.t), self.cross(&py, &yx.action_dist.clone(), stay.clone(), t))
            });
            let full_cross = if discounted { self.cross(&px, &x.action_dist, 0..n, t) } else { window_cross };
            let windowed = if discounted { self.pairs_window.as_mut() } else { self.pairs.as_mut() };
            if let Some(p) = windowed {
                p.advance(t, gamma);
                if let Some((wy, c)) = leaving_cross {
                    p.remove(wy, c);
                }
                p.insert(window_cross);
            }
            if discounted {
                if let Some(p) = self.pairs.as_mut() {
                    p.advance(t, gamma);
                    p.insert(full_cross);
                }
            }
        }
        if let Some(knn) = self.knn.as_mut() {
            if !discounted {
                if let Some(y) = leaving {
                    knn.remove(self.history.get(y).expect("aligned buffers").t);
                }
            }
            knn.insert(t, x.action, px.clone());
        }

        if self.history.push(x.clone())?.is_some() {
            self.prepared.pop_front();
        }
        self.prepared.push_back(px);
        self.step.push(x.clone())?;

        self.last_delta = None;
        if discounted {
            let delta = self.guiding_delta(t);
            self.last_delta = Some(delta);
            let removed = self.history.prune(delta).removed;
            if removed > 0 {
                self.prepared.drain(..removed);
                if let (Some(p), Some(pw)) = (self.pairs.as_mut(), self.pairs_window.as_ref()) {
                    *p = pw.clone();
                } else if self.pairs.is_some() {
                    self.rebuild_pairs();
                }
                self.rebuild_knn();
            }
        }
        self.clock = t + 1;
        if let Some(log) = self.window_log.as_mut() {
            log.push(self.history.len());
        }
        self.last = self.values(t);
        Ok(self.last)
    }

    fn newest_window(&self) -> impl Iterator<Item = &Interaction> + Clone {
        let skip = self.history.len().saturating_sub(self.config.window.window());
        self.history.iter().skip(skip)
    }

    fn guiding_delta(&self, now: u64) -> f64 {
        let kind = self.config.guiding;
        let gamma = self.config.window.gamma();
        let spec = self.config.spec(kind);
        let full = match kind {
            Objective::IF => self.pairs.as_ref().expect("tracked").value(),
            Objective::CSC => self.knn.as_ref().expect("tracked").value(),
            _ => self.group_value(kind, now),
        };
        let window = match kind {
            Objective::IF => self.pairs_window.as_ref().expect("tracked").value(),
            _ => evaluate_over(self.newest_window(), &self.schema, &spec, gamma, now),
        };
        full.or_zero() - window.or_zero()
    }

    fn rebuild_pairs(&mut self) {
        let Some(_) = self.pairs else { return };
        let gamma = self.config.window.gamma();
        let mut p = PairSums::default();
        for i in 0..self.prepared.len() {
            let xi = self.history.get(i).expect("aligned buffers");
            p.advance(xi.t, gamma);
            let c = self.cross(&self.prepared[i].clone(), &xi.action_dist.clone(), 0..i, xi.t);
            p.insert(c);
        }
        self.pairs = Some(p);
    }

    fn rebuild_knn(&mut self) {
        let Some(knn) = self.knn.as_mut() else { return };
        knn.clear();
        for (x, p) in self.history.iter().zip(&self.prepared) {
            knn.insert(x.t, x.action, p.clone());
        }
    }

    fn group_value(&self, kind: Objective, now: u64) -> FairnessValue {
        let (g, h) = self.config.groups;
        group_notion(kind, &self.history.confusion(g, now), &self.history.confusion(h, now))
    }

    fn values(&self, now: u64) -> NotionValues {
        let mut out = NotionValues::default();
        for kind in Objective::NOTIONS {
            if !self.config.tracks(kind) {
                continue;
            }
            let v = match kind {
                Objective::IF => self.pairs.as_ref().expect("tracked").value(),
                Objective::CSC => self.knn.as_ref().expect("tracked").value(),
                k => self.group_value(k, now),
            };
            out.set(kind, v);
        }
        out
    }

    /// Every notion recomputed from scratch over the current history.
    pub fn evaluate_batch(&self) -> NotionValues {
        let mut out = NotionValues::default();
        let Some(now) = self.history.now() else { return out };
        for kind in Objective::NOTIONS {
            let spec = self.config.spec(kind);
            out.set(kind, super::notions::evaluate(&self.history, &self.schema, &spec, now));
        }
        out
    }
}
