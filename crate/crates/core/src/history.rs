//! Interaction histories under sliding-window or discounted semantics.
//!
//! A sliding window keeps the `w` most recent interactions, each with weight
//! 1. A discounted history keeps growing, weighs an interaction of age `a` by
//! `gamma^a`, and drops everything but the newest `w` interactions once the
//! guiding fairness notion has been insensitive to the older part for `delay`
//! consecutive steps.
//!
//! Per-group confusion statistics are cached and updated incrementally; the
//! `*_batch` methods recompute them from the buffer.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::mdp::{GroupId, Interaction};
use crate::Error;

/// The action index treated as the preferable/positive outcome (hire,
/// authenticate).
pub const POSITIVE_ACTION: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowSpec {
    Sliding {
        window: usize,
    },
    Discounted {
        /// Minimum number of interactions kept after pruning.
        window: usize,
        gamma: f64,
        threshold: f64,
        delay: usize,
    },
}

impl WindowSpec {
    pub fn sliding(window: usize) -> Self {
        WindowSpec::Sliding { window }
    }

    pub fn discounted(window: usize, gamma: f64, threshold: f64, delay: usize) -> Self {
        WindowSpec::Discounted { window, gamma, threshold, delay }
    }

    pub fn window(&self) -> usize {
        match *self {
            WindowSpec::Sliding { window } | WindowSpec::Discounted { window, .. } => window,
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            WindowSpec::Sliding { .. } => 1.0,
            WindowSpec::Discounted { gamma, .. } => gamma,
        }
    }

    pub fn is_discounted(&self) -> bool {
        matches!(self, WindowSpec::Discounted { .. })
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.window() == 0 {
            return Err(Error::Config("window size must be at least 1".into()));
        }
        if let WindowSpec::Discounted { gamma, threshold, delay, .. } = *self {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::Config(format!("discount factor {gamma} not in (0, 1]")));
            }
            if !(threshold >= 0.0) {
                return Err(Error::Config(format!("discount threshold {threshold} is negative")));
            }
            if delay == 0 {
                return Err(Error::Config("discount delay must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// Short label used in directory names, e.g. `w500` or `g0.9_t0.0001_w100`.
    pub fn label(&self) -> String {
        match *self {
            WindowSpec::Sliding { window } => format!("w{window}"),
            WindowSpec::Discounted { window, gamma, threshold, delay } => {
                format!("g{gamma}_t{threshold}_d{delay}_w{window}")
            }
        }
    }
}

/// Weighted confusion statistics for one group. `positive_actions` and
/// `total` also count interactions without feedback.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedConfusionMatrix {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub tn: f64,
    pub positive_actions: f64,
    pub total: f64,
}

impl WeightedConfusionMatrix {
    pub fn add(&mut self, action: usize, feedback: Option<usize>, weight: f64) {
        let positive = action == POSITIVE_ACTION;
        self.total += weight;
        if positive {
            self.positive_actions += weight;
        }
        if let Some(correct) = feedback {
            match (positive, correct == POSITIVE_ACTION) {
                (true, true) => self.tp += weight,
                (true, false) => self.fp += weight,
                (false, true) => self.fn_ += weight,
                (false, false) => self.tn += weight,
            }
        }
    }

    fn add_feedback(&mut self, action: usize, correct: usize, weight: f64) {
        match (action == POSITIVE_ACTION, correct == POSITIVE_ACTION) {
            (true, true) => self.tp += weight,
            (true, false) => self.fp += weight,
            (false, true) => self.fn_ += weight,
            (false, false) => self.tn += weight,
        }
    }

    fn scale(&mut self, f: f64) {
        self.tp *= f;
        self.fp *= f;
        self.fn_ *= f;
        self.tn *= f;
        self.positive_actions *= f;
        self.total *= f;
    }

    pub fn with_feedback(&self) -> f64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positive_rate(&self) -> Option<f64> {
        ratio(self.positive_actions, self.total)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.with_feedback())
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// Largest absolute componentwise difference, for cache checks.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.tp - other.tp,
            self.fp - other.fp,
            self.fn_ - other.fn_,
            self.tn - other.tn,
            self.positive_actions - other.positive_actions,
            self.total - other.total,
        ]
        .into_iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Result of [`FairnessHistory::prune`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PruneOutcome {
    /// Interactions removed from the front of the buffer.
    pub removed: usize,
}

#[derive(Debug, Clone)]
pub struct FairnessHistory {
    spec: WindowSpec,
    buffer: VecDeque<Interaction>,
    stable_count: usize,
    steps_seen: usize,
    // Cached matrices are expressed at time `anchor` (weight 1 at `anchor`).
    anchor: u64,
    cache: HashMap<GroupId, WeightedConfusionMatrix>,
}

impl FairnessHistory {
    pub fn new(spec: WindowSpec) -> Self {
        FairnessHistory {
            spec,
            buffer: VecDeque::new(),
            stable_count: 0,
            steps_seen: 0,
            anchor: 0,
            cache: HashMap::new(),
        }
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn stable_count(&self) -> usize {
        self.stable_count
    }

    pub fn steps_seen(&self) -> usize {
        self.steps_seen
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &Interaction> + ExactSizeIterator + Clone {
        self.buffer.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Interaction> {
        self.buffer.get(i)
    }

    pub fn newest(&self) -> Option<&Interaction> {
        self.buffer.back()
    }

    /// Timestamp of the newest interaction; the reference point for weights.
    pub fn now(&self) -> Option<u64> {
        self.buffer.back().map(|x| x.t)
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
        self.cache.clear();
        self.stable_count = 0;
        self.steps_seen = 0;
        self.anchor = 0;
    }

    pub fn weight_of(&self, x: &Interaction, now: u64) -> f64 {
        discount_weight(self.spec.gamma(), now.saturating_sub(x.t))
    }

    /// Appends `x`. Returns the interaction evicted by a sliding window, if
    /// any.
    pub fn push(&mut self, x: Interaction) -> Result<Option<Interaction>, Error> {
        if let Some(last) = self.buffer.back() {
            if x.t <= last.t {
                return Err(Error::History(format!(
                    "timestep {} does not follow {}",
                    x.t, last.t
                )));
            }
        }
        let gamma = self.spec.gamma();
        if gamma < 1.0 && !self.buffer.is_empty() {
            let f = discount_weight(gamma, x.t - self.anchor);
            for m in self.cache.values_mut() {
                m.scale(f);
            }
        }
        self.anchor = x.t;
        for g in &x.groups {
            self.cache.entry(*g).or_default().add(x.action, x.feedback, 1.0);
        }
        self.buffer.push_back(x);
        self.steps_seen += 1;

        let mut evicted = None;
        if let WindowSpec::Sliding { window } = self.spec {
            if self.buffer.len() > window {
                let old = self.buffer.pop_front().expect("non-empty");
                for g in &old.groups {
                    if let Some(m) = self.cache.get_mut(g) {
                        m.add(old.action, old.feedback, -1.0);
                    }
                }
                evicted = Some(old);
            }
        }
        Ok(evicted)
    }

    /// Applies the threshold/delay truncation rule given the change the older
    /// part of the buffer makes to the guiding notion.
    pub fn prune(&mut self, guiding_fairness_delta: f64) -> PruneOutcome {
        let WindowSpec::Discounted { window, threshold, delay, .. } = self.spec else {
            log::warn!("prune called on a sliding-window history; ignoring");
            return PruneOutcome::default();
        };
        if guiding_fairness_delta.abs() < threshold {
            self.stable_count += 1;
        } else {
            self.stable_count = 0;
        }
        if self.stable_count < delay {
            return PruneOutcome::default();
        }
        self.stable_count = 0;
        let removed = self.buffer.len().saturating_sub(window);
        if removed > 0 {
            self.buffer.drain(..removed);
            self.rebuild_cache();
        }
        PruneOutcome { removed }
    }

    /// Records feedback that arrives after the interaction at `t` was pushed.
    pub fn attach_feedback(&mut self, t: u64, correct: usize) -> Result<(), Error> {
        let idx = self
            .buffer
            .binary_search_by_key(&t, |x| x.t)
            .map_err(|_| Error::History(format!("no interaction at t={t} in history")))?;
        let weight = discount_weight(self.spec.gamma(), self.anchor - t);
        let x = &mut self.buffer[idx];
        if x.feedback.is_some() {
            return Err(Error::History(format!("interaction {t} already has feedback")));
        }
        x.feedback = Some(correct);
        for g in &x.groups {
            self.cache.entry(*g).or_default().add_feedback(x.action, correct, weight);
        }
        Ok(())
    }

    /// Cached confusion statistics for `group`, weighted relative to `now`.
    pub fn confusion(&self, group: GroupId, now: u64) -> WeightedConfusionMatrix {
        let mut m = self.cache.get(&group).copied().unwrap_or_default();
        if now != self.anchor {
            let f = if now >= self.anchor {
                discount_weight(self.spec.gamma(), now - self.anchor)
            } else {
                1.0 / discount_weight(self.spec.gamma(), self.anchor - now)
            };
            m.scale(f);
        }
        m
    }

    /// Confusion statistics recomputed from the buffer.
    pub fn confusion_batch(&self, group: GroupId, now: u64) -> WeightedConfusionMatrix {
        confusion_over(self.buffer.iter(), self.spec.gamma(), group, now)
    }

    /// Groups that have appeared since the cache was last rebuilt.
    pub fn groups(&self) -> impl Iterator<Item = GroupId> + '_ {
        self.cache.keys().copied()
    }

    fn rebuild_cache(&mut self) {
        self.cache.clear();
        let gamma = self.spec.gamma();
        for x in &self.buffer {
            let w = discount_weight(gamma, self.anchor - x.t);
            for g in &x.groups {
                self.cache.entry(*g).or_default().add(x.action, x.feedback, w);
            }
        }
    }
}

/// `gamma^age`; exactly 1 when `gamma == 1`.
pub fn discount_weight(gamma: f64, age: u64) -> f64 {
    if gamma == 1.0 {
        1.0
    } else {
        gamma.powf(age as f64)
    }
}

/// Confusion statistics of `group` over an arbitrary slice of interactions.
pub fn confusion_over<'a>(
    interactions: impl Iterator<Item = &'a Interaction>,
    gamma: f64,
    group: GroupId,
    now: u64,
) -> WeightedConfusionMatrix {
    let mut m = WeightedConfusionMatrix::default();
    for x in interactions {
        if x.groups.contains(&group) {
            m.add(x.action, x.feedback, discount_weight(gamma, now.saturating_sub(x.t)));
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{FeatureVector, Objective, RewardVector};

    fn x(t: u64, group: u32, action: usize, feedback: Option<usize>) -> Interaction {
        Interaction {
            t,
            state: vec![],
            individual: FeatureVector::default(),
            groups: vec![GroupId(group)],
            action,
            action_dist: if action == 1 { vec![0.0, 1.0] } else { vec![1.0, 0.0] },
            reward: RewardVector::zeros(&[Objective::R]),
            feedback,
        }
    }

    #[test]
    fn sliding_window_evicts_oldest() {
        let mut h = FairnessHistory::new(WindowSpec::sliding(2));
        for t in 0..3 {
            h.push(x(t, 0, 1, None)).unwrap();
        }
        let ts: Vec<u64> = h.iter().map(|x| x.t).collect();
        assert_eq!(ts, vec![1, 2]);

        let mut h = FairnessHistory::new(WindowSpec::sliding(500));
        for t in 0..400 {
            h.push(x(t, 0, 0, None)).unwrap();
        }
        assert_eq!(h.len(), 400);
    }

    #[test]
    fn discounted_grows_until_pruned() {
        let mut h = FairnessHistory::new(WindowSpec::discounted(3, 0.9, 1e-4, 2));
        for t in 0..5 {
            h.push(x(t, 0, 1, None)).unwrap();
        }
        assert_eq!(h.len(), 5);
    }

    #[test]
    fn rejects_non_monotone_time() {
        let mut h = FairnessHistory::new(WindowSpec::sliding(4));
        h.push(x(3, 0, 1, None)).unwrap();
        assert!(h.push(x(3, 0, 1, None)).is_err());
        assert!(h.push(x(1, 0, 1, None)).is_err());
    }

    #[test]
    fn weights() {
        let h = FairnessHistory::new(WindowSpec::sliding(4));
        assert_eq!(h.weight_of(&x(0, 0, 0, None), 10), 1.0);
        let h = FairnessHistory::new(WindowSpec::discounted(4, 1.0, 1e-4, 1));
        assert_eq!(h.weight_of(&x(0, 0, 0, None), 10), 1.0);
        let h = FairnessHistory::new(WindowSpec::discounted(4, 0.9, 1e-4, 1));
        assert!((h.weight_of(&x(3, 0, 0, None), 5) - 0.81).abs() < 1e-15);
    }

    #[test]
    fn prune_fires_exactly_at_delay() {
        let delay = 4;
        let mut h = FairnessHistory::new(WindowSpec::discounted(3, 0.9, 1e-4, delay));
        for t in 0..10 {
            h.push(x(t, 0, 1, None)).unwrap();
        }
        for _ in 0..delay - 1 {
            assert_eq!(h.prune(5e-5).removed, 0);
        }
        assert_eq!(h.prune(5e-5).removed, 7);
        let ts: Vec<u64> = h.iter().map(|x| x.t).collect();
        assert_eq!(ts, vec![7, 8, 9]);
        assert_eq!(h.stable_count(), 0);
    }

    #[test]
    fn large_delta_resets_counter() {
        let mut h = FairnessHistory::new(WindowSpec::discounted(3, 0.9, 1e-4, 3));
        for t in 0..10 {
            h.push(x(t, 0, 1, None)).unwrap();
        }
        h.prune(0.0);
        h.prune(0.0);
        assert_eq!(h.stable_count(), 2);
        assert_eq!(h.prune(1.0).removed, 0);
        assert_eq!(h.stable_count(), 0);
        assert_eq!(h.len(), 10);
    }

    #[test]
    fn prune_on_sliding_is_noop() {
        let mut h = FairnessHistory::new(WindowSpec::sliding(2));
        h.push(x(0, 0, 1, None)).unwrap();
        assert_eq!(h.prune(0.0), PruneOutcome::default());
    }

    #[test]
    fn confusion_hand_count() {
        let h = FairnessHistory::new(WindowSpec::sliding(10));
        assert_eq!(h.confusion(GroupId(0), 0), WeightedConfusionMatrix::default());

        let mut h = FairnessHistory::new(WindowSpec::sliding(10));
        h.push(x(0, 0, 1, Some(1))).unwrap();
        h.push(x(1, 0, 1, Some(0))).unwrap();
        h.push(x(2, 0, 0, Some(0))).unwrap();
        h.push(x(3, 1, 1, Some(1))).unwrap();
        let m = h.confusion(GroupId(0), 3);
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (1.0, 1.0, 0.0, 1.0));
        assert_eq!(m, h.confusion_batch(GroupId(0), 3));
    }

    #[test]
    fn discounted_confusion_weights_by_age() {
        let mut h = FairnessHistory::new(WindowSpec::discounted(10, 0.5, 1e-4, 1));
        h.push(x(0, 0, 1, Some(1))).unwrap();
        h.push(x(1, 0, 1, Some(1))).unwrap();
        assert_eq!(h.confusion(GroupId(0), 1).tp, 1.5);
        assert_eq!(h.confusion_batch(GroupId(0), 1).tp, 1.5);
    }

    #[test]
    fn feedback_free_interactions_count_for_rates_only() {
        let mut h = FairnessHistory::new(WindowSpec::sliding(10));
        h.push(x(0, 0, 1, None)).unwrap();
        h.push(x(1, 0, 0, Some(0))).unwrap();
        let m = h.confusion(GroupId(0), 1);
        assert_eq!(m.total, 2.0);
        assert_eq!(m.positive_actions, 1.0);
        assert_eq!(m.with_feedback(), 1.0);
    }

    #[test]
    fn late_feedback_updates_cache() {
        let mut h = FairnessHistory::new(WindowSpec::discounted(10, 0.5, 1e-4, 1));
        h.push(x(0, 0, 1, None)).unwrap();
        h.push(x(1, 0, 0, None)).unwrap();
        h.attach_feedback(0, 1).unwrap();
        assert_eq!(h.confusion(GroupId(0), 1).tp, 0.5);
        assert_eq!(h.confusion(GroupId(0), 1), h.confusion_batch(GroupId(0), 1));
        assert!(h.attach_feedback(0, 1).is_err());
        assert!(h.attach_feedback(7, 1).is_err());
    }
}
