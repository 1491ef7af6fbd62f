//! Batch evaluation of every fairness notion over a history snapshot.

use serde::{Deserialize, Serialize};

use super::distance::{total_variation, DistanceMetric, PreparedFeatures};
use crate::Error;
use crate::history::{discount_weight, FairnessHistory, WeightedConfusionMatrix};
use crate::mdp::{FeatureSchema, GroupId, Interaction, Objective};

/// A notion value. Undefined values carry `value == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessValue {
    pub value: f64,
    pub defined: bool,
}

impl FairnessValue {
    pub fn defined(value: f64) -> Self {
        FairnessValue { value, defined: true }
    }

    pub fn undefined() -> Self {
        FairnessValue { value: 0.0, defined: false }
    }

    /// The reward contribution: undefined counts as no penalty.
    pub fn or_zero(self) -> f64 {
        if self.defined {
            self.value
        } else {
            0.0
        }
    }
}

/// Parameters of a single notion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotionSpec {
    pub kind: Objective,
    pub groups: (GroupId, GroupId),
    pub distance: DistanceMetric,
    pub lambda: f64,
    pub k: usize,
}

impl NotionSpec {
    pub fn new(kind: Objective, groups: (GroupId, GroupId)) -> Self {
        NotionSpec { kind, groups, distance: DistanceMetric::Heom, lambda: 0.1, k: 5 }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.kind == Objective::R {
            return Err(Error::Config("R is not a fairness notion".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

fn gap(a: Option<f64>, b: Option<f64>) -> FairnessValue {
    match (a, b) {
        (Some(a), Some(b)) => FairnessValue::defined(-(a - b).abs()),
        _ => FairnessValue::undefined(),
    }
}

/// Group notion from the two groups' weighted confusion statistics.
pub fn group_notion(
    kind: Objective,
    g: &WeightedConfusionMatrix,
    h: &WeightedConfusionMatrix,
) -> FairnessValue {
    match kind {
        Objective::SP => gap(g.positive_rate(), h.positive_rate()),
        Objective::EO => gap(g.recall(), h.recall()),
        Objective::OAE => gap(g.accuracy(), h.accuracy()),
        Objective::PP => gap(g.precision(), h.precision()),
        Objective::PE => gap(g.false_positive_rate(), h.false_positive_rate()),
        other => panic!("{other} is not a group notion"),
    }
}

fn group_over(kind: Objective, h: &FairnessHistory, g: GroupId, h2: GroupId, now: u64) -> FairnessValue {
    group_notion(kind, &h.confusion(g, now), &h.confusion(h2, now))
}

pub fn statistical_parity(h: &FairnessHistory, g: GroupId, h2: GroupId, now: u64) -> FairnessValue {
    group_over(Objective::SP, h, g, h2, now)
}

pub fn equal_opportunity(h: &FairnessHistory, g: GroupId, h2: GroupId, now: u64) -> FairnessValue {
    group_over(Objective::EO, h, g, h2, now)
}

pub fn overall_accuracy_equality(
    h: &FairnessHistory,
    g: GroupId,
    h2: GroupId,
    now: u64,
) -> FairnessValue {
    group_over(Objective::OAE, h, g, h2, now)
}

pub fn predictive_parity(h: &FairnessHistory, g: GroupId, h2: GroupId, now: u64) -> FairnessValue {
    group_over(Objective::PP, h, g, h2, now)
}

pub fn predictive_equality(h: &FairnessHistory, g: GroupId, h2: GroupId, now: u64) -> FairnessValue {
    group_over(Objective::PE, h, g, h2, now)
}

/// What individual notions need from one interaction.
#[derive(Debug, Clone)]
pub struct IndividualRecord<'a> {
    pub t: u64,
    pub features: PreparedFeatures,
    pub action: usize,
    pub action_dist: &'a [f64],
    pub weight: f64,
}

impl<'a> IndividualRecord<'a> {
    pub fn from_interactions(
        schema: &FeatureSchema,
        interactions: impl IntoIterator<Item = &'a Interaction>,
        gamma: f64,
        now: u64,
    ) -> Vec<Self> {
        interactions
            .into_iter()
            .map(|x| IndividualRecord {
                t: x.t,
                features: PreparedFeatures::new(schema, &x.individual),
                action: x.action,
                action_dist: &x.action_dist,
                weight: discount_weight(gamma, now.saturating_sub(x.t)),
            })
            .collect()
    }
}

pub(crate) fn clamp_unit(raw: f64, what: &str) -> f64 {
    if !(-1.0..=0.0).contains(&raw) {
        log::debug!("{what} value {raw} clamped to [-1, 0]");
    }
    raw.clamp(-1.0, 0.0)
}

/// Weighted individual fairness over all ordered pairs of `records`.
pub fn individual_fairness_over(
    records: &[IndividualRecord<'_>],
    metric: DistanceMetric,
    lambda: f64,
) -> FairnessValue {
    if records.len() < 2 {
        return FairnessValue::undefined();
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, a) in records.iter().enumerate() {
        for (j, b) in records.iter().enumerate() {
            if i == j {
                continue;
            }
            let w = a.weight * b.weight;
            let d = a.features.pair_term(&b.features, metric, lambda);
            num += w * (d - total_variation(a.action_dist, b.action_dist));
            den += w;
        }
    }
    if den <= 0.0 {
        return FairnessValue::undefined();
    }
    FairnessValue::defined(clamp_unit(-1.0 + num / den, "IF"))
}

/// Indices of the `k` nearest neighbours of `records[i]`, nearest first,
/// ties going to the earlier timestep.
pub fn nearest_neighbours(
    records: &[IndividualRecord<'_>],
    i: usize,
    k: usize,
    metric: DistanceMetric,
) -> Vec<usize> {
    let mut others: Vec<(f64, u64, usize)> = records
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, r)| (records[i].features.distance(&r.features, metric), r.t, j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.truncate(k);
    others.into_iter().map(|(_, _, j)| j).collect()
}

/// Weighted consistency score complement with `k` neighbours.
pub fn consistency_over(
    records: &[IndividualRecord<'_>],
    k: usize,
    metric: DistanceMetric,
) -> FairnessValue {
    if k == 0 || records.len() < k + 1 {
        return FairnessValue::undefined();
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, r) in records.iter().enumerate() {
        let sum: f64 =
            nearest_neighbours(records, i, k, metric).iter().map(|&j| records[j].action as f64).sum();
        num += r.weight * (r.action as f64 - sum).abs() / k as f64;
        den += r.weight;
    }
    if den <= 0.0 {
        return FairnessValue::undefined();
    }
    FairnessValue::defined(clamp_unit(-num / den, "CSC"))
}

pub fn individual_fairness(
    h: &FairnessHistory,
    schema: &FeatureSchema,
    spec: &NotionSpec,
    now: u64,
) -> FairnessValue {
    let records = IndividualRecord::from_interactions(schema, h.iter(), h.spec().gamma(), now);
    individual_fairness_over(&records, spec.distance, spec.lambda)
}

pub fn consistency_score_complement(
    h: &FairnessHistory,
    schema: &FeatureSchema,
    spec: &NotionSpec,
    now: u64,
) -> FairnessValue {
    let records = IndividualRecord::from_interactions(schema, h.iter(), h.spec().gamma(), now);
    consistency_over(&records, spec.k, spec.distance)
}

/// Any notion over an arbitrary run of interactions, recomputed from scratch.
pub fn evaluate_over<'a>(
    interactions: impl Iterator<Item = &'a Interaction> + Clone,
    schema: &FeatureSchema,
    spec: &NotionSpec,
    gamma: f64,
    now: u64,
) -> FairnessValue {
    match spec.kind {
        Objective::R => panic!("R is not a fairness notion"),
        Objective::IF => {
            let records = IndividualRecord::from_interactions(schema, interactions, gamma, now);
            individual_fairness_over(&records, spec.distance, spec.lambda)
        }
        Objective::CSC => {
            let records = IndividualRecord::from_interactions(schema, interactions, gamma, now);
            consistency_over(&records, spec.k, spec.distance)
        }
        kind => {
            let (g, h) = spec.groups;
            let mg = crate::history::confusion_over(interactions.clone(), gamma, g, now);
            let mh = crate::history::confusion_over(interactions, gamma, h, now);
            group_notion(kind, &mg, &mh)
        }
    }
}

/// Any notion over the whole history, recomputed from scratch.
pub fn evaluate(
    h: &FairnessHistory,
    schema: &FeatureSchema,
    spec: &NotionSpec,
    now: u64,
) -> FairnessValue {
    evaluate_over(h.iter(), schema, spec, h.spec().gamma(), now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::WindowSpec;
    use crate::mdp::{FeatureVector, NumericFeature, RewardVector};

    const G: GroupId = GroupId(0);
    const H: GroupId = GroupId(1);

    fn m(tp: f64, fp: f64, fn_: f64, tn: f64) -> WeightedConfusionMatrix {
        WeightedConfusionMatrix {
            tp,
            fp,
            fn_,
            tn,
            positive_actions: tp + fp,
            total: tp + fp + fn_ + tn,
        }
    }

    fn close(v: FairnessValue, expected: f64) {
        assert!(v.defined, "expected a defined value");
        assert!((v.value - expected).abs() < 1e-12, "{} vs {}", v.value, expected);
    }

    #[test]
    fn statistical_parity_hand_count() {
        let mut hist = FairnessHistory::new(WindowSpec::sliding(10));
        let seq = [(0, 1), (0, 1), (0, 0), (1, 1), (1, 0)];
        for (t, (g, a)) in seq.iter().enumerate() {
            hist.push(Interaction {
                t: t as u64,
                state: vec![],
                individual: FeatureVector { numeric: vec![], nominal: vec![] },
                groups: vec![GroupId(*g)],
                action: *a,
                action_dist: vec![1.0 - *a as f64, *a as f64],
                reward: RewardVector::zeros(&[Objective::R]),
                feedback: None,
            })
            .unwrap();
        }
        close(statistical_parity(&hist, G, H, 4), -(2.0f64 / 3.0 - 0.5).abs());
        assert!(!statistical_parity(&hist, G, GroupId(7), 4).defined);
    }

    #[test]
    fn rate_notions_hand_values() {
        close(group_notion(Objective::EO, &m(1.0, 0.0, 1.0, 0.0), &m(1.0, 0.0, 0.0, 0.0)), -0.5);
        close(group_notion(Objective::PP, &m(1.0, 1.0, 0.0, 0.0), &m(1.0, 0.0, 0.0, 0.0)), -0.5);
        close(group_notion(Objective::PE, &m(0.0, 1.0, 0.0, 0.0), &m(0.0, 0.0, 0.0, 1.0)), -1.0);
        close(
            group_notion(Objective::OAE, &m(1.0, 1.0, 0.0, 1.0), &m(1.0, 1.0, 0.0, 0.0)),
            -(2.0f64 / 3.0 - 0.5),
        );
        assert!(!group_notion(Objective::EO, &m(0.0, 1.0, 0.0, 1.0), &m(1.0, 0.0, 0.0, 0.0)).defined);
        assert!(!group_notion(Objective::PP, &m(0.0, 0.0, 1.0, 1.0), &m(1.0, 0.0, 0.0, 0.0)).defined);
        assert!(!group_notion(Objective::PE, &m(1.0, 0.0, 1.0, 0.0), &m(1.0, 0.0, 0.0, 1.0)).defined);
        assert!(!group_notion(Objective::OAE, &m(0.0, 0.0, 0.0, 0.0), &m(1.0, 0.0, 0.0, 1.0)).defined);
        let same = m(2.0, 1.0, 3.0, 4.0);
        for kind in [Objective::SP, Objective::EO, Objective::OAE, Objective::PP, Objective::PE] {
            close(group_notion(kind, &same, &same), 0.0);
        }
    }

    fn record(x: f64, dist: &[f64], action: usize, t: u64) -> IndividualRecord<'_> {
        let schema = FeatureSchema {
            numeric: vec![NumericFeature { name: "x".into(), min: 0.0, max: 1.0, sensitive: false }],
            nominal: vec![],
        };
        IndividualRecord {
            t,
            features: PreparedFeatures::new(&schema, &FeatureVector { numeric: vec![x], nominal: vec![] }),
            action,
            action_dist: dist,
            weight: 1.0,
        }
    }

    #[test]
    fn individual_fairness_identical_pair() {
        let d = [0.3, 0.7];
        let recs = vec![record(0.4, &d, 1, 0), record(0.4, &d, 1, 1)];
        close(individual_fairness_over(&recs, DistanceMetric::Heom, 0.1), 0.0);
        assert!(!individual_fairness_over(&recs[..1], DistanceMetric::Heom, 0.1).defined);
    }

    #[test]
    fn consistency_hand_value() {
        let d = [0.0, 1.0];
        let recs = vec![record(0.1, &d, 1, 0), record(0.2, &d, 1, 1), record(0.3, &d, 0, 2)];
        // record 2 sees two positive neighbours: |0 - 2| / 2 = 1; records 0 and 1
        // see one positive and one negative neighbour: |1 - 1| / 2 = 0
        close(consistency_over(&recs, 2, DistanceMetric::Hmom), -1.0 / 3.0);
        assert!(!consistency_over(&recs, 3, DistanceMetric::Hmom).defined);
        let zeros = [1.0, 0.0];
        let recs = vec![record(0.1, &zeros, 0, 0), record(0.2, &zeros, 0, 1), record(0.3, &zeros, 0, 2)];
        close(consistency_over(&recs, 2, DistanceMetric::Hmom), 0.0);
    }

    #[test]
    fn neighbour_ties_prefer_earlier() {
        let d = [0.5, 0.5];
        let recs = vec![record(0.5, &d, 0, 0), record(0.5, &d, 0, 3), record(0.5, &d, 0, 7), record(0.5, &d, 0, 9)];
        assert_eq!(nearest_neighbours(&recs, 3, 2, DistanceMetric::Heom), vec![0, 1]);
        assert_eq!(nearest_neighbours(&recs, 0, 2, DistanceMetric::Heom), vec![1, 2]);
    }
}
