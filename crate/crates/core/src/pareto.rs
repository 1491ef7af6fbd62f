//! Pareto dominance, coverage sets and their summaries.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::Objective;

/// `a` is at least as good everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the non-dominated points; of several equal points only the
/// first is kept.
pub fn nondominated_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        for (j, q) in points.iter().enumerate() {
            let q = q.as_ref();
            if dominates(q, p) || (j < i && q == p) {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

pub fn nondominated<P: AsRef<[f64]> + Clone>(points: &[P]) -> Vec<P> {
    nondominated_indices(points).into_iter().map(|i| points[i].clone()).collect()
}

/// Front index of every point: 0 for the non-dominated set, 1 for the set
/// that is non-dominated once front 0 is removed, and so on.
pub fn nondominated_ranks<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(points[i].as_ref(), points[j].as_ref()) {
                dominating[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut rank = vec![usize::MAX; n];
    let mut front: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    let mut r = 0;
    while !front.is_empty() {
        let mut next = Vec::new();
        for &i in &front {
            rank[i] = r;
            for &j in &dominating[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        front = next;
        r += 1;
    }
    rank
}

/// Crowding distance of each point in `members` within `points`; boundary
/// points get infinity.
pub fn crowding_distance<P: AsRef<[f64]>>(points: &[P], members: &[usize]) -> Vec<f64> {
    let mut dist = vec![0.0; members.len()];
    if members.is_empty() {
        return dist;
    }
    let d = points[members[0]].as_ref().len();
    let mut order: Vec<usize> = (0..members.len()).collect();
    for k in 0..d {
        let value = |i: usize| points[members[i]].as_ref()[k];
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)));
        let lo = value(order[0]);
        let hi = value(order[order.len() - 1]);
        dist[order[0]] = f64::INFINITY;
        dist[order[order.len() - 1]] = f64::INFINITY;
        if hi - lo <= 0.0 {
            continue;
        }
        for w in 1..order.len().saturating_sub(1) {
            dist[order[w]] += (value(order[w + 1]) - value(order[w - 1])) / (hi - lo);
        }
    }
    dist
}

fn min_max_scaled<P: AsRef<[f64]>>(points: &[P]) -> Vec<Vec<f64>> {
    let d = points.first().map_or(0, |p| p.as_ref().len());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for (k, &v) in p.as_ref().iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    points
        .iter()
        .map(|p| {
            p.as_ref()
                .iter()
                .enumerate()
                .map(|(k, &v)| if hi[k] > lo[k] { (v - lo[k]) / (hi[k] - lo[k]) } else { 0.0 })
                .collect()
        })
        .collect()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Up to `m` indices: every per-objective maximiser (first on ties), then
/// the point farthest from those already chosen, repeatedly. Equal
/// distances are broken at random.
pub fn representative_subset<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    m: usize,
    rng: &mut R,
) -> Vec<usize> {
    if points.len() <= m {
        return (0..points.len()).collect();
    }
    let d = points[0].as_ref().len();
    let mut chosen: Vec<usize> = Vec::new();
    for k in 0..d {
        let mut best = 0;
        for (i, p) in points.iter().enumerate() {
            if p.as_ref()[k] > points[best].as_ref()[k] {
                best = i;
            }
        }
        if !chosen.contains(&best) {
            chosen.push(best);
        }
    }
    chosen.truncate(m);
    let scaled = min_max_scaled(points);
    let mut nearest: Vec<f64> = scaled
        .iter()
        .map(|p| chosen.iter().map(|&c| euclidean(p, &scaled[c])).fold(f64::INFINITY, f64::min))
        .collect();
    while chosen.len() < m {
        let far = (0..points.len())
            .filter(|i| !chosen.contains(i))
            .map(|i| nearest[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> =
            (0..points.len()).filter(|i| !chosen.contains(i) && nearest[*i] == far).collect();
        let pick = ties[rng.random_range(0..ties.len())];
        chosen.push(pick);
        for (i, p) in scaled.iter().enumerate() {
            nearest[i] = nearest[i].min(euclidean(p, &scaled[pick]));
        }
    }
    chosen
}

/// Reward maxima used to put the performance axis at 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub reward_max: f64,
}

pub const HIRING_REWARD_MAX: f64 = 46.53243;
pub const FRAUD_REWARD_MAX: f64 = 906.0;

/// Maps every point so 0 is the best value on each axis: the reward axis by
/// `(R - R_max) / |R_max|`, fairness axes by the magnitude of the run-wide
/// minimum. An observed reward above the configured maximum replaces it.
pub fn normalize<P: AsRef<[f64]>>(
    points: &[P],
    objectives: &[Objective],
    spec: &NormalizationSpec,
) -> Vec<Vec<f64>> {
    let mut scale = Vec::with_capacity(objectives.len());
    for (k, o) in objectives.iter().enumerate() {
        let column = points.iter().map(|p| p.as_ref()[k]);
        if *o == Objective::R {
            let observed = column.fold(f64::NEG_INFINITY, f64::max);
            let max = spec.reward_max.max(observed);
            scale.push((max, if max == 0.0 { 1.0 } else { max.abs() }));
        } else {
            let min = column.fold(0.0, f64::min);
            scale.push((0.0, if min == 0.0 { 1.0 } else { min.abs() }));
        }
    }
    points
        .iter()
        .map(|p| {
            p.as_ref()
                .iter()
                .zip(&scale)
                .map(|(&v, &(offset, div))| {
                    let x = (v - offset) / div;
                    if x == 0.0 {
                        0.0
                    } else {
                        x.min(0.0)
                    }
                })
                .collect()
        })
        .collect()
}

/// Mean returns of one evaluated policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPoint {
    pub seed: u64,
    /// All eight objectives in canonical order.
    pub returns: Vec<f64>,
    /// Which buffered command produced this policy.
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    Mean,
    Std,
}

impl Statistic {
    pub fn label(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Std => "std",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// `None` for the pooled row.
    pub seed: Option<u64>,
    pub statistic: Statistic,
    pub count: usize,
    pub values: Vec<f64>,
    /// Set when a standard deviation is reported for a single point.
    pub std_undefined: bool,
}

pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn rows_for(seed: Option<u64>, points: &[&PolicyPoint]) -> Vec<SummaryRow> {
    let d = points[0].returns.len();
    let mut means = Vec::with_capacity(d);
    let mut stds = Vec::with_capacity(d);
    let mut undefined = false;
    for k in 0..d {
        let column: Vec<f64> = points.iter().map(|p| p.returns[k]).collect();
        let (m, s) = mean_std(&column);
        means.push(m);
        undefined |= s.is_none();
        stds.push(s.unwrap_or(0.0));
    }
    let count = points.len();
    vec![
        SummaryRow { seed, statistic: Statistic::Mean, count, values: means, std_undefined: false },
        SummaryRow { seed, statistic: Statistic::Std, count, values: stds, std_undefined: undefined },
    ]
}

/// Mean and sample standard deviation per seed, then over all points.
pub fn summarize(points: &[PolicyPoint]) -> Vec<SummaryRow> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut by_seed: BTreeMap<u64, Vec<&PolicyPoint>> = BTreeMap::new();
    for p in points {
        by_seed.entry(p.seed).or_default().push(p);
    }
    let mut rows = Vec::new();
    for (seed, group) in &by_seed {
        rows.extend(rows_for(Some(*seed), group));
    }
    let all: Vec<&PolicyPoint> = points.iter().collect();
    rows.extend(rows_for(None, &all));
    rows
}
