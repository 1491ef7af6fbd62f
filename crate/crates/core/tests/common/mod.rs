//! Random inputs, brute-force reference implementations and toy MDPs
//! shared by the integration tests.
#![allow(dead_code)]

use farel::fairness::notions::evaluate;
use farel::fairness::{DistanceMetric, NotionSpec};
use farel::history::{FairnessHistory, WindowSpec};
use farel::mdp::{
    Environment, FeatureSchema, FeatureVector, GroupId, Interaction, NominalFeature, NumericFeature,
    Objective, RewardVector, StepOutcome,
};
use farel::neural::{Activation, DenseNet};
use rand::Rng;

pub const G: GroupId = GroupId(0);
pub const H: GroupId = GroupId(1);

pub fn random_schema<R: Rng>(rng: &mut R) -> FeatureSchema {
    let numeric = (0..rng.random_range(0..4))
        .map(|i| {
            let min = rng.random_range(-10.0..10.0);
            NumericFeature {
                name: format!("n{i}"),
                min,
                max: min + rng.random_range(0.5..50.0),
                sensitive: rng.random_bool(0.3),
            }
        })
        .collect();
    let nominal = (0..rng.random_range(1..5))
        .map(|i| NominalFeature {
            name: format!("c{i}"),
            cardinality: rng.random_range(2..6),
            sensitive: rng.random_bool(0.3),
        })
        .collect();
    FeatureSchema { numeric, nominal }
}

pub fn random_features<R: Rng>(schema: &FeatureSchema, rng: &mut R) -> FeatureVector {
    FeatureVector {
        // occasionally outside the bounds to exercise clamping
        numeric: schema.numeric.iter().map(|f| rng.random_range(f.min - 1.0..f.max + 1.0)).collect(),
        nominal: schema.nominal.iter().map(|f| rng.random_range(0..f.cardinality)).collect(),
    }
}

/// A copy of `x` whose sensitive positions are redrawn.
pub fn perturb_sensitive<R: Rng>(schema: &FeatureSchema, x: &FeatureVector, rng: &mut R) -> FeatureVector {
    let mut y = x.clone();
    for (i, f) in schema.numeric.iter().enumerate() {
        if f.sensitive {
            y.numeric[i] = rng.random_range(f.min..f.max);
        }
    }
    for (i, f) in schema.nominal.iter().enumerate() {
        if f.sensitive {
            y.nominal[i] = rng.random_range(0..f.cardinality);
        }
    }
    y
}

fn random_dist<R: Rng>(rng: &mut R) -> Vec<f64> {
    match rng.random_range(0..3) {
        0 => vec![1.0, 0.0],
        1 => vec![0.0, 1.0],
        _ => {
            let p: f64 = rng.random();
            vec![1.0 - p, p]
        }
    }
}

pub fn random_interaction<R: Rng>(schema: &FeatureSchema, t: u64, rng: &mut R) -> Interaction {
    let groups = match rng.random_range(0..10) {
        0 => vec![G, H],
        1..=4 => vec![G],
        _ => vec![H],
    };
    let action_dist = random_dist(rng);
    let action = if rng.random_bool(action_dist[1]) { 1 } else { 0 };
    Interaction {
        t,
        state: vec![],
        individual: random_features(schema, rng),
        groups,
        action,
        action_dist,
        reward: RewardVector { labels: vec![Objective::R], values: vec![0.0] },
        feedback: rng.random_bool(0.6).then(|| rng.random_range(0..2)),
    }
}

/// Interactions with strictly increasing, occasionally gapped timesteps.
pub fn random_stream<R: Rng>(schema: &FeatureSchema, n: usize, rng: &mut R) -> Vec<Interaction> {
    let mut t = rng.random_range(0..5u64);
    (0..n)
        .map(|_| {
            t += if rng.random_bool(0.1) { rng.random_range(2..4) } else { 1 };
            random_interaction(schema, t, rng)
        })
        .collect()
}

// ---- reference implementations -------------------------------------------------

/// Non-sensitive values: scaled numerics, raw nominal codes and nominal
/// codes scaled by their largest code.
pub struct Plain {
    pub numeric: Vec<f64>,
    pub codes: Vec<u32>,
    pub code_scaled: Vec<f64>,
}

pub fn plain(schema: &FeatureSchema, x: &FeatureVector) -> Plain {
    let mut numeric = vec![];
    for (i, f) in schema.numeric.iter().enumerate() {
        if !f.sensitive {
            let v = (x.numeric[i] - f.min) / (f.max - f.min);
            numeric.push(v.max(0.0).min(1.0));
        }
    }
    let mut codes = vec![];
    let mut code_scaled = vec![];
    for (i, f) in schema.nominal.iter().enumerate() {
        if !f.sensitive {
            codes.push(x.nominal[i]);
            code_scaled.push(x.nominal[i] as f64 / (f.cardinality - 1) as f64);
        }
    }
    Plain { numeric, codes, code_scaled }
}

pub fn ref_distance(metric: DistanceMetric, a: &Plain, b: &Plain) -> f64 {
    match metric {
        DistanceMetric::BrayCurtis => {
            let xs: Vec<f64> = a.numeric.iter().chain(&a.code_scaled).copied().collect();
            let ys: Vec<f64> = b.numeric.iter().chain(&b.code_scaled).copied().collect();
            let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - y).abs()).sum();
            let den: f64 = xs.iter().zip(&ys).map(|(x, y)| (x + y).abs()).sum();
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        }
        DistanceMetric::Heom | DistanceMetric::Hmom => {
            let mut s = 0.0;
            for (x, y) in a.numeric.iter().zip(&b.numeric) {
                s += (x - y).abs();
            }
            for (x, y) in a.codes.iter().zip(&b.codes) {
                if x != y {
                    s += 1.0;
                }
            }
            s
        }
    }
}

fn weight(gamma: f64, now: u64, t: u64) -> f64 {
    gamma.powi((now - t) as i32)
}

/// Weighted tallies (positives, total, tp, fp, fn, tn) for one group.
pub fn ref_tallies(xs: &[Interaction], gamma: f64, now: u64, g: GroupId) -> [f64; 6] {
    let mut out = [0.0; 6];
    for x in xs.iter().filter(|x| x.groups.contains(&g)) {
        let w = weight(gamma, now, x.t);
        out[1] += w;
        if x.action == 1 {
            out[0] += w;
        }
        match (x.action, x.feedback) {
            (1, Some(1)) => out[2] += w,
            (1, Some(0)) => out[3] += w,
            (0, Some(1)) => out[4] += w,
            (0, Some(0)) => out[5] += w,
            _ => {}
        }
    }
    out
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn rate(kind: Objective, c: &[f64; 6]) -> Option<f64> {
    let [pos, total, tp, fp, fn_, tn] = *c;
    match kind {
        Objective::SP => ratio(pos, total),
        Objective::EO => ratio(tp, tp + fn_),
        Objective::OAE => ratio(tp + tn, tp + fp + fn_ + tn),
        Objective::PP => ratio(tp, tp + fp),
        Objective::PE => ratio(fp, fp + tn),
        _ => unreachable!(),
    }
}

/// `None` when undefined.
pub fn ref_group(kind: Objective, xs: &[Interaction], gamma: f64, now: u64) -> Option<f64> {
    let a = rate(kind, &ref_tallies(xs, gamma, now, G))?;
    let b = rate(kind, &ref_tallies(xs, gamma, now, H))?;
    Some(-(a - b).abs())
}

pub fn ref_if(
    schema: &FeatureSchema,
    xs: &[Interaction],
    gamma: f64,
    now: u64,
    metric: DistanceMetric,
    lambda: f64,
) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let p: Vec<Plain> = xs.iter().map(|x| plain(schema, &x.individual)).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if i == j {
                continue;
            }
            let raw = ref_distance(metric, &p[i], &p[j]);
            let d = match metric {
                DistanceMetric::BrayCurtis => raw,
                _ => (-lambda * raw).exp(),
            };
            let tv = 0.5
                * xs[i].action_dist.iter().zip(&xs[j].action_dist).map(|(a, b)| (a - b).abs()).sum::<f64>();
            let w = weight(gamma, now, xs[i].t) * weight(gamma, now, xs[j].t);
            num += w * (d - tv);
            den += w;
        }
    }
    Some((-1.0 + num / den).max(-1.0).min(0.0))
}

pub fn ref_csc(schema: &FeatureSchema, xs: &[Interaction], gamma: f64, now: u64, metric: DistanceMetric, k: usize) -> Option<f64> {
    if xs.len() < k + 1 {
        return None;
    }
    let p: Vec<Plain> = xs.iter().map(|x| plain(schema, &x.individual)).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..xs.len() {
        // all pairs sorted by distance, then timestep
        let mut all: Vec<(f64, u64, usize)> = (0..xs.len())
            .filter(|&j| j != i)
            .map(|j| (ref_distance(metric, &p[i], &p[j]), xs[j].t, xs[j].action))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let s: f64 = all[..k].iter().map(|e| e.2 as f64).sum();
        let w = weight(gamma, now, xs[i].t);
        num += w * (xs[i].action as f64 - s).abs() / k as f64;
        den += w;
    }
    Some((-num / den).max(-1.0).min(0.0))
}

// ---- comparisons ----------------------------------------------------------------

pub fn history(window: WindowSpec, xs: &[Interaction]) -> FairnessHistory {
    let mut h = FairnessHistory::new(window);
    for x in xs {
        h.push(x.clone()).unwrap();
    }
    h
}

fn spec(kind: Objective, metric: DistanceMetric) -> NotionSpec {
    NotionSpec { distance: metric, ..NotionSpec::new(kind, (G, H)) }
}

/// Every notion of `xs` against the reference implementations: exact for
/// unweighted group notions, within 1e-12 otherwise.
pub fn compare_notions(schema: &FeatureSchema, xs: &[Interaction], gamma: f64) -> Result<(), String> {
    let window = if gamma == 1.0 {
        WindowSpec::sliding(xs.len().max(1))
    } else {
        WindowSpec::discounted(1, gamma, 0.0, 1)
    };
    let h = history(window, xs);
    let now = xs.last().map_or(0, |x| x.t);
    let close = |got: farel::FairnessValue, want: Option<f64>, tol: f64, what: String| -> Result<(), String> {
        if got.defined != want.is_some() {
            return Err(format!("{what}: defined {} vs reference {:?}", got.defined, want));
        }
        match want {
            Some(w) if (got.value - w).abs() > tol => Err(format!("{what}: {} vs {w}", got.value)),
            _ => Ok(()),
        }
    };
    for kind in [Objective::SP, Objective::EO, Objective::OAE, Objective::PP, Objective::PE] {
        let tol = if gamma == 1.0 { 0.0 } else { 1e-12 };
        let got = evaluate(&h, schema, &spec(kind, DistanceMetric::Heom), now);
        close(got, ref_group(kind, xs, gamma, now), tol, kind.to_string())?;
    }
    for metric in [DistanceMetric::BrayCurtis, DistanceMetric::Heom, DistanceMetric::Hmom] {
        let got = evaluate(&h, schema, &spec(Objective::IF, metric), now);
        close(got, ref_if(schema, xs, gamma, now, metric, 0.1), 1e-12, format!("IF {metric:?}"))?;
        let got = evaluate(&h, schema, &spec(Objective::CSC, metric), now);
        close(got, ref_csc(schema, xs, gamma, now, metric, 5), 1e-12, format!("CSC {metric:?}"))?;
    }
    Ok(())
}

/// Largest gap between cached and recomputed confusion matrices of both
/// groups, checked after every push and every prune of an `n`-step stream.
pub fn confusion_drift(window: WindowSpec, n: usize, seed: u64) -> f64 {
    let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let schema = random_schema(&mut rng);
    let mut h = FairnessHistory::new(window);
    let mut worst = 0.0f64;
    let check = |h: &FairnessHistory, worst: &mut f64| {
        let now = h.now().unwrap_or(0);
        for g in [G, H] {
            *worst = worst.max(h.confusion(g, now).max_abs_diff(&h.confusion_batch(g, now)));
        }
    };
    for x in random_stream(&schema, n, &mut rng) {
        h.push(x).unwrap();
        check(&h, &mut worst);
        if window.is_discounted() {
            let delta = if rng.random_bool(0.7) { 0.0 } else { 1.0 };
            h.prune(delta);
            check(&h, &mut worst);
        }
    }
    worst
}

/// Feeds one stream to a `gamma = 1` discounted history and a sliding window
/// of the same `w`; whenever pruning leaves exactly `w` interactions, every
/// notion must agree. Returns how many such moments were compared.
pub fn discounted_matches_sliding(w: usize, n: usize, seed: u64) -> Result<usize, String> {
    let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let schema = random_schema(&mut rng);
    let mut disc = FairnessHistory::new(WindowSpec::discounted(w, 1.0, 1e-4, 3));
    let mut slide = FairnessHistory::new(WindowSpec::sliding(w));
    let mut compared = 0;
    for x in random_stream(&schema, n, &mut rng) {
        disc.push(x.clone()).unwrap();
        slide.push(x).unwrap();
        let delta = if rng.random_bool(0.8) { 0.0 } else { 1.0 };
        let removed = disc.prune(delta).removed;
        if removed == 0 || disc.len() != w {
            continue;
        }
        compared += 1;
        let now = disc.now().unwrap();
        for kind in Objective::NOTIONS {
            for metric in [DistanceMetric::BrayCurtis, DistanceMetric::Heom] {
                let s = spec(kind, metric);
                let a = evaluate(&disc, &schema, &s, now);
                let b = evaluate(&slide, &schema, &s, now);
                if a != b {
                    return Err(format!("{kind} {metric:?} at t={now}: {a:?} vs {b:?}"));
                }
            }
        }
    }
    Ok(compared)
}

/// Counts violations of the distance properties over `pairs` random pairs:
/// identity, symmetry, sensitive-feature invariance, the unit range of
/// Bray-Curtis and the similarity, agreement with the reference metrics,
/// and HEOM equal to HMOM.
pub fn distance_violations(pairs: usize, seed: u64) -> (usize, Vec<String>) {
    use farel::fairness::{braycurtis, heom, hmom, similarity_exp};
    let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let mut count = 0;
    let mut notes = Vec::new();
    let mut flag = |what: &str, notes: &mut Vec<String>| {
        count += 1;
        if notes.len() < 5 {
            notes.push(what.to_string());
        }
    };
    let mut schema = random_schema(&mut rng);
    for i in 0..pairs {
        if i % 100 == 0 {
            schema = random_schema(&mut rng);
        }
        let a = random_features(&schema, &mut rng);
        let b = random_features(&schema, &mut rng);
        let a2 = perturb_sensitive(&schema, &a, &mut rng);
        let (pa, pb) = (plain(&schema, &a), plain(&schema, &b));
        let metrics: [(&str, fn(&FeatureSchema, &FeatureVector, &FeatureVector) -> f64, DistanceMetric); 3] = [
            ("braycurtis", braycurtis, DistanceMetric::BrayCurtis),
            ("heom", heom, DistanceMetric::Heom),
            ("hmom", hmom, DistanceMetric::Hmom),
        ];
        for (name, f, m) in metrics {
            let d = f(&schema, &a, &b);
            if f(&schema, &a, &a) != 0.0 {
                flag(&format!("{name} identity"), &mut notes);
            }
            if d != f(&schema, &b, &a) {
                flag(&format!("{name} symmetry"), &mut notes);
            }
            if f(&schema, &a2, &b) != d {
                flag(&format!("{name} sensitive invariance"), &mut notes);
            }
            if (d - ref_distance(m, &pa, &pb)).abs() > 1e-12 {
                flag(&format!("{name} reference"), &mut notes);
            }
            if !(d >= 0.0) {
                flag(&format!("{name} negative"), &mut notes);
            }
            if m == DistanceMetric::BrayCurtis && d > 1.0 {
                flag("braycurtis above 1", &mut notes);
            }
            let s = similarity_exp(d, 0.1);
            if !(s > 0.0 && s <= 1.0) {
                flag("similarity outside (0, 1]", &mut notes);
            }
        }
        if heom(&schema, &a, &b) != hmom(&schema, &a, &b) {
            flag("heom differs from hmom", &mut notes);
        }
    }
    (count, notes)
}

// ---- toy MDPs -------------------------------------------------------------------

fn toy_schema() -> FeatureSchema {
    FeatureSchema {
        numeric: vec![NumericFeature { name: "position".into(), min: 0.0, max: 32.0, sensitive: false }],
        nominal: vec![],
    }
}

/// A point cloud of up to 512 points in up to 8 dimensions. Half of the
/// clouds use small integers so that ties and duplicates are common.
pub fn random_cloud<R: Rng>(rng: &mut R) -> Vec<Vec<f64>> {
    let n = rng.random_range(0..=512);
    let d = rng.random_range(1..=8);
    let coarse = rng.random_bool(0.5);
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| if coarse { rng.random_range(0..4) as f64 } else { rng.random_range(-10.0..10.0) })
                .collect()
        })
        .collect()
}

/// Indices kept by a literal reading of the definition: a point survives
/// when no other point is at least as large everywhere and larger
/// somewhere, and no earlier point equals it.
pub fn pareto_oracle(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            !(0..points.len()).any(|j| {
                let ge = points[j].iter().zip(&points[i]).filter(|(a, b)| a >= b).count();
                let gt = points[j].iter().zip(&points[i]).filter(|(a, b)| a > b).count();
                let d = points[i].len();
                (ge == d && gt > 0) || (j < i && points[j] == points[i])
            })
        })
        .collect()
}

/// A random network of 1 to 3 layers, widths 1 to 8, mixed activations.
pub fn random_net<R: Rng>(rng: &mut R) -> DenseNet {
    let depth = rng.random_range(1..=3);
    let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8)).collect();
    let acts: Vec<Activation> = (0..depth)
        .map(|_| [Activation::Relu, Activation::Sigmoid, Activation::Identity][rng.random_range(0..3)])
        .collect();
    let mut net = DenseNet::new(&sizes, &acts, rng);
    for l in &mut net.layers {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    net
}

fn relu_pattern(net: &DenseNet, x: &[f64]) -> Vec<bool> {
    let cache = net.forward_cached(x);
    net.layers
        .iter()
        .zip(cache.pre_activations())
        .filter(|(l, _)| l.activation == Activation::Relu)
        .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
        .collect()
}

/// Largest relative error between backpropagated and central-difference
/// gradients of `c . net(x)` over every parameter and input coordinate.
/// Coordinates whose perturbation flips a ReLU are skipped.
pub fn gradient_error<R: Rng>(net: &DenseNet, rng: &mut R) -> f64 {
    const STEP: f64 = 1e-6;
    let x: Vec<f64> = (0..net.input_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..net.output_size()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |n: &DenseNet, x: &[f64]| n.forward(x).iter().zip(&c).map(|(y, c)| y * c).sum::<f64>();
    let (grads, input_grad) = net.backward(&net.forward_cached(&x), &c);
    let pattern = relu_pattern(net, &x);
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst = 0.0f64;

    let mut probe = net.clone();
    for li in 0..net.layers.len() {
        for which in 0..2 {
            let count = if which == 0 { net.layers[li].weights.len() } else { net.layers[li].bias.len() };
            for j in 0..count {
                fn param(n: &mut DenseNet, li: usize, which: usize, j: usize) -> &mut f64 {
                    if which == 0 { &mut n.layers[li].weights[j] } else { &mut n.layers[li].bias[j] }
                }
                let base = *param(&mut probe, li, which, j);
                *param(&mut probe, li, which, j) = base + STEP;
                let (up, pu) = (loss(&probe, &x), relu_pattern(&probe, &x));
                *param(&mut probe, li, which, j) = base - STEP;
                let (down, pd) = (loss(&probe, &x), relu_pattern(&probe, &x));
                *param(&mut probe, li, which, j) = base;
                if pu != pattern || pd != pattern {
                    continue;
                }
                let analytic = if which == 0 { grads.weights[li][j] } else { grads.bias[li][j] };
                worst = worst.max(rel(analytic, (up - down) / (2.0 * STEP)));
            }
        }
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += STEP;
        let mut xm = x.clone();
        xm[i] -= STEP;
        if relu_pattern(net, &xp) != pattern || relu_pattern(net, &xm) != pattern {
            continue;
        }
        worst = worst.max(rel(input_grad[i], (loss(net, &xp) - loss(net, &xm)) / (2.0 * STEP)));
    }
    worst
}

/// Five states in a row. Moving left from the first state pays 0.3, moving
/// right from the last pays 1.0; both end the episode.
pub struct Chain {
    pub state: usize,
    pub rng: rand_chacha::ChaCha8Rng,
}

pub const CHAIN_STATES: usize = 5;
pub const CHAIN_GAMMA: f64 = 0.7;

impl Chain {
    pub fn new() -> Self {
        Chain { state: 0, rng: rand::SeedableRng::seed_from_u64(0) }
    }

    pub fn one_hot(s: usize) -> Vec<f64> {
        let mut v = vec![0.0; CHAIN_STATES];
        v[s] = 1.0;
        v
    }
}

impl Environment for Chain {
    fn action_count(&self) -> usize {
        2
    }
    fn observation_size(&self) -> usize {
        CHAIN_STATES
    }
    fn horizon(&self) -> usize {
        20
    }
    fn schema(&self) -> FeatureSchema {
        toy_schema()
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = rand::SeedableRng::seed_from_u64(seed);
        self.state = self.rng.random_range(0..CHAIN_STATES);
        Self::one_hot(self.state)
    }
    fn step(&mut self, action: usize) -> StepOutcome {
        let here = self.state;
        let (reward, done) = match (action, here) {
            (0, 0) => (0.3, true),
            (1, s) if s == CHAIN_STATES - 1 => (1.0, true),
            (0, s) => {
                self.state = s - 1;
                (0.0, false)
            }
            (_, s) => {
                self.state = s + 1;
                (0.0, false)
            }
        };
        StepOutcome {
            observation: Self::one_hot(self.state),
            reward,
            feedback: None,
            individual: FeatureVector { numeric: vec![here as f64], nominal: vec![] },
            groups: vec![G],
            done,
        }
    }
}

/// Greedy action per state by value iteration on the chain.
pub fn chain_oracle(gamma: f64) -> Vec<usize> {
    let mut v = [0.0f64; CHAIN_STATES];
    let q = |v: &[f64; CHAIN_STATES], s: usize, a: usize| -> f64 {
        match (a, s) {
            (0, 0) => 0.3,
            (1, s) if s == CHAIN_STATES - 1 => 1.0,
            (0, s) => gamma * v[s - 1],
            (_, s) => gamma * v[s + 1],
        }
    };
    for _ in 0..200 {
        let mut next = v;
        for (s, n) in next.iter_mut().enumerate() {
            *n = q(&v, s, 0).max(q(&v, s, 1));
        }
        v = next;
    }
    (0..CHAIN_STATES).map(|s| if q(&v, s, 1) > q(&v, s, 0) { 1 } else { 0 }).collect()
}

pub const TREE_DEPTH: usize = 4;
const TREE_NODES: usize = (1 << (TREE_DEPTH + 1)) - 1;

/// Complete binary tree of depth four; each edge pays a fixed two-objective
/// reward.
pub struct Tree {
    pub node: usize,
    pub depth: usize,
    /// Reward of the edge from node `n` taking action `a` at `edges[2n + a]`.
    pub edges: Vec<[f64; 2]>,
}

impl Tree {
    pub fn new() -> Self {
        let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(2024);
        let edges = (0..2 * TREE_NODES).map(|_| [rng.random_range(0..4) as f64, rng.random_range(0..4) as f64]).collect();
        Tree { node: 0, depth: 0, edges }
    }

    fn observation(&self) -> Vec<f64> {
        let mut v = vec![0.0; TREE_NODES];
        v[self.node] = 1.0;
        v
    }

    /// Return of each of the sixteen action sequences.
    pub fn all_returns(&self) -> Vec<Vec<f64>> {
        (0..1usize << TREE_DEPTH)
            .map(|bits| {
                let mut node = 0;
                let mut r = vec![0.0, 0.0];
                for d in 0..TREE_DEPTH {
                    let a = (bits >> (TREE_DEPTH - 1 - d)) & 1;
                    let e = self.edges[2 * node + a];
                    r[0] += e[0];
                    r[1] += e[1];
                    node = 2 * node + 1 + a;
                }
                r
            })
            .collect()
    }
}

impl Tree {
    pub fn reset(&mut self) -> Vec<f64> {
        self.node = 0;
        self.depth = 0;
        self.observation()
    }

    /// Observation, two-objective reward and whether a leaf was reached.
    pub fn step(&mut self, action: usize) -> (Vec<f64>, [f64; 2], bool) {
        let e = self.edges[2 * self.node + action];
        self.node = 2 * self.node + 1 + action;
        self.depth += 1;
        (self.observation(), e, self.depth == TREE_DEPTH)
    }
}

/// Trains a DQN on the chain for `steps` environment steps and returns its
/// greedy action in each state.
pub fn dqn_chain_trial(seed: u64, steps: usize) -> Vec<usize> {
    use farel::agents::{DqnAgent, DqnConfig};
    use farel::fairness::{FairnessConfig, FairnessEngine};
    use farel::mdp::run_episode;
    let config = DqnConfig {
        hidden: 32,
        epsilon: 0.2,
        gamma: CHAIN_GAMMA,
        learning_rate: 1e-3,
        buffer_capacity: 5000,
        batch_size: 32,
        target_sync: 100,
        warmup: 100,
    };
    let mut agent = DqnAgent::new(CHAIN_STATES, 2, config, seed);
    let mut env = Chain::new();
    let fairness = FairnessConfig::new(vec![Objective::R], WindowSpec::sliding(10), (G, H));
    let mut engine = FairnessEngine::new(fairness, toy_schema()).unwrap();
    let mut done = 0;
    let mut episode = 0u64;
    while done < steps {
        let trace = run_episode(&mut env, seed.wrapping_mul(1_000_003).wrapping_add(episode), &mut agent, &mut engine, steps - done)
            .unwrap();
        done += trace.interactions.len();
        episode += 1;
    }
    (0..CHAIN_STATES).map(|s| agent.greedy(&Chain::one_hot(s))).collect()
}

/// The distinct Pareto-optimal returns of the tree.
pub fn tree_front(tree: &Tree) -> Vec<Vec<f64>> {
    let all = tree.all_returns();
    pareto_oracle(&all).into_iter().map(|i| all[i].clone()).collect()
}

/// Trains a PCN on the tree for `steps` steps and returns the fraction of
/// the true front present among the buffered episode returns.
pub fn pcn_tree_trial(seed: u64, steps: usize) -> f64 {
    use farel::agents::{PcnAgent, PcnConfig};
    use farel::mdp::ActionSelector;
    let mut tree = Tree::new();
    let front = tree_front(&tree);
    let config = PcnConfig { hidden: 32, learning_rate: 1e-3, buffer_capacity: 50, batch_size: 32, updates_per_episode: 2, ..PcnConfig::default() };
    let mut agent = PcnAgent::new(TREE_NODES, 2, vec![Objective::R, Objective::SP], TREE_DEPTH, config, seed);
    let mut done = 0;
    while done < steps {
        let mut obs = tree.reset();
        loop {
            let a = agent.select(&obs).action;
            let (next, r, leaf) = tree.step(a);
            agent.observe(&RewardVector { labels: vec![Objective::R, Objective::SP], values: r.to_vec() });
            done += 1;
            obs = next;
            if leaf {
                break;
            }
        }
        agent.end_episode(true);
    }
    let held = agent.buffer().returns();
    front.iter().filter(|f| held.contains(f)).count() as f64 / front.len() as f64
}
