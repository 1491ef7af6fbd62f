//! Pareto-conditioned network: a policy conditioned on a desired return and
//! horizon, trained by classifying the actions of its best episodes.

use std::io::{Read, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{ActionSelector, Decision, Objective, RewardVector};
use crate::neural::{argmax, softmax, Activation, Adam, Cache, DenseNet, Gradients};
use crate::pareto::{crowding_distance, nondominated_indices, nondominated_ranks};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Concat,
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcnConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub updates_per_episode: usize,
    pub combine: Combine,
    /// Factor applied to desired returns before embedding; one over the
    /// horizon when unset.
    pub return_scale: Option<f64>,
}

impl Default for PcnConfig {
    fn default() -> Self {
        PcnConfig {
            hidden: 64,
            learning_rate: 1e-3,
            buffer_capacity: 1024,
            batch_size: 256,
            updates_per_episode: 20,
            combine: Combine::Concat,
            return_scale: None,
        }
    }
}

/// What the agent is asked to achieve in the rest of the episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub desired_return: Vec<f64>,
    pub desired_horizon: f64,
}

impl Command {
    /// Subtracts the received reward and counts down the horizon, never
    /// below 1.
    pub fn update(&mut self, reward: &[f64]) {
        for (d, r) in self.desired_return.iter_mut().zip(reward) {
            *d -= r;
        }
        self.desired_horizon = (self.desired_horizon - 1.0).max(1.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredEpisode {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Return still to come from each step onwards.
    pub to_go: Vec<Vec<f64>>,
    pub returns: Vec<f64>,
}

impl StoredEpisode {
    pub fn new(observations: Vec<Vec<f64>>, actions: Vec<usize>, rewards: Vec<Vec<f64>>) -> Self {
        let d = rewards.first().map_or(0, Vec::len);
        let mut to_go = vec![vec![0.0; d]; rewards.len()];
        let mut acc = vec![0.0; d];
        for t in (0..rewards.len()).rev() {
            for (a, r) in acc.iter_mut().zip(&rewards[t]) {
                *a += r;
            }
            to_go[t] = acc.clone();
        }
        StoredEpisode { observations, actions, to_go, returns: acc }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Episodes kept by non-dominated rank, then crowding distance.
#[derive(Debug, Clone, Default)]
pub struct EpisodeBuffer {
    capacity: usize,
    episodes: Vec<StoredEpisode>,
}

impl EpisodeBuffer {
    pub fn new(capacity: usize) -> Self {
        EpisodeBuffer { capacity: capacity.max(1), episodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[StoredEpisode] {
        &self.episodes
    }

    pub fn returns(&self) -> Vec<Vec<f64>> {
        self.episodes.iter().map(|e| e.returns.clone()).collect()
    }

    /// Over capacity, repeats of an earlier return are dropped first, then
    /// the deepest ranks, least crowded first.
    pub fn push(&mut self, episode: StoredEpisode) {
        if episode.is_empty() {
            return;
        }
        self.episodes.push(episode);
        if self.episodes.len() > self.capacity {
            self.prune();
        }
    }

    fn prune(&mut self) {
        let returns = self.returns();
        let ranks = nondominated_ranks(&returns);
        let mut crowding = vec![0.0; returns.len()];
        let deepest = ranks.iter().copied().max().unwrap_or(0);
        for r in 0..=deepest {
            let members: Vec<usize> = (0..returns.len()).filter(|&i| ranks[i] == r).collect();
            for (m, c) in members.iter().zip(crowding_distance(&returns, &members)) {
                crowding[*m] = c;
            }
        }
        let repeated: Vec<bool> = (0..returns.len()).map(|i| returns[..i].contains(&returns[i])).collect();
        let mut order: Vec<usize> = (0..returns.len()).collect();
        order.sort_by(|&a, &b| {
            repeated[a].cmp(&repeated[b]).then(ranks[a].cmp(&ranks[b])).then(crowding[b].total_cmp(&crowding[a])).then(a.cmp(&b))
        });
        order.truncate(self.capacity);
        order.sort_unstable();
        let mut keep = vec![false; returns.len()];
        for i in order {
            keep[i] = true;
        }
        let mut i = 0;
        self.episodes.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
    }

    /// Indices of the episodes whose returns are non-dominated.
    pub fn nondominated(&self) -> Vec<usize> {
        nondominated_indices(&self.returns())
    }
}

/// Population standard deviation of each objective over `returns`.
pub fn per_objective_std(returns: &[Vec<f64>]) -> Vec<f64> {
    let d = returns.first().map_or(0, Vec::len);
    let n = returns.len() as f64;
    (0..d)
        .map(|k| {
            let mean = returns.iter().map(|r| r[k]).sum::<f64>() / n;
            (returns.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// A command from a random non-dominated episode, with one random objective
/// raised by the spread of the non-dominated returns on that objective.
pub fn select_command<R: Rng + ?Sized>(buffer: &EpisodeBuffer, rng: &mut R) -> Option<Command> {
    let nd = buffer.nondominated();
    if nd.is_empty() {
        return None;
    }
    let returns: Vec<Vec<f64>> = nd.iter().map(|&i| buffer.episodes[i].returns.clone()).collect();
    let std = per_objective_std(&returns);
    let pick = rng.random_range(0..nd.len());
    let episode = &buffer.episodes[nd[pick]];
    let mut desired_return = episode.returns.clone();
    let k = rng.random_range(0..desired_return.len());
    desired_return[k] += std[k];
    Some(Command { desired_return, desired_horizon: episode.len() as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcnNetwork {
    pub state: DenseNet,
    pub horizon: DenseNet,
    pub ret: DenseNet,
    pub head: DenseNet,
    pub combine: Combine,
    pub horizon_scale: f64,
    pub return_scale: Vec<f64>,
}

struct PcnCache {
    state: Cache,
    horizon: Cache,
    ret: Cache,
    head: Cache,
}

impl PcnNetwork {
    pub fn new<R: Rng + ?Sized>(
        observation_size: usize,
        objectives: usize,
        actions: usize,
        max_horizon: usize,
        config: &PcnConfig,
        rng: &mut R,
    ) -> Self {
        let h = config.hidden;
        let embed = |inputs: usize, rng: &mut R| DenseNet::new(&[inputs, h], &[Activation::Sigmoid], rng);
        let state = embed(observation_size, rng);
        let horizon = embed(1, rng);
        let ret = embed(objectives, rng);
        let joined = match config.combine {
            Combine::Concat => 3 * h,
            Combine::Product => h,
        };
        let head = DenseNet::new(&[joined, h, actions], &[Activation::Relu, Activation::Identity], rng);
        let scale = 1.0 / max_horizon.max(1) as f64;
        PcnNetwork {
            state,
            horizon,
            ret,
            head,
            combine: config.combine,
            horizon_scale: scale,
            return_scale: vec![config.return_scale.unwrap_or(scale); objectives],
        }
    }

    fn inputs(&self, horizon: f64, desired: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = vec![horizon * self.horizon_scale];
        let r = desired.iter().zip(&self.return_scale).map(|(v, s)| v * s).collect();
        (h, r)
    }

    fn join(&self, s: &[f64], h: &[f64], r: &[f64]) -> Vec<f64> {
        match self.combine {
            Combine::Concat => s.iter().chain(h).chain(r).copied().collect(),
            Combine::Product => s.iter().zip(h).zip(r).map(|((a, b), c)| a * b * c).collect(),
        }
    }

    pub fn logits(&self, observation: &[f64], command: &Command) -> Vec<f64> {
        let (h, r) = self.inputs(command.desired_horizon, &command.desired_return);
        let s = self.state.forward(observation);
        let eh = self.horizon.forward(&h);
        let er = self.ret.forward(&r);
        self.head.forward(&self.join(&s, &eh, &er))
    }

    fn forward_cached(&self, observation: &[f64], horizon: f64, desired: &[f64]) -> PcnCache {
        let (h, r) = self.inputs(horizon, desired);
        let state = self.state.forward_cached(observation);
        let horizon = self.horizon.forward_cached(&h);
        let ret = self.ret.forward_cached(&r);
        let joined = self.join(state.output(), horizon.output(), ret.output());
        let head = self.head.forward_cached(&joined);
        PcnCache { state, horizon, ret, head }
    }

    fn backward_into(&self, cache: &PcnCache, grad_logits: &[f64], grads: &mut [Gradients; 4]) {
        let [gs, gh, gr, ghead] = grads;
        let dz = self.head.backward_into(&cache.head, grad_logits, ghead);
        let (s, h, r) = (cache.state.output(), cache.horizon.output(), cache.ret.output());
        let n = s.len();
        let (ds, dh, dr): (Vec<f64>, Vec<f64>, Vec<f64>) = match self.combine {
            Combine::Concat => (dz[..n].to_vec(), dz[n..2 * n].to_vec(), dz[2 * n..].to_vec()),
            Combine::Product => (
                (0..n).map(|i| dz[i] * h[i] * r[i]).collect(),
                (0..n).map(|i| dz[i] * s[i] * r[i]).collect(),
                (0..n).map(|i| dz[i] * s[i] * h[i]).collect(),
            ),
        };
        self.state.backward_into(&cache.state, &ds, gs);
        self.horizon.backward_into(&cache.horizon, &dh, gh);
        self.ret.backward_into(&cache.ret, &dr, gr);
    }

    fn zero_grads(&self) -> [Gradients; 4] {
        [
            Gradients::zeros_like(&self.state),
            Gradients::zeros_like(&self.horizon),
            Gradients::zeros_like(&self.ret),
            Gradients::zeros_like(&self.head),
        ]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), Error> {
        for net in [&self.state, &self.horizon, &self.ret, &self.head] {
            net.write_to(&mut w)?;
        }
        Ok(())
    }

    /// Reads the four sub-networks written by [`PcnNetwork::write_to`].
    pub fn read_from<R: Read>(
        mut r: R,
        combine: Combine,
        horizon_scale: f64,
        return_scale: Vec<f64>,
    ) -> Result<Self, Error> {
        let state = DenseNet::read_from(&mut r)?;
        let horizon = DenseNet::read_from(&mut r)?;
        let ret = DenseNet::read_from(&mut r)?;
        let head = DenseNet::read_from(&mut r)?;
        Ok(PcnNetwork { state, horizon, ret, head, combine, horizon_scale, return_scale })
    }
}

/// Checkpoint metadata stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub objectives: Vec<Objective>,
    pub combine: Combine,
    pub horizon_scale: f64,
    pub return_scale: Vec<f64>,
    pub config_hash: String,
}

pub fn save_checkpoint(dir: &Path, net: &PcnNetwork, objectives: &[Objective], config_hash: &str) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    net.write_to(std::io::BufWriter::new(std::fs::File::create(dir.join("pcn.bin"))?))?;
    let manifest = CheckpointManifest {
        objectives: objectives.to_vec(),
        combine: net.combine,
        horizon_scale: net.horizon_scale,
        return_scale: net.return_scale.clone(),
        config_hash: config_hash.to_string(),
    };
    std::fs::write(dir.join("pcn.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(PcnNetwork, CheckpointManifest), Error> {
    let manifest: CheckpointManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("pcn.json"))?)?;
    let f = std::io::BufReader::new(std::fs::File::open(dir.join("pcn.bin"))?);
    let net = PcnNetwork::read_from(f, manifest.combine, manifest.horizon_scale, manifest.return_scale.clone())?;
    Ok((net, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Sample actions, collect episodes and learn after each one.
    Train,
    /// Act greedily and learn nothing.
    Greedy,
}

pub struct PcnAgent {
    config: PcnConfig,
    objectives: Vec<Objective>,
    actions: usize,
    max_horizon: usize,
    net: PcnNetwork,
    adams: [Adam; 4],
    buffer: EpisodeBuffer,
    rng: ChaCha8Rng,
    mode: Mode,
    command: Command,
    observations: Vec<Vec<f64>>,
    taken: Vec<usize>,
    rewards: Vec<Vec<f64>>,
    last_loss: Option<f64>,
}

impl PcnAgent {
    pub fn new(
        observation_size: usize,
        actions: usize,
        objectives: Vec<Objective>,
        max_horizon: usize,
        config: PcnConfig,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = PcnNetwork::new(observation_size, objectives.len(), actions, max_horizon, &config, &mut rng);
        let lr = config.learning_rate;
        let adams = [
            Adam::new(&net.state, lr),
            Adam::new(&net.horizon, lr),
            Adam::new(&net.ret, lr),
            Adam::new(&net.head, lr),
        ];
        let command = Command { desired_return: vec![0.0; objectives.len()], desired_horizon: max_horizon as f64 };
        PcnAgent {
            buffer: EpisodeBuffer::new(config.buffer_capacity),
            config,
            objectives,
            actions,
            max_horizon,
            net,
            adams,
            rng,
            mode: Mode::Train,
            command,
            observations: Vec::new(),
            taken: Vec::new(),
            rewards: Vec::new(),
            last_loss: None,
        }
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn network(&self) -> &PcnNetwork {
        &self.net
    }

    pub fn buffer(&self) -> &EpisodeBuffer {
        &self.buffer
    }

    pub fn command(&self) -> &Command {
        &self.command
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.discard_episode();
    }

    /// Sets the command for the next episode.
    pub fn begin_episode(&mut self, command: Command) {
        self.command = command;
        self.discard_episode();
    }

    fn discard_episode(&mut self) {
        self.observations.clear();
        self.taken.clear();
        self.rewards.clear();
    }

    pub fn action_probabilities(&self, observation: &[f64]) -> Vec<f64> {
        softmax(&self.net.logits(observation, &self.command))
    }

    /// One cross-entropy step on `batch` of (episode, step) pairs; returns
    /// the mean loss before the update.
    pub fn train_on(&mut self, batch: &[(usize, usize)]) -> Result<f64, Error> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let mut grads = self.net.zero_grads();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for &(e, t) in batch {
            let ep = &self.buffer.episodes[e];
            let horizon = (ep.len() - t) as f64;
            let cache = self.net.forward_cached(&ep.observations[t], horizon, &ep.to_go[t]);
            let mut p = softmax(cache.head.output());
            let a = ep.actions[t];
            loss -= p[a].max(1e-300).ln() / n;
            p[a] -= 1.0;
            p.iter_mut().for_each(|g| *g /= n);
            self.net.backward_into(&cache, &p, &mut grads);
        }
        let [gs, gh, gr, ghead] = &grads;
        self.adams[0].step(&mut self.net.state, gs)?;
        self.adams[1].step(&mut self.net.horizon, gh)?;
        self.adams[2].step(&mut self.net.ret, gr)?;
        self.adams[3].step(&mut self.net.head, ghead)?;
        self.last_loss = Some(loss);
        Ok(loss)
    }

    /// Samples a batch of steps, episodes weighted by their length.
    pub fn sample_batch(&mut self) -> Vec<(usize, usize)> {
        let lengths: Vec<usize> = self.buffer.episodes.iter().map(StoredEpisode::len).collect();
        let Ok(pick) = WeightedIndex::new(&lengths) else { return Vec::new() };
        (0..self.config.batch_size)
            .map(|_| {
                let e = pick.sample(&mut self.rng);
                (e, self.rng.random_range(0..lengths[e]))
            })
            .collect()
    }

    pub fn learn(&mut self) {
        for _ in 0..self.config.updates_per_episode {
            let batch = self.sample_batch();
            if let Err(e) = self.train_on(&batch) {
                log::warn!("pcn update skipped: {e}");
            }
        }
    }

    pub fn store_episode(&mut self, episode: StoredEpisode) {
        self.buffer.push(episode);
    }

    fn next_command(&mut self) -> Command {
        select_command(&self.buffer, &mut self.rng).unwrap_or(Command {
            desired_return: vec![0.0; self.objectives.len()],
            desired_horizon: self.max_horizon as f64,
        })
    }
}

impl ActionSelector for PcnAgent {
    fn select(&mut self, observation: &[f64]) -> Decision {
        let probs = self.action_probabilities(observation);
        match self.mode {
            Mode::Greedy => Decision::deterministic(argmax(&probs), self.actions),
            Mode::Train => {
                let action = WeightedIndex::new(&probs).map(|d| d.sample(&mut self.rng)).unwrap_or(0);
                self.observations.push(observation.to_vec());
                self.taken.push(action);
                Decision { action, distribution: probs }
            }
        }
    }

    fn observe(&mut self, reward: &RewardVector) {
        let r = reward.project(&self.objectives);
        self.command.update(&r);
        if self.mode == Mode::Train {
            self.rewards.push(r);
        }
    }

    fn end_episode(&mut self, _terminal: bool) {
        if self.mode != Mode::Train {
            return;
        }
        let n = self.taken.len().min(self.rewards.len());
        let observations = std::mem::take(&mut self.observations);
        let actions = std::mem::take(&mut self.taken);
        let rewards = std::mem::take(&mut self.rewards);
        if n > 0 {
            self.store_episode(StoredEpisode::new(
                observations[..n].to_vec(),
                actions[..n].to_vec(),
                rewards[..n].to_vec(),
            ));
            self.learn();
        }
        self.command = self.next_command();
    }
}
