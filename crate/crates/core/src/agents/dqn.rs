//! Deep Q-learning on the performance reward.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{ActionSelector, Decision, Objective, RewardVector};
use crate::neural::{argmax, Activation, Adam, DenseNet, Gradients};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Gradient steps between target-network syncs.
    pub target_sync: usize,
    /// Transitions collected before learning starts.
    pub warmup: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: 64,
            epsilon: 0.1,
            gamma: 1.0,
            learning_rate: 1e-3,
            buffer_capacity: 10_000,
            batch_size: 32,
            target_sync: 200,
            warmup: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity: capacity.max(1), items: VecDeque::new() }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Transition> {
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())].clone()).collect()
    }
}

/// Epsilon-greedy Q-learner that trains online while it acts.
pub struct DqnAgent {
    config: DqnConfig,
    actions: usize,
    q: DenseNet,
    target: DenseNet,
    adam: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    updates: usize,
    learning: bool,
    pending: Option<(Vec<f64>, usize, f64)>,
    last_loss: Option<f64>,
}

impl DqnAgent {
    pub fn new(observation_size: usize, actions: usize, config: DqnConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = DenseNet::new(
            &[observation_size, config.hidden, actions],
            &[Activation::Relu, Activation::Identity],
            &mut rng,
        );
        let adam = Adam::new(&q, config.learning_rate);
        DqnAgent {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            target: q.clone(),
            q,
            adam,
            rng,
            actions,
            config,
            updates: 0,
            learning: true,
            pending: None,
            last_loss: None,
        }
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn network(&self) -> &DenseNet {
        &self.q
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.config.epsilon = epsilon;
    }

    /// Switches online learning on or off. Acting stays epsilon-greedy.
    pub fn set_learning(&mut self, on: bool) {
        self.learning = on;
        self.pending = None;
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.q.forward(state)
    }

    pub fn greedy(&self, state: &[f64]) -> usize {
        argmax(&self.q_values(state))
    }

    pub fn act(&mut self, state: &[f64]) -> usize {
        if self.rng.random::<f64>() < self.config.epsilon {
            let all: Vec<usize> = (0..self.actions).collect();
            *all.choose(&mut self.rng).expect("at least one action")
        } else {
            self.greedy(state)
        }
    }

    /// `(1 - eps)` on the greedy action plus `eps / |A|` everywhere.
    pub fn action_distribution(&self, state: &[f64]) -> Vec<f64> {
        let eps = self.config.epsilon;
        let mut dist = vec![eps / self.actions as f64; self.actions];
        dist[self.greedy(state)] += 1.0 - eps;
        dist
    }

    /// One gradient step on the mean squared TD error of `batch`.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<f64, Error> {
        if batch.is_empty() {
            return Ok(0.0);
        }
        let mut grads = Gradients::zeros_like(&self.q);
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for tr in batch {
            let bootstrap = if tr.terminal {
                0.0
            } else {
                self.target.forward(&tr.next_state).into_iter().fold(f64::NEG_INFINITY, f64::max)
            };
            let target = tr.reward + self.config.gamma * bootstrap;
            let cache = self.q.forward_cached(&tr.state);
            let err = cache.output()[tr.action] - target;
            loss += err * err / n;
            let mut g = vec![0.0; self.actions];
            g[tr.action] = 2.0 * err / n;
            self.q.backward_into(&cache, &g, &mut grads);
        }
        self.adam.step(&mut self.q, &grads)?;
        self.updates += 1;
        if self.updates % self.config.target_sync.max(1) == 0 {
            self.target = self.q.clone();
        }
        self.last_loss = Some(loss);
        Ok(loss)
    }

    pub fn remember(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    fn learn(&mut self) {
        if !self.learning || self.buffer.len() < self.config.warmup.max(1) {
            return;
        }
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng);
        if let Err(e) = self.train_step(&batch) {
            log::warn!("dqn update skipped: {e}");
        }
    }

    fn close_pending(&mut self, next_state: Vec<f64>, terminal: bool) {
        if let Some((state, action, reward)) = self.pending.take() {
            self.remember(Transition { state, action, reward, next_state, terminal });
            self.learn();
        }
    }
}

impl ActionSelector for DqnAgent {
    fn select(&mut self, observation: &[f64]) -> Decision {
        if self.learning {
            self.close_pending(observation.to_vec(), false);
        }
        let action = self.act(observation);
        if self.learning {
            self.pending = Some((observation.to_vec(), action, 0.0));
        }
        Decision { action, distribution: self.action_distribution(observation) }
    }

    fn observe(&mut self, reward: &RewardVector) {
        if let Some(p) = self.pending.as_mut() {
            p.2 = reward.get(Objective::R).unwrap_or(0.0);
        }
    }

    fn end_episode(&mut self, terminal: bool) {
        if !self.learning {
            return;
        }
        if terminal {
            let width = self.q.input_size();
            self.close_pending(vec![0.0; width], true);
        } else {
            self.pending = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_discount_exact_target_has_no_loss() {
        let mut agent = DqnAgent::new(2, 2, DqnConfig { gamma: 0.0, ..DqnConfig::default() }, 0);
        let s = vec![0.3, -0.2];
        let q = agent.q_values(&s)[1];
        let t = Transition { state: s.clone(), action: 1, reward: q, next_state: s, terminal: false };
        assert!(agent.train_step(&[t]).unwrap() < 1e-24);
    }

    #[test]
    fn distribution_mixes_epsilon() {
        let agent = DqnAgent::new(3, 4, DqnConfig::default(), 1);
        let d = agent.action_distribution(&[0.1, 0.2, 0.3]);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d[agent.greedy(&[0.1, 0.2, 0.3])] - (0.9 + 0.025)).abs() < 1e-12);
    }

    #[test]
    fn greedy_when_epsilon_zero() {
        let mut agent = DqnAgent::new(2, 3, DqnConfig { epsilon: 0.0, ..DqnConfig::default() }, 2);
        let s = [0.5, 0.5];
        let g = agent.greedy(&s);
        assert!((0..100).all(|_| agent.act(&s) == g));
    }
}
