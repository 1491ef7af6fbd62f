//! Training and evaluating one cell.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{AgentKind, Cell};
use crate::agents::pcn::{Command, Mode, PcnAgent};
use crate::agents::DqnAgent;
use crate::fairness::{FairnessConfig, FairnessEngine};
use crate::mdp::{objectives_label, run_episode, ActionSelector, EpisodeTrace, Environment, Objective};
use crate::pareto::{nondominated_indices, representative_subset, PolicyPoint};
use crate::Error;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Independent generator `stream` of a seed.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(GOLDEN))
}

pub const AGENT_STREAM: u64 = 1;
pub const TRAIN_STREAM: u64 = 2;
pub const EVAL_STREAM: u64 = 3;
pub const SUBSET_STREAM: u64 = 4;

/// One sample of the window trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSample {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
}

/// Mean and population std of the window length over each `interval`-step
/// bucket ending at the sampled step.
pub fn window_trace(lengths: &[usize], interval: usize) -> Vec<WindowSample> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < lengths.len() {
        let end = (start + interval).min(lengths.len());
        let bucket = &lengths[start..end];
        let n = bucket.len() as f64;
        let mean = bucket.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = bucket.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        out.push(WindowSample { step: end, mean, std: var.sqrt() });
        start = end;
    }
    out
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    /// Representative policies, all eight objectives in canonical order.
    pub policies: Vec<PolicyPoint>,
    pub window: Vec<WindowSample>,
    pub steps: usize,
    pub episodes: usize,
    /// One evaluation episode of the first representative policy.
    pub trace: Option<(FairnessConfig, EpisodeTrace)>,
}

fn fairness_config(cell: &Cell, objectives: Vec<Objective>) -> FairnessConfig {
    let mut c = FairnessConfig::new(objectives, cell.window, cell.scenario.default_groups());
    c.distance = cell.distance;
    c.lambda = cell.lambda;
    c.k = cell.k;
    c
}

/// Runs episodes until `steps` interactions, returning the window length
/// after each of them and the episode count.
pub fn train<P: ActionSelector + ?Sized>(
    env: &mut dyn Environment,
    engine: &mut FairnessEngine,
    agent: &mut P,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, usize), Error> {
    engine.record_window_lengths();
    let mut done = 0;
    let mut episodes = 0;
    let mut lengths = Vec::with_capacity(steps);
    while done < steps {
        let seed = rng.random();
        let trace = run_episode(env, seed, agent, engine, steps - done)?;
        lengths.extend(engine.take_window_lengths());
        if trace.is_empty() {
            break;
        }
        done += trace.len();
        episodes += 1;
    }
    Ok((lengths, episodes))
}

/// Mean returns of every objective over `seeds`, one episode per seed, on a
/// fresh history that tracks all notions.
pub fn evaluate<P: ActionSelector + ?Sized>(
    env: &mut dyn Environment,
    config: &FairnessConfig,
    policy: &mut P,
    seeds: &[u64],
    mut before_episode: impl FnMut(&mut P),
) -> Result<(Vec<f64>, EpisodeTrace), Error> {
    let mut engine = FairnessEngine::new(config.clone(), env.schema())?;
    let mut total = vec![0.0; Objective::ALL.len()];
    let mut first = None;
    for &seed in seeds {
        before_episode(policy);
        let trace = run_episode(env, seed, policy, &mut engine, usize::MAX)?;
        for (t, o) in total.iter_mut().zip(Objective::ALL) {
            *t += trace.returns.get(o).unwrap_or(0.0);
        }
        first.get_or_insert(trace);
    }
    let n = seeds.len().max(1) as f64;
    total.iter_mut().for_each(|t| *t /= n);
    Ok((total, first.unwrap_or(EpisodeTrace { interactions: vec![], returns: crate::mdp::RewardVector::zeros(&[]), truncated: false })))
}

fn project(returns: &[f64], objectives: &[Objective]) -> Vec<f64> {
    objectives.iter().map(|o| returns[o.index()]).collect()
}

fn format_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.5}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn run_cell(cell: &Cell) -> Result<CellOutcome, Error> {
    let mut env = cell.scenario.build()?;
    let schema = env.schema();
    let mut engine = FairnessEngine::new(fairness_config(cell, cell.objectives.clone()), schema)?;
    let eval_config = fairness_config(cell, Objective::ALL.to_vec());
    let mut train_rng = stream(cell.seed, TRAIN_STREAM);
    let mut eval_rng = stream(cell.seed, EVAL_STREAM);
    let agent_seed: u64 = stream(cell.seed, AGENT_STREAM).random();
    let obs = env.observation_size();
    let actions = env.action_count();

    let (lengths, episodes, evaluated) = match cell.agent {
        AgentKind::Dqn => {
            let mut agent = DqnAgent::new(obs, actions, cell.dqn.clone(), agent_seed);
            let (lengths, episodes) = train(env.as_mut(), &mut engine, &mut agent, cell.steps, &mut train_rng)?;
            agent.set_learning(false);
            let seeds: Vec<u64> = (0..cell.eval_episodes).map(|_| eval_rng.random()).collect();
            let (returns, trace) = evaluate(env.as_mut(), &eval_config, &mut agent, &seeds, |_| {})?;
            let point = PolicyPoint { seed: cell.seed, returns, provenance: "dqn final network".into() };
            (lengths, episodes, vec![(point, trace)])
        }
        AgentKind::Pcn => {
            let horizon = env.horizon();
            let mut agent =
                PcnAgent::new(obs, actions, cell.objectives.clone(), horizon, cell.pcn.clone(), agent_seed);
            let (lengths, episodes) = train(env.as_mut(), &mut engine, &mut agent, cell.steps, &mut train_rng)?;
            agent.set_mode(Mode::Greedy);
            let buffer_returns = agent.buffer().returns();
            let front = nondominated_indices(&buffer_returns);
            let front_points: Vec<&Vec<f64>> = front.iter().map(|&i| &buffer_returns[i]).collect();
            let mut subset_rng = stream(cell.seed, SUBSET_STREAM);
            let mut picked = representative_subset(&front_points, cell.candidates, &mut subset_rng);
            picked.sort_unstable();
            let seeds: Vec<u64> = (0..cell.eval_episodes).map(|_| eval_rng.random()).collect();
            let mut evaluated = Vec::with_capacity(picked.len());
            for p in picked {
                let e = front[p];
                let episode = &agent.buffer().episodes()[e];
                let command =
                    Command { desired_return: episode.returns.clone(), desired_horizon: episode.len() as f64 };
                let provenance = format!(
                    "buffer episode {e}; desired return {}; horizon {}",
                    format_vec(&command.desired_return),
                    episode.len()
                );
                let (returns, trace) =
                    evaluate(env.as_mut(), &eval_config, &mut agent, &seeds, |a| a.begin_episode(command.clone()))?;
                evaluated.push((PolicyPoint { seed: cell.seed, returns, provenance }, trace));
            }
            (lengths, episodes, evaluated)
        }
    };

    let requested: Vec<Vec<f64>> = evaluated.iter().map(|(p, _)| project(&p.returns, &cell.objectives)).collect();
    let front = nondominated_indices(&requested);
    let front_points: Vec<&Vec<f64>> = front.iter().map(|&i| &requested[i]).collect();
    let mut subset_rng = stream(cell.seed, SUBSET_STREAM ^ 0xFF);
    let mut chosen: Vec<usize> =
        representative_subset(&front_points, cell.representatives, &mut subset_rng).into_iter().map(|i| front[i]).collect();
    chosen.sort_unstable();
    log::info!(
        "{} seed {}: {} episodes, {} candidates, {} representatives ({})",
        cell.group(),
        cell.seed,
        episodes,
        evaluated.len(),
        chosen.len(),
        objectives_label(&cell.objectives)
    );
    let trace = if cell.traces {
        chosen.first().map(|&i| (eval_config.clone(), evaluated[i].1.clone()))
    } else {
        None
    };
    let policies = chosen.iter().map(|&i| evaluated[i].0.clone()).collect();
    Ok(CellOutcome {
        policies,
        window: window_trace(&lengths, cell.trace_interval),
        steps: lengths.len(),
        episodes,
        trace,
    })
}
