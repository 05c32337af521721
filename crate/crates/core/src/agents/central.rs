use rayon::prelude::*;

use crate::rl::{centralized_actor_step, critic_step, td_error, TdContext};
use crate::world::{observe, DependenceStructure, Domain, Lane, SeedTree};
use crate::{Error, Result};

use super::{argmax, sample_categorical, EpisodeResult, EvalConfig, EvalMetrics, Tracker, TrainConfig, TrainedAgent};
use super::AlgorithmVariant;

/// Trains a centralized agent. Episodes run exactly `steps_per_episode`
/// steps; no step is terminal.
pub fn train_centralized(
    cfg: &TrainConfig,
    variant: AlgorithmVariant,
    dep: &DependenceStructure,
    p: f64,
) -> Result<TrainedAgent> {
    let mut agent = TrainedAgent::init(cfg, variant, dep.n())?;
    continue_centralized(&mut agent, cfg, dep, p)?;
    Ok(agent)
}

/// Runs `cfg.episodes` further training episodes on an existing agent.
pub(crate) fn continue_centralized(
    agent: &mut TrainedAgent,
    cfg: &TrainConfig,
    dep: &DependenceStructure,
    p: f64,
) -> Result<()> {
    if !agent.variant.is_centralized() {
        return Err(Error::InvalidConfig(format!("{} is not a centralized variant", agent.variant)));
    }
    cfg.validate(agent.variant)?;
    check_dims(agent, dep)?;
    let tree = SeedTree::new(cfg.seed);
    for _ in 0..cfg.episodes {
        let ep = agent.episodes_trained;
        let mut state_rng = tree.rng(Domain::Train, ep, Lane::State);
        let mut obs_rng = tree.rng(Domain::Train, ep, Lane::Observation);
        let mut act_rng = tree.rng(Domain::Train, ep, Lane::Action);
        let s = dep.sample_state(&mut state_rng);
        let mut tracker = Tracker::new(agent.variant, dep)?;
        let mut total = 0.0;
        for _ in 0..cfg.steps_per_episode {
            let x = tracker.features().to_vec();
            let mu = agent.actor.net.output(&x)?;
            let a = sample_categorical(&mu, &mut act_rng);
            let obs = observe(&s, &[a], p, &mut obs_rng);
            let next = tracker.update(&obs, p)?;
            let reward = tracker.reward(&next, cfg.reward);
            let ctx = TdContext {
                reward,
                gamma: cfg.gamma,
                v_next: agent.critic.net.output(next.features())?[0],
                v_prev: agent.critic.net.output(&x)?[0],
                terminal: false,
            };
            let delta = td_error(&ctx);
            centralized_actor_step(&mut agent.actor, &x, a, delta)?;
            critic_step(&mut agent.critic, &x, &ctx)?;
            total += reward;
            tracker = next;
        }
        agent.episode_rewards.push(total);
        agent.episodes_trained += 1;
    }
    Ok(())
}

fn check_dims(agent: &TrainedAgent, dep: &DependenceStructure) -> Result<()> {
    if agent.n != dep.n() {
        return Err(Error::DimensionMismatch { expected: agent.n, got: dep.n() });
    }
    Ok(())
}

/// Per-step record of one centralized evaluation episode.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralTrace {
    pub result: EpisodeResult,
    pub actions: Vec<usize>,
    /// Marginal beliefs after each step, starting with the prior.
    pub marginals: Vec<Vec<f64>>,
}

/// One evaluation episode. The stopping rule is checked after each
/// observation; `k_max` steps without stopping is a timeout.
pub fn run_central_episode(
    agent: &TrainedAgent,
    dep: &DependenceStructure,
    p: f64,
    eval: &EvalConfig,
    episode: u64,
) -> Result<CentralTrace> {
    check_dims(agent, dep)?;
    let tree = SeedTree::new(eval.seed);
    let mut state_rng = tree.rng(Domain::Eval, episode, Lane::State);
    let mut obs_rng = tree.rng(Domain::Eval, episode, Lane::Observation);
    let mut act_rng = tree.rng(Domain::Eval, episode, Lane::Action);
    let truth = dep.sample_state(&mut state_rng);
    let mut tracker = Tracker::new(agent.variant, dep)?;
    let mut actions = Vec::new();
    let mut marginals = vec![tracker.marginals().as_slice().to_vec()];
    let mut stopped = false;
    while actions.len() < eval.k_max {
        let mu = agent.actor.net.output(tracker.features())?;
        let a = if eval.greedy { argmax(&mu) } else { sample_categorical(&mu, &mut act_rng) };
        let obs = observe(&truth, &[a], p, &mut obs_rng);
        tracker = tracker.update(&obs, p)?;
        actions.push(a);
        marginals.push(tracker.marginals().as_slice().to_vec());
        if tracker.stop(eval.upsilon) {
            stopped = true;
            break;
        }
    }
    let estimate = tracker.estimate();
    let result = EpisodeResult {
        stopping_time: actions.len(),
        correct: stopped && estimate == truth,
        estimate,
        truth,
        total_observations: actions.len(),
        timed_out: !stopped,
    };
    Ok(CentralTrace { result, actions, marginals })
}

/// Evaluates a centralized agent over `eval.episodes` episodes in parallel.
/// Episode `e` always uses the same substreams, so results do not depend on
/// the thread count.
pub fn evaluate_centralized(
    agent: &TrainedAgent,
    dep: &DependenceStructure,
    p: f64,
    eval: &EvalConfig,
) -> Result<EvalMetrics> {
    eval.validate()?;
    if !agent.variant.is_centralized() {
        return Err(Error::InvalidConfig(format!("{} is not a centralized variant", agent.variant)));
    }
    let results = (0..eval.episodes as u64)
        .into_par_iter()
        .map(|e| run_central_episode(agent, dep, p, eval, e).map(|t| t.result))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalMetrics::from_results(&results, eval.k_max))
}
