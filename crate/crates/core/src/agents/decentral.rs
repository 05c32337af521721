use rand::Rng;
use rayon::prelude::*;

use crate::belief::{confidence, update_joint, update_marginal, BeliefVector, JointBelief, PairwiseModel};
use crate::rewards::decentral_reward;
use crate::rl::{critic_step, decentralized_actor_step, td_error, TdContext};
use crate::world::{observe, DependenceStructure, Domain, Lane, ProcessStates, SeedTree};
use crate::{Error, Result};

use super::{AlgorithmVariant, EpisodeResult, EvalConfig, EvalMetrics, Topology, TrainConfig, TrainedAgent};

/// Trains the common decentralized actor on pooled observations: every
/// selected process is observed and the shared belief absorbs all of them.
pub fn train_decentralized(cfg: &TrainConfig, dep: &DependenceStructure, p: f64) -> Result<TrainedAgent> {
    let mut agent = TrainedAgent::init(cfg, AlgorithmVariant::Decentralized, dep.n())?;
    continue_decentralized(&mut agent, cfg, dep, p)?;
    Ok(agent)
}

pub(crate) fn continue_decentralized(
    agent: &mut TrainedAgent,
    cfg: &TrainConfig,
    dep: &DependenceStructure,
    p: f64,
) -> Result<()> {
    if agent.variant != AlgorithmVariant::Decentralized {
        return Err(Error::InvalidConfig(format!("{} is not the decentralized variant", agent.variant)));
    }
    cfg.validate(agent.variant)?;
    if agent.n != dep.n() {
        return Err(Error::DimensionMismatch { expected: agent.n, got: dep.n() });
    }
    let cost = cfg.cost.expect("validated");
    let model = PairwiseModel::from_dependence(dep);
    let tree = SeedTree::new(cfg.seed);
    for _ in 0..cfg.episodes {
        let ep = agent.episodes_trained;
        let mut state_rng = tree.rng(Domain::Train, ep, Lane::State);
        let mut obs_rng = tree.rng(Domain::Train, ep, Lane::Observation);
        let mut act_rng = tree.rng(Domain::Train, ep, Lane::Action);
        let s = dep.sample_state(&mut state_rng);
        let mut sigma = BeliefVector::prior(dep.n(), dep.q());
        let mut total = 0.0;
        for _ in 0..cfg.steps_per_episode {
            let nu = agent.actor.net.output(sigma.as_slice())?;
            let selected: Vec<bool> = nu.iter().map(|&v| act_rng.random::<f64>() < v).collect();
            let idx = indices(&selected);
            let obs = observe(&s, &idx, p, &mut obs_rng);
            let next = update_marginal(&sigma, &obs, &model, p)?;
            let reward = decentral_reward(cfg.reward, &sigma, &next, idx.len(), &cost);
            let x = sigma.as_slice();
            let ctx = TdContext {
                reward,
                gamma: cfg.gamma,
                v_next: agent.critic.net.output(next.as_slice())?[0],
                v_prev: agent.critic.net.output(x)?[0],
                terminal: false,
            };
            let delta = td_error(&ctx);
            decentralized_actor_step(&mut agent.actor, x, &selected, delta, cfg.log_phi)?;
            critic_step(&mut agent.critic, x, &ctx)?;
            total += reward;
            sigma = next;
        }
        agent.episode_rewards.push(total);
        agent.episodes_trained += 1;
    }
    Ok(())
}

fn indices(selected: &[bool]) -> Vec<usize> {
    selected.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

/// How a decentralized episode decides when to stop and what to declare.
#[derive(Clone, Debug, PartialEq)]
pub enum DetectionMode {
    /// Sensor `i` keeps its own belief fed by the observations it hears and
    /// latches a stop flag once its own process is confident.
    Topology(Topology),
    /// Baseline: one shared marginal belief drives selection, and the exact
    /// joint posterior decides stopping and the estimate.
    Joint,
}

/// Per-step record of one decentralized episode.
#[derive(Clone, Debug, PartialEq)]
pub struct DecentralTrace {
    pub result: EpisodeResult,
    pub selections: Vec<Vec<bool>>,
    /// `beliefs[k][i]` is sensor `i`'s belief vector after step `k + 1`.
    pub beliefs: Vec<Vec<Vec<f64>>>,
    /// Stop flags after each step.
    pub flags: Vec<Vec<bool>>,
}

/// One decentralized evaluation episode. Sensor `i` draws its selection
/// from its own substream, so runs under different modes see identical
/// draws for as long as their beliefs agree.
pub fn trace_decentralized_episode(
    agent: &TrainedAgent,
    dep: &DependenceStructure,
    p: f64,
    eval: &EvalConfig,
    mode: &DetectionMode,
    episode: u64,
) -> Result<DecentralTrace> {
    let n = dep.n();
    if agent.n != n {
        return Err(Error::DimensionMismatch { expected: agent.n, got: n });
    }
    if let DetectionMode::Topology(t) = mode {
        if t.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: t.n() });
        }
    }
    let model = PairwiseModel::from_dependence(dep);
    let tree = SeedTree::new(eval.seed);
    let mut state_rng = tree.rng(Domain::Eval, episode, Lane::State);
    let mut obs_rng = tree.rng(Domain::Eval, episode, Lane::Observation);
    let mut sensor_rngs: Vec<_> = (0..n).map(|i| tree.rng(Domain::Eval, episode, Lane::Sensor(i as u32))).collect();
    let truth = dep.sample_state(&mut state_rng);

    let sensors = match mode {
        DetectionMode::Topology(_) => n,
        DetectionMode::Joint => 1,
    };
    let mut beliefs = vec![BeliefVector::prior(n, dep.q()); sensors];
    let mut pi = match mode {
        DetectionMode::Joint => Some(JointBelief::prior(dep)?),
        DetectionMode::Topology(_) => None,
    };
    let mut flags = vec![false; n];
    let mut trace = DecentralTrace { result: placeholder(n), selections: vec![], beliefs: vec![], flags: vec![] };
    let mut total_obs = 0;
    let mut stopped = false;

    while trace.selections.len() < eval.k_max {
        let mut nus = Vec::with_capacity(sensors);
        for b in &beliefs {
            nus.push(agent.actor.net.output(b.as_slice())?);
        }
        let selected: Vec<bool> = (0..n)
            .map(|i| {
                let nu = nus[i.min(sensors - 1)][i];
                let u: f64 = sensor_rngs[i].random();
                if eval.greedy { nu > 0.5 } else { u < nu }
            })
            .collect();
        let idx = indices(&selected);
        total_obs += idx.len();
        let obs = observe(&truth, &idx, p, &mut obs_rng);
        match (mode, pi.as_mut()) {
            (DetectionMode::Topology(topo), _) => {
                for (i, b) in beliefs.iter_mut().enumerate() {
                    *b = update_marginal(b, &obs.restrict(|j| topo.hears(i, j)), &model, p)?;
                    if confidence(b.get(i)) > eval.upsilon {
                        flags[i] = true;
                    }
                }
            }
            (DetectionMode::Joint, Some(pi)) => {
                beliefs[0] = update_marginal(&beliefs[0], &obs, &model, p)?;
                *pi = update_joint(pi, &obs, p)?;
                if pi.max_prob() > eval.upsilon {
                    flags.fill(true);
                }
            }
            (DetectionMode::Joint, None) => unreachable!(),
        }
        trace.selections.push(selected);
        trace.beliefs.push(beliefs.iter().map(|b| b.as_slice().to_vec()).collect());
        trace.flags.push(flags.clone());
        if flags.iter().all(|&f| f) {
            stopped = true;
            break;
        }
    }

    let estimate = match (&pi, mode) {
        (Some(pi), _) => pi.argmax_state(),
        (None, _) => {
            let bits = (0..n).map(|i| u8::from(beliefs[i].get(i) < 1.0 - beliefs[i].get(i))).collect();
            ProcessStates::new(bits)?
        }
    };
    trace.result = EpisodeResult {
        stopping_time: trace.selections.len(),
        correct: stopped && estimate == truth,
        estimate,
        truth,
        total_observations: total_obs,
        timed_out: !stopped,
    };
    Ok(trace)
}

fn placeholder(n: usize) -> EpisodeResult {
    EpisodeResult {
        stopping_time: 0,
        estimate: ProcessStates::zeros(n),
        truth: ProcessStates::zeros(n),
        correct: false,
        total_observations: 0,
        timed_out: false,
    }
}

fn evaluate_mode(
    agent: &TrainedAgent,
    dep: &DependenceStructure,
    p: f64,
    eval: &EvalConfig,
    mode: &DetectionMode,
) -> Result<EvalMetrics> {
    eval.validate()?;
    if agent.variant != AlgorithmVariant::Decentralized {
        return Err(Error::InvalidConfig(format!("{} is not the decentralized variant", agent.variant)));
    }
    let results = (0..eval.episodes as u64)
        .into_par_iter()
        .map(|e| trace_decentralized_episode(agent, dep, p, eval, mode, e).map(|t| t.result))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalMetrics::from_results(&results, eval.k_max))
}

/// Evaluates decentralized execution over `topology`.
pub fn evaluate_decentralized(
    agent: &TrainedAgent,
    dep: &DependenceStructure,
    p: f64,
    eval: &EvalConfig,
    topology: &Topology,
) -> Result<EvalMetrics> {
    evaluate_mode(agent, dep, p, eval, &DetectionMode::Topology(topology.clone()))
}

/// Evaluates the joint-posterior detection baseline.
pub fn run_joint_detection(
    agent: &TrainedAgent,
    dep: &DependenceStructure,
    p: f64,
    eval: &EvalConfig,
) -> Result<EvalMetrics> {
    evaluate_mode(agent, dep, p, eval, &DetectionMode::Joint)
}
