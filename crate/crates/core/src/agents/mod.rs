//! Training and evaluation loops for every algorithm variant.
//!
//! Centralized variants pick one process per step from a softmax actor.
//! The decentralized variant trains one common sigmoid actor on pooled
//! observations, then executes it per sensor over a [`Topology`].

mod central;
mod decentral;
mod tracker;

use serde::{Deserialize, Serialize};

use crate::belief::{BeliefVector, JointBelief};
use crate::nn::{Head, MlpNet};
use crate::rewards::{CostParams, RewardKind};
use crate::rl::Learner;
use crate::world::{Domain, Lane, ProcessStates, SeedTree};
use crate::{Error, Result};

pub use central::{evaluate_centralized, run_central_episode, train_centralized, CentralTrace};
pub use decentral::{
    evaluate_decentralized, run_joint_detection, trace_decentralized_episode, train_decentralized,
    DecentralTrace, DetectionMode,
};
pub use tracker::Tracker;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmVariant {
    /// Marginal beliefs updated through the pairwise model.
    CentralMarginal,
    /// Marginal beliefs, only the probed entry updated.
    CentralNaive,
    /// Exact joint posterior over `2^N` states.
    CentralJoint,
    Decentralized,
}

impl AlgorithmVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmVariant::CentralMarginal => "central_marginal",
            AlgorithmVariant::CentralNaive => "central_naive",
            AlgorithmVariant::CentralJoint => "central_joint",
            AlgorithmVariant::Decentralized => "decentralized",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            AlgorithmVariant::CentralMarginal => 0,
            AlgorithmVariant::CentralNaive => 1,
            AlgorithmVariant::CentralJoint => 2,
            AlgorithmVariant::Decentralized => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [
            AlgorithmVariant::CentralMarginal,
            AlgorithmVariant::CentralNaive,
            AlgorithmVariant::CentralJoint,
            AlgorithmVariant::Decentralized,
        ]
        .into_iter()
        .find(|v| v.code() == code)
    }

    pub fn is_centralized(self) -> bool {
        self != AlgorithmVariant::Decentralized
    }

    /// Width of the network input for `n` processes.
    pub fn input_dim(self, n: usize) -> usize {
        match self {
            AlgorithmVariant::CentralJoint => 1 << n,
            _ => n,
        }
    }
}

impl std::str::FromStr for AlgorithmVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "central_marginal" | "marginal" => Ok(AlgorithmVariant::CentralMarginal),
            "central_naive" | "naive" => Ok(AlgorithmVariant::CentralNaive),
            "central_joint" | "joint" => Ok(AlgorithmVariant::CentralJoint),
            "decentralized" => Ok(AlgorithmVariant::Decentralized),
            other => Err(format!(
                "unknown variant `{other}` (expected central_marginal, central_naive, central_joint or decentralized)"
            )),
        }
    }
}

impl std::fmt::Display for AlgorithmVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which sensors' observations reach each sensor. Every sensor hears itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<bool>>,
}

impl Topology {
    pub fn shared(n: usize) -> Self {
        Self { neighbors: vec![vec![true; n]; n] }
    }

    pub fn local(n: usize) -> Self {
        Self { neighbors: (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect() }
    }

    /// `sets[i]` lists the sensors whose observations sensor `i` receives;
    /// `i` itself is added if missing.
    pub fn from_sets(n: usize, sets: &[Vec<usize>]) -> Result<Self> {
        if sets.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sets.len() });
        }
        let mut neighbors = vec![vec![false; n]; n];
        for (i, set) in sets.iter().enumerate() {
            neighbors[i][i] = true;
            for &j in set {
                if j >= n {
                    return Err(Error::InvalidModel(format!("neighbor {j} out of range 0..{n}")));
                }
                neighbors[i][j] = true;
            }
        }
        Ok(Self { neighbors })
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn hears(&self, i: usize, j: usize) -> bool {
        self.neighbors[i][j]
    }

    pub fn is_shared(&self) -> bool {
        self.neighbors.iter().all(|row| row.iter().all(|&b| b))
    }
}

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    pub stopping_time: usize,
    pub estimate: ProcessStates,
    pub truth: ProcessStates,
    /// Exact match over all processes; always false on timeout.
    pub correct: bool,
    pub total_observations: usize,
    pub timed_out: bool,
}

/// Aggregate over a batch of evaluation episodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub correct: usize,
    pub timeouts: usize,
    pub accuracy: f64,
    /// Mean stopping time over episodes that did not time out; `k_max` if all did.
    pub mean_stopping_time: f64,
    /// Mean over episodes of `total_observations / K`.
    pub mean_obs_per_unit_time: f64,
}

impl EvalMetrics {
    pub fn from_results(results: &[EpisodeResult], k_max: usize) -> Self {
        let episodes = results.len();
        let correct = results.iter().filter(|r| r.correct).count();
        let timeouts = results.iter().filter(|r| r.timed_out).count();
        let stopped: Vec<_> = results.iter().filter(|r| !r.timed_out).collect();
        let mean_stopping_time = if stopped.is_empty() {
            k_max as f64
        } else {
            stopped.iter().map(|r| r.stopping_time as u64).sum::<u64>() as f64 / stopped.len() as f64
        };
        let mean_obs_per_unit_time = if episodes == 0 {
            0.0
        } else {
            results
                .iter()
                .map(|r| r.total_observations as f64 / r.stopping_time.max(1) as f64)
                .sum::<f64>()
                / episodes as f64
        };
        Self {
            episodes,
            correct,
            timeouts,
            accuracy: if episodes == 0 { 0.0 } else { correct as f64 / episodes as f64 },
            mean_stopping_time,
            mean_obs_per_unit_time,
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Steps per training episode.
    pub steps_per_episode: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub reward: RewardKind,
    /// Sensing cost; required by the decentralized variant only.
    pub cost: Option<CostParams>,
    pub seed: u64,
    pub hidden_width: usize,
    /// Hidden layers; `None` picks one for centralized and two for decentralized nets.
    pub hidden_layers: Option<usize>,
    /// Ascend `δ·∇ln φ` instead of `δ·∇φ` in decentralized training.
    pub log_phi: bool,
}

impl TrainConfig {
    pub const DEFAULT_EPISODES: usize = 20_000;
    pub const DEFAULT_STEPS: usize = 100;

    pub fn centralized(reward: RewardKind) -> Self {
        Self {
            episodes: Self::DEFAULT_EPISODES,
            steps_per_episode: Self::DEFAULT_STEPS,
            gamma: 0.9,
            actor_lr: 5e-4,
            critic_lr: 5e-3,
            reward,
            cost: None,
            seed: 0,
            hidden_width: 64,
            hidden_layers: None,
            log_phi: false,
        }
    }

    /// Decentralized defaults with `λ = lambda`; η is 0.1 for entropy and 1 for LLR.
    pub fn decentralized(reward: RewardKind, lambda: f64) -> Self {
        let (actor_lr, eta) = match reward {
            RewardKind::Entropy => (2e-5, 0.1),
            RewardKind::Llr => (3e-5, 1.0),
        };
        Self {
            actor_lr,
            critic_lr: 1e-4,
            cost: Some(CostParams { eta, lambda }),
            ..Self::centralized(reward)
        }
    }

    pub fn validate(&self, variant: AlgorithmVariant) -> Result<()> {
        let mut problems = Vec::new();
        if self.episodes == 0 {
            problems.push("episodes must be positive".to_string());
        }
        if self.steps_per_episode == 0 {
            problems.push("steps_per_episode must be positive".to_string());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("gamma = {} is outside (0, 1)", self.gamma));
        }
        if !(self.actor_lr > 0.0) {
            problems.push(format!("actor_lr = {} must be positive", self.actor_lr));
        }
        if !(self.critic_lr > 0.0) {
            problems.push(format!("critic_lr = {} must be positive", self.critic_lr));
        }
        if self.hidden_width == 0 {
            problems.push("hidden_width must be positive".to_string());
        }
        if self.hidden_layers == Some(0) {
            problems.push("hidden_layers must be positive".to_string());
        }
        match (variant, &self.cost) {
            (AlgorithmVariant::Decentralized, None) => {
                problems.push("decentralized training requires cost parameters".to_string())
            }
            (AlgorithmVariant::Decentralized, Some(c)) => {
                if let Err(e) = CostParams::new(c.eta, c.lambda) {
                    problems.push(e);
                }
            }
            _ => {}
        }
        if variant == AlgorithmVariant::CentralJoint && self.reward == RewardKind::Llr {
            problems.push("the joint baseline supports only the entropy reward".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    fn layer_dims(&self, variant: AlgorithmVariant, n: usize, out: usize) -> Vec<usize> {
        let hidden = self
            .hidden_layers
            .unwrap_or(if variant.is_centralized() { 1 } else { 2 });
        let mut dims = vec![variant.input_dim(n)];
        dims.extend(std::iter::repeat_n(self.hidden_width, hidden));
        dims.push(out);
        dims
    }
}

/// Evaluation settings shared by every variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub upsilon: f64,
    pub episodes: usize,
    /// Cap on the stopping time; reaching it counts as a timeout.
    pub k_max: usize,
    pub seed: u64,
    /// Pick the most probable action instead of sampling.
    pub greedy: bool,
}

impl EvalConfig {
    pub const DEFAULT_K_MAX: usize = 500;

    pub fn new(upsilon: f64, episodes: usize, seed: u64) -> Self {
        Self { upsilon, episodes, k_max: Self::DEFAULT_K_MAX, seed, greedy: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.upsilon > 0.5 && self.upsilon < 1.0) {
            return Err(Error::InvalidConfig(format!("upsilon = {} is outside (0.5, 1)", self.upsilon)));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be positive".into()));
        }
        Ok(())
    }
}

/// Trained actor and critic plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedAgent {
    pub variant: AlgorithmVariant,
    pub n: usize,
    pub actor: Learner,
    pub critic: Learner,
    pub episodes_trained: u64,
    /// Undiscounted reward summed over each training episode.
    pub episode_rewards: Vec<f64>,
}

impl TrainedAgent {
    /// Freshly initialised networks for `variant` over `n` processes.
    pub fn init(cfg: &TrainConfig, variant: AlgorithmVariant, n: usize) -> Result<Self> {
        cfg.validate(variant)?;
        if variant == AlgorithmVariant::CentralJoint {
            crate::belief::JointBelief::prior(&crate::world::DependenceStructure::independent(n, 0.5)?)?;
        }
        let tree = SeedTree::new(cfg.seed);
        let head = if variant.is_centralized() { Head::Softmax } else { Head::Sigmoid };
        let actor = MlpNet::new(&cfg.layer_dims(variant, n, n), head, &mut tree.rng(Domain::Init, 0, Lane::Action))?;
        let critic = MlpNet::new(
            &cfg.layer_dims(variant, n, 1),
            Head::Identity,
            &mut tree.rng(Domain::Init, 1, Lane::Action),
        )?;
        Ok(Self {
            variant,
            n,
            actor: Learner::new(actor, cfg.actor_lr),
            critic: Learner::new(critic, cfg.critic_lr),
            episodes_trained: 0,
            episode_rewards: Vec::new(),
        })
    }

    /// Trailing moving average of episodic reward with the given window.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        let mut out = Vec::with_capacity(self.episode_rewards.len());
        let mut acc = 0.0;
        for (k, &r) in self.episode_rewards.iter().enumerate() {
            acc += r;
            if k >= w {
                acc -= self.episode_rewards[k - w];
            }
            out.push(acc / (k + 1).min(w) as f64);
        }
        out
    }
}

/// Size in bytes of the belief state a variant carries for `n` processes.
pub fn belief_state_bytes(variant: AlgorithmVariant, n: usize) -> Result<usize> {
    match variant {
        AlgorithmVariant::CentralJoint => {
            let dep = crate::world::DependenceStructure::independent(n, 0.5)?;
            Ok(JointBelief::prior(&dep)?.state_bytes())
        }
        _ => Ok(BeliefVector::prior(n, 0.5).state_bytes()),
    }
}

fn sample_categorical<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left the cumulative sum short of one.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology_presets() {
        let s = Topology::shared(4);
        let l = Topology::local(4);
        assert!(s.is_shared());
        assert!(!l.is_shared());
        for i in 0..4 {
            assert!(l.hears(i, i));
            for j in 0..4 {
                assert!(s.hears(i, j));
                assert_eq!(l.hears(i, j), i == j);
            }
        }
        let t = Topology::from_sets(3, &[vec![1], vec![], vec![0, 1]]).unwrap();
        assert!(t.hears(0, 0) && t.hears(0, 1) && !t.hears(0, 2));
        assert!(t.hears(1, 1) && !t.hears(1, 0));
    }

    #[test]
    fn metrics_aggregation() {
        let ok = |k: usize, obs: usize| EpisodeResult {
            stopping_time: k,
            estimate: ProcessStates::zeros(2),
            truth: ProcessStates::zeros(2),
            correct: true,
            total_observations: obs,
            timed_out: false,
        };
        let mut timeout = ok(10, 5);
        timeout.correct = false;
        timeout.timed_out = true;
        let m = EvalMetrics::from_results(&[ok(2, 2), ok(4, 8), timeout], 10);
        assert_eq!(m.correct, 2);
        assert_eq!(m.timeouts, 1);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.mean_stopping_time, 3.0);
        assert!((m.mean_obs_per_unit_time - (1.0 + 2.0 + 0.5) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn categorical_sampling_frequencies() {
        let mut rng = SeedTree::new(1).rng(Domain::Eval, 0, Lane::Action);
        let probs = [0.1, 0.6, 0.3];
        let mut counts = [0usize; 3];
        for _ in 0..30_000 {
            counts[sample_categorical(&probs, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((*c as f64 / 30_000.0 - p).abs() < 0.01);
        }
        assert_eq!(sample_categorical(&[0.0, 0.0, 1.0], &mut rng), 2);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::centralized(RewardKind::Llr);
        assert!(cfg.validate(AlgorithmVariant::CentralMarginal).is_ok());
        assert!(cfg.validate(AlgorithmVariant::CentralJoint).is_err());
        assert!(cfg.validate(AlgorithmVariant::Decentralized).is_err());
        cfg.gamma = 1.0;
        cfg.episodes = 0;
        let msg = cfg.validate(AlgorithmVariant::CentralMarginal).unwrap_err().to_string();
        assert!(msg.contains("gamma") && msg.contains("episodes"));
        assert!(TrainConfig::decentralized(RewardKind::Entropy, 5.0)
            .validate(AlgorithmVariant::Decentralized)
            .is_ok());
    }

    #[test]
    fn belief_sizes_scale() {
        for n in [5, 10, 15] {
            assert_eq!(belief_state_bytes(AlgorithmVariant::CentralMarginal, n).unwrap(), 8 * n);
            assert_eq!(belief_state_bytes(AlgorithmVariant::CentralJoint, n).unwrap(), 8 << n);
        }
        assert!(matches!(
            belief_state_bytes(AlgorithmVariant::CentralJoint, 21),
            Err(Error::JointTooLarge(21))
        ));
    }
}
