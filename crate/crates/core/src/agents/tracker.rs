use crate::belief::{
    estimate_states, joint_stopping_met, marginalize, stopping_met, update_joint, update_marginal, BeliefVector,
    JointBelief, PairwiseModel,
};
use crate::rewards::{central_reward, joint_entropy_reward, RewardKind};
use crate::world::{DependenceStructure, Observation, ProcessStates};
use crate::Result;

use super::AlgorithmVariant;

/// Belief state carried by one agent, in the form its variant tracks.
#[derive(Clone, Debug, PartialEq)]
pub enum Tracker {
    Marginal { sigma: BeliefVector, model: PairwiseModel },
    Joint { pi: JointBelief },
}

impl Tracker {
    /// Prior belief for `variant`. The naive variant gets a model with no
    /// cross-process terms, so only probed entries ever move.
    pub fn new(variant: AlgorithmVariant, dep: &DependenceStructure) -> Result<Self> {
        Ok(match variant {
            AlgorithmVariant::CentralJoint => Tracker::Joint { pi: JointBelief::prior(dep)? },
            AlgorithmVariant::CentralNaive => Tracker::Marginal {
                sigma: BeliefVector::prior(dep.n(), dep.q()),
                model: PairwiseModel::self_only(dep.n(), dep.q()),
            },
            AlgorithmVariant::CentralMarginal | AlgorithmVariant::Decentralized => Tracker::Marginal {
                sigma: BeliefVector::prior(dep.n(), dep.q()),
                model: PairwiseModel::from_dependence(dep),
            },
        })
    }

    /// Network input.
    pub fn features(&self) -> &[f64] {
        match self {
            Tracker::Marginal { sigma, .. } => sigma.as_slice(),
            Tracker::Joint { pi } => pi.probs(),
        }
    }

    pub fn update(&self, obs: &Observation, p: f64) -> Result<Self> {
        Ok(match self {
            Tracker::Marginal { sigma, model } => Tracker::Marginal {
                sigma: update_marginal(sigma, obs, model, p)?,
                model: model.clone(),
            },
            Tracker::Joint { pi } => Tracker::Joint { pi: update_joint(pi, obs, p)? },
        })
    }

    /// Reward for moving from `self` to `next`. The joint tracker always
    /// scores entropy reduction of the full posterior.
    pub fn reward(&self, next: &Self, kind: RewardKind) -> f64 {
        match (self, next) {
            (Tracker::Marginal { sigma: a, .. }, Tracker::Marginal { sigma: b, .. }) => central_reward(kind, a, b),
            (Tracker::Joint { pi: a }, Tracker::Joint { pi: b }) => joint_entropy_reward(a, b),
            _ => unreachable!("reward between trackers of different kinds"),
        }
    }

    pub fn stop(&self, upsilon: f64) -> bool {
        match self {
            Tracker::Marginal { sigma, .. } => stopping_met(sigma, upsilon),
            Tracker::Joint { pi } => joint_stopping_met(pi, upsilon),
        }
    }

    pub fn estimate(&self) -> ProcessStates {
        match self {
            Tracker::Marginal { sigma, .. } => estimate_states(sigma),
            Tracker::Joint { pi } => pi.argmax_state(),
        }
    }

    /// Per-process marginal beliefs.
    pub fn marginals(&self) -> BeliefVector {
        match self {
            Tracker::Marginal { sigma, .. } => sigma.clone(),
            Tracker::Joint { pi } => marginalize(pi),
        }
    }

    /// Bytes of belief state, excluding the fixed model.
    pub fn state_bytes(&self) -> usize {
        match self {
            Tracker::Marginal { sigma, .. } => sigma.state_bytes(),
            Tracker::Joint { pi } => pi.state_bytes(),
        }
    }
}
