//! Learning-based controlled sensing for anomaly detection.
//!
//! A decision maker repeatedly chooses which of `N` correlated binary
//! processes to probe through a noisy channel, tracks per-process marginal
//! posteriors, and stops once every process is classified with the required
//! confidence. Selection policies are trained with a deep actor-critic, either
//! by a single central agent (one process per step) or by per-sensor agents
//! sharing a common actor (any subset per step, with a sensing cost).

pub mod agents;
pub mod belief;
pub mod checkpoint;
pub mod experiment;
pub mod nn;
pub mod rewards;
pub mod rl;
pub mod world;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("contradictory observations: every hypothesis for process {process} has zero likelihood")]
    Contradiction { process: usize },

    #[error("observations eliminated every joint state")]
    JointContradiction,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("joint posterior over {0} processes refused (limit is {limit})", limit = belief::MAX_JOINT_PROCESSES)]
    JointTooLarge(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

pub use agents::{AlgorithmVariant, EpisodeResult, EvalConfig, EvalMetrics, Topology, TrainConfig, TrainedAgent};
pub use belief::{BeliefVector, JointBelief, PairwiseModel};
pub use nn::{AdamState, Head, MlpNet};
pub use rewards::{CostParams, RewardKind};
pub use world::{DependenceStructure, Observation, ProcessStates, SeedTree};
