//! Reinforced active learning.
//!
//! A double deep-Q agent learns which unlabeled points to send to an oracle,
//! `N` at a time, so that a multi-class classifier gains accuracy as fast as
//! possible. The crate is organised bottom-up:
//!
//! - [`numkit`]: dense matrices, a portable seeded RNG, a small MLP with
//!   backpropagation, SGD and finite-difference gradient checks.
//! - [`datasets`]: synthetic blobs, CSV ingestion, stratified four-way splits
//!   and noise augmentation.
//! - [`classifier`]: the task classifier with probabilities and a latent space.
//! - [`strategies`]: uncertainty-style baseline query strategies.
//! - [`alenv`]: the active-learning MDP (state, action features, reward).
//! - [`agent`]: the batch double-DQN agent, replay buffer and training loop.

pub mod agent;
pub mod alenv;
pub mod classifier;
pub mod datasets;
mod error;
pub mod numkit;
pub mod strategies;

pub use agent::{
    Agent, AgentConfig, EarlyStop, EpisodeMode, EpisodeStats, EpsilonSchedule, FitReport, QNetwork,
    TargetAggregate, Transition,
};
pub use alenv::{
    ActionFeatures, AlEnv, CandidatePool, EnvConfig, PoolPartition, StateVec, StepOutcome,
};
pub use classifier::{Classifier, ClassifierConfig};
pub use datasets::{Dataset, NoiseSpec, SplitSpec, Splits};
pub use error::{Error, Result};
pub use numkit::{Matrix, Mlp, OutputHead, Rng, SgdConfig};
pub use strategies::StrategyKind;
