//! On-policy rollouts, generalized advantage estimation and PPO.

mod agent;
mod batch;
mod gae;
mod ppo;

use thiserror::Error;

pub use agent::{Agent, AgentCache, AgentGrads, AgentOptimizer, Critic};
pub use batch::{collect_rollouts, RolloutBatch, Transition, VecEnv};
pub use gae::gae;
pub use ppo::{minibatch_loss, ppo_update, BcTerm, LossBreakdown, PpoConfig, UpdateStats};

use crate::nn::NnError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("environment {env} failed: {source}")]
    Env { env: usize, source: SimError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct EnvStep {
    /// Observation frame after the step (before any reset).
    pub frame: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// A resettable environment producing flat observation frames.
pub trait Env {
    fn frame_len(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SimError>;
}

/// Anything that maps a raw observation frame to a deterministic action.
pub trait Controller {
    fn action_dim(&self) -> usize;
    fn mean_action(&self, frame: &[f64]) -> Result<Vec<f64>, NnError>;
}
