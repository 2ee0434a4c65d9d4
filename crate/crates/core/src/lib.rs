//! Stage-wise reinforcement learning for a quadruped carrying an arm used as a tail.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: reduced-order planar simulator (cuboid torso + actuated rod).
//! - [`nn`]: small MLPs with hand-written backprop, Gaussian policy, Adam.
//! - [`rl`]: rollouts, generalized advantage estimation and PPO.
//! - [`staged`]: the three-stage pipeline that adds an annealed behavior-cloning
//!   term toward the previous stage's policy.
//! - [`eval`]: seeded trial batteries, baselines, comparison tables.
//! - [`analysis`]: closed-form arm/body coupling and behavioral analyses.
//! - [`cli`]: the `armtail` command line entry points.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod eval;
pub mod nn;
pub mod rl;
pub mod seed;
pub mod sim;
pub mod staged;


pub use sim::{ArmMode, RobotParams, Scenario, ScenarioConfig, SimState};
