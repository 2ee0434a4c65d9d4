//! Stage-wise training: each stage adds observations, actions or task
//! conditions, and learns with PPO plus an annealed behavior-cloning term
//! toward the previous stage's policy on the states it visits.

mod env;
mod spec;
mod train;

use std::path::PathBuf;

use rand::Rng;
use thiserror::Error;

pub use env::{
    draw_randomization, scale_action, stage_reward, CommandSchedule, EpisodeDraw, EpisodeSource, RewardBreakdown,
    StageEnv,
};
pub use spec::{
    anneal_lambda, validate_stages, ActionLayout, AnnealSchedule, AnnealShape, CommandRanges, NetworkConfig,
    ObsBlock, PerturbationConfig, Randomization, RewardWeights, StageSpec, FRAME_LEN, MAX_ACTION_DIM,
};
pub use train::{
    bc_proxy_loss, run_pipeline, train_agent, train_stage, write_curves, CurveRow, Imitation, StageCheckpoint,
    StageOutcome, TrainSetup,
};

pub use crate::sim::CommandSample;

use crate::nn::Mlp;
use crate::rl::{Agent, RlError};
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum StageError {
    #[error("invalid stage configuration: {0}")]
    Config(String),
    #[error("transition {0} has no teacher action")]
    MissingTeacher(usize),
    #[error("training diverged at update {update}{}", checkpoint.as_ref().map(|p| format!("; last good state in {}", p.display())).unwrap_or_default())]
    Diverged { update: usize, checkpoint: Option<PathBuf> },
    #[error("stage {stage} diverged at update {update}")]
    StageDiverged { stage: usize, update: usize, last_good: Box<StageCheckpoint> },
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Io(String),
}

/// Copies `agent` into a larger layout: new observation inputs and new action
/// outputs start with zero weights, so the grown policy initially has the
/// same mean on the shared action dimensions.
pub fn grow_agent<R: Rng + ?Sized>(agent: &Agent, spec: &StageSpec, network: &NetworkConfig, rng: &mut R) -> Agent {
    let fresh = Agent::new(
        FRAME_LEN,
        spec.obs_index(),
        spec.privileged_index(),
        &network.encoder_hidden,
        network.extrinsic_dim,
        &network.hidden,
        spec.action_dim(),
        network.activation,
        rng,
    );
    let mut out = fresh;
    out.norm = agent.norm.clone();
    out.norm.frozen = false;
    if let (Some(dst), Some(src)) = (out.encoder.as_mut(), agent.encoder.as_ref()) {
        if dst.widths() == src.widths() {
            *dst = src.clone();
        }
    }
    // Policy input is [obs entries..., z...]: map old columns by frame index.
    let z_dim = agent.encoder.as_ref().map_or(0, |e| e.output_dim());
    let old_cols: Vec<Option<usize>> = out
        .obs_index
        .iter()
        .map(|i| agent.obs_index.iter().position(|j| j == i))
        .chain((0..z_dim).map(|k| Some(agent.obs_index.len() + k)))
        .collect();
    copy_first_layer(&mut out.policy.trunk, &agent.policy.trunk, &old_cols);
    for k in 1..out.policy.trunk.num_layers() {
        let (a, b) = layer_span(&out.policy.trunk, k);
        let (c, d) = layer_span(&agent.policy.trunk, k);
        if b - a == d - c {
            out.policy.trunk.params_mut()[a..b].copy_from_slice(&agent.policy.trunk.params()[c..d]);
        }
    }
    // Head rows: copy shared action rows, zero new ones.
    let head_in = out.policy.head.input_dim();
    let (old_out, new_out) = (agent.policy.head.output_dim(), out.policy.head.output_dim());
    let src = agent.policy.head.params().to_vec();
    let dst = out.policy.head.params_mut();
    for r in 0..new_out {
        for c in 0..head_in {
            dst[r * head_in + c] = if r < old_out { src[r * head_in + c] } else { 0.0 };
        }
        dst[new_out * head_in + r] = if r < old_out { src[old_out * head_in + r] } else { 0.0 };
    }
    for (k, ls) in out.policy.log_std.iter_mut().enumerate() {
        if k < agent.policy.log_std.len() {
            *ls = agent.policy.log_std[k];
        }
    }
    out
}

fn layer_span(net: &Mlp, k: usize) -> (usize, usize) {
    let (w, b) = net.layer_offsets(k);
    (w, b + net.widths()[k + 1])
}

fn copy_first_layer(dst: &mut Mlp, src: &Mlp, old_cols: &[Option<usize>]) {
    let (n_in, n_out) = (dst.input_dim(), dst.widths()[1]);
    let src_in = src.input_dim();
    if src.widths()[1] != n_out {
        return;
    }
    let s = src.params().to_vec();
    let p = dst.params_mut();
    for r in 0..n_out {
        for (c, old) in old_cols.iter().enumerate().take(n_in) {
            p[r * n_in + c] = old.map_or(0.0, |o| s[r * src_in + o]);
        }
        p[n_out * n_in + r] = s[n_out * src_in + r];
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;
    use crate::rl::PpoConfig;
    use crate::sim::{RobotParams, Scenario, ScenarioConfig};

    /// A setup small enough for unit tests.
    pub fn tiny_setup(scenario: Scenario) -> TrainSetup {
        TrainSetup {
            scenario: ScenarioConfig::default_for(scenario),
            robot: RobotParams::default_for(scenario),
            ppo: PpoConfig { num_envs: 2, horizon: 16, minibatch_size: 16, epochs: 2, ..Default::default() },
            network: NetworkConfig { hidden: vec![8], critic_hidden: vec![8], encoder_hidden: vec![4], extrinsic_dim: 2, ..Default::default() },
            randomization: Randomization::default_for(scenario),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::tiny_setup;
    use super::*;
    use crate::rl::Controller;
    use crate::seed::rng_for;
    use crate::sim::Scenario;
    use rand::Rng;

    #[test]
    fn grown_agent_keeps_leg_actions() {
        let setup = tiny_setup(Scenario::Stabilize);
        let stages = StageSpec::default_pipeline(Scenario::Stabilize, [1, 1, 1]);
        let (mut pi2, _) = setup.new_agent(&stages[1], 4, "s2");
        let mut rng = rng_for(4, "frames");
        let frames: Vec<Vec<f64>> = (0..50).map(|_| (0..FRAME_LEN).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        pi2.norm.update(&frames);
        let grown = grow_agent(&pi2, &stages[2], &setup.network, &mut rng);
        assert_eq!(grown.action_dim(), 3);
        for f in &frames {
            let a = pi2.mean_action(f).unwrap();
            let g = grown.mean_action(f).unwrap();
            assert!((a[0] - g[0]).abs() < 1e-12 && (a[1] - g[1]).abs() < 1e-12);
            assert!(g[2].abs() < 1e-12);
        }
    }
}
