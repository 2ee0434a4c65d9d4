use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::env::StageEnv;
use super::spec::{anneal_lambda, validate_stages, AnnealSchedule, NetworkConfig, Randomization, StageSpec, FRAME_LEN};
use super::StageError;
use crate::nn::{load_json, save_json, OptimizerState};
use crate::rl::{collect_rollouts, ppo_update, Agent, AgentOptimizer, BcTerm, Controller, Critic, Env, PpoConfig, RlError, RolloutBatch, VecEnv};
use crate::seed::rng_for;
use crate::sim::{RobotParams, ScenarioConfig};

/// Mean over the batch of `sum_{k < dims} (mu_k - teacher_k)^2`, with `mu` the
/// agent's mean action on the normalized frame the transition stored.
pub fn bc_proxy_loss(agent: &Agent, batch: &RolloutBatch, dims: usize) -> Result<f64, StageError> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, t) in batch.transitions.iter().enumerate() {
        let teacher = t.teacher_action.as_ref().ok_or(StageError::MissingTeacher(i))?;
        let mean = agent.mean_normalized(&t.nframe).map_err(RlError::from)?;
        total += mean.iter().zip(teacher).take(dims).map(|(m, a)| (m - a).powi(2)).sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub env_steps: usize,
    pub mean_reward: f64,
    /// Mean undiscounted return of episodes finished during the rollout (NaN if none).
    pub mean_return: f64,
    pub mean_episode_length: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub bc_loss: f64,
    pub ppo_loss: f64,
    pub total_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub lambda: f64,
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<(), StageError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| StageError::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| StageError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| StageError::Io(e.to_string()))?;
    Ok(())
}

/// Behavior-cloning settings for a training run.
#[derive(Clone, Copy)]
pub struct Imitation<'a> {
    pub teacher: &'a dyn Controller,
    pub schedule: &'a AnnealSchedule,
}

/// Runs `updates` PPO updates of `agent`/`critic` on `envs`, with an optional
/// annealed behavior-cloning term toward a teacher evaluated on the visited
/// frames. On a non-finite loss the agent and critic are restored to the
/// state before the failing update and the error is returned.
#[allow(clippy::too_many_arguments)]
pub fn train_agent<E: Env, R: Rng + ?Sized>(
    envs: Vec<E>,
    agent: &mut Agent,
    critic: &mut Critic,
    ppo: &PpoConfig,
    updates: usize,
    imitation: Option<Imitation<'_>>,
    rng: &mut R,
) -> Result<Vec<CurveRow>, StageError> {
    ppo.validate()?;
    let mut venv = VecEnv::new(envs);
    let mut agent_opt = AgentOptimizer::new(agent, ppo.learning_rate);
    let mut critic_opt = OptimizerState::new(critic.net.num_params(), ppo.learning_rate);
    let mut curves = Vec::with_capacity(updates);
    let mut env_steps = 0;
    for update in 0..updates {
        let good = (agent.clone(), critic.clone());
        let teacher = imitation.map(|i| i.teacher);
        let mut batch = collect_rollouts(agent, critic, &mut venv, ppo.horizon, teacher, rng)?;
        env_steps += batch.len();
        batch.compute_advantages(ppo.gamma, ppo.gae_lambda)?;
        let (lambda, bc) = match imitation {
            Some(im) => {
                let lambda = anneal_lambda(im.schedule, update, updates);
                (lambda, Some(BcTerm { lambda, dims: im.teacher.action_dim() }))
            }
            None => (0.0, None),
        };
        let stats = match ppo_update(agent, critic, &mut agent_opt, &mut critic_opt, &mut batch, ppo, bc, rng) {
            Ok(s) => s,
            Err(RlError::NonFiniteLoss { .. }) => {
                let (a, c) = good;
                *agent = a;
                *critic = c;
                return Err(StageError::Diverged { update, checkpoint: None });
            }
            Err(e) => return Err(e.into()),
        };
        let finished = batch.episode_returns.len();
        let l = stats.loss;
        curves.push(CurveRow {
            update,
            env_steps,
            mean_reward: batch.mean_reward(),
            mean_return: if finished > 0 { batch.episode_returns.iter().sum::<f64>() / finished as f64 } else { f64::NAN },
            mean_episode_length: if finished > 0 {
                batch.episode_lengths.iter().sum::<usize>() as f64 / finished as f64
            } else {
                f64::NAN
            },
            policy_loss: l.policy,
            value_loss: l.value,
            entropy: l.entropy,
            bc_loss: l.bc,
            ppo_loss: l.ppo,
            total_loss: l.total,
            approx_kl: l.approx_kl,
            clip_fraction: l.clip_fraction,
            lambda,
        });
    }
    Ok(curves)
}

/// Shared settings for every stage of a pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub scenario: ScenarioConfig,
    pub robot: RobotParams,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
    pub randomization: Randomization,
}

impl TrainSetup {
    pub fn new_agent(&self, spec: &StageSpec, seed: u64, label: &str) -> (Agent, Critic) {
        let mut rng = rng_for(seed, &format!("{label}/init"));
        let n = &self.network;
        let agent = Agent::new(
            FRAME_LEN,
            spec.obs_index(),
            spec.privileged_index(),
            &n.encoder_hidden,
            n.extrinsic_dim,
            &n.hidden,
            spec.action_dim(),
            n.activation,
            &mut rng,
        );
        let critic = Critic::new(spec.critic_index(), &n.critic_hidden, n.activation, &mut rng);
        (agent, critic)
    }

    /// One environment per PPO worker, each with its own stream.
    pub fn envs(&self, spec: &StageSpec, seed: u64, label: &str) -> Vec<StageEnv> {
        (0..self.ppo.num_envs)
            .map(|e| {
                let rng = rng_for(seed, &format!("{label}/env{e}"));
                StageEnv::new(&self.scenario, &self.robot, spec, &self.randomization, rng)
            })
            .collect()
    }

    /// Environment steps one update consumes.
    pub fn steps_per_update(&self) -> usize {
        self.ppo.steps_per_update()
    }
}

/// Policy and value network of a finished stage, plus its curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCheckpoint {
    pub stage: usize,
    pub seed: u64,
    pub scenario: crate::sim::Scenario,
    pub spec: StageSpec,
    pub agent: Agent,
    pub critic: Critic,
}

impl StageCheckpoint {
    pub fn file_name(stage: usize, seed: u64) -> String {
        format!("stage{stage}_{seed}.ckpt")
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, StageError> {
        let path = dir.join(Self::file_name(self.stage, self.seed));
        save_json(&path, self).map_err(|e| StageError::Io(e.to_string()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, StageError> {
        load_json(path).map_err(|e| StageError::Io(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub checkpoint: StageCheckpoint,
    pub curves: Vec<CurveRow>,
}

/// Trains stage `stage` (1-based) of `spec`.
///
/// `teacher` must be given exactly when `stage > 1`; its mean actions on the
/// visited frames are the behavior-cloning targets over its action
/// dimensions. `init` overrides the fresh network initialization.
pub fn train_stage(
    setup: &TrainSetup,
    stage: usize,
    spec: &StageSpec,
    teacher: Option<&Agent>,
    init: Option<(Agent, Critic)>,
    seed: u64,
) -> Result<StageOutcome, StageError> {
    spec.validate(stage)?;
    if teacher.is_some() != (stage > 1) {
        return Err(StageError::Config(format!("stage {stage} {} a teacher", if stage > 1 { "needs" } else { "takes no" })));
    }
    let label = format!("stage{stage}");
    let (mut agent, mut critic) = init.unwrap_or_else(|| setup.new_agent(spec, seed, &label));
    let mut rng = rng_for(seed, &format!("{label}/ppo"));
    let envs = setup.envs(spec, seed, &label);
    let frozen;
    let imitation = match (teacher, spec.anneal.as_ref()) {
        (Some(t), Some(schedule)) => {
            let mut t = t.clone();
            t.norm.frozen = true;
            frozen = t;
            if frozen.action_dim() > spec.action_dim() {
                return Err(StageError::Config("teacher controls more actions than the student".into()));
            }
            Some(Imitation { teacher: &frozen as &dyn Controller, schedule })
        }
        _ => None,
    };
    let curves = train_agent(envs, &mut agent, &mut critic, &setup.ppo, spec.updates, imitation, &mut rng)
        .map_err(|e| match e {
            StageError::Diverged { update, .. } => StageError::StageDiverged {
                stage,
                update,
                last_good: Box::new(StageCheckpoint { stage, seed, scenario: setup.scenario.scenario, spec: spec.clone(), agent: agent.clone(), critic: critic.clone() }),
            },
            e => e,
        })?;
    agent.norm.frozen = true;
    Ok(StageOutcome { checkpoint: StageCheckpoint { stage, seed, scenario: setup.scenario.scenario, spec: spec.clone(), agent, critic }, curves })
}

/// Trains the stages in order, each with the previous one as teacher.
///
/// With `out_dir`, every finished stage writes `stage{i}_{seed}.ckpt` and
/// `stage{i}_{seed}_curves.csv` before the next one starts, and a divergence
/// writes the last good state as `stage{i}_{seed}.diverged.ckpt`.
pub fn run_pipeline(
    setup: &TrainSetup,
    stages: &[StageSpec],
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<Vec<StageOutcome>, StageError> {
    validate_stages(stages)?;
    let mut done: Vec<StageOutcome> = Vec::new();
    for (i, spec) in stages.iter().enumerate() {
        let stage = i + 1;
        let teacher = done.last().map(|o| &o.checkpoint.agent);
        let outcome = match train_stage(setup, stage, spec, teacher, None, seed) {
            Ok(o) => o,
            Err(StageError::StageDiverged { stage, update, last_good }) => {
                let checkpoint = match out_dir {
                    Some(dir) => {
                        let path = dir.join(format!("stage{stage}_{seed}.diverged.ckpt"));
                        save_json(&path, &*last_good).map_err(|e| StageError::Io(e.to_string()))?;
                        Some(path)
                    }
                    None => None,
                };
                return Err(StageError::Diverged { update, checkpoint });
            }
            Err(e) => return Err(e),
        };
        if let Some(dir) = out_dir {
            outcome.checkpoint.save(dir)?;
            write_curves(&dir.join(format!("stage{stage}_{seed}_curves.csv")), &outcome.curves)?;
        }
        done.push(outcome);
    }
    Ok(done)
}
