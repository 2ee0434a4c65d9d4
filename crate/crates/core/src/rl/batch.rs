use rand::Rng;

use super::{gae, Agent, Controller, Critic, Env, RlError};

/// One policy step in one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Raw observation frame.
    pub frame: Vec<f64>,
    /// Frame normalized with the statistics in force during collection.
    pub nframe: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub value: f64,
    pub log_prob: f64,
    /// Episode ended after this step (termination or time limit).
    pub done: bool,
    /// Value of the final state when the episode hit its time limit, else 0.
    pub truncation_value: f64,
    /// Previous-stage mean action on this frame.
    pub teacher_action: Option<Vec<f64>>,
}

/// Time-major batch: transition `t * num_envs + e`.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub num_envs: usize,
    pub horizon: usize,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Undiscounted returns of episodes that finished during collection.
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    /// Value of each environment's state after the last step.
    pub bootstrap_values: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Fills `advantages` and `returns` per environment sequence.
    pub fn compute_advantages(&mut self, gamma: f64, gae_lambda: f64) -> Result<(), RlError> {
        let n = self.len();
        let bootstrap = self.bootstrap_values.clone();
        if n != self.num_envs * self.horizon || bootstrap.len() != self.num_envs {
            return Err(RlError::Length(format!(
                "{} transitions for {} envs x {} steps, {} bootstrap values",
                n,
                self.num_envs,
                self.horizon,
                bootstrap.len()
            )));
        }
        self.advantages = vec![0.0; n];
        self.returns = vec![0.0; n];
        for e in 0..self.num_envs {
            let idx: Vec<usize> = (0..self.horizon).map(|t| t * self.num_envs + e).collect();
            let rewards: Vec<f64> = idx
                .iter()
                .map(|&i| self.transitions[i].reward + gamma * self.transitions[i].truncation_value)
                .collect();
            let values: Vec<f64> = idx.iter().map(|&i| self.transitions[i].value).collect();
            let dones: Vec<bool> = idx.iter().map(|&i| self.transitions[i].done).collect();
            let (adv, ret) = gae(&rewards, &values, &dones, bootstrap[e], gamma, gae_lambda)?;
            for (k, &i) in idx.iter().enumerate() {
                self.advantages[i] = adv[k];
                self.returns[i] = ret[k];
            }
        }
        Ok(())
    }

    /// Shifts and scales advantages to zero mean and unit (population) variance.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n < 2.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < 1e-12 {
            self.advantages.iter_mut().for_each(|a| *a -= mean);
            return;
        }
        self.advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }

    pub fn mean_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum::<f64>() / self.len().max(1) as f64
    }
}

/// A set of environments stepped in lockstep, remembering their current frames.
pub struct VecEnv<E: Env> {
    pub envs: Vec<E>,
    frames: Vec<Vec<f64>>,
    running_return: Vec<f64>,
    running_len: Vec<usize>,
}

impl<E: Env> VecEnv<E> {
    pub fn new(mut envs: Vec<E>) -> Self {
        let frames = envs.iter_mut().map(|e| e.reset()).collect();
        let n = envs.len();
        Self { envs, frames, running_return: vec![0.0; n], running_len: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }
}

/// Steps every environment `horizon` times with actions sampled from `agent`.
///
/// The teacher, when given, is evaluated on the same frames but never drives
/// the environments. Normalizer statistics are updated once, after collection.
/// Advantages are left for [`RolloutBatch::compute_advantages`].
pub fn collect_rollouts<E: Env, R: Rng + ?Sized>(
    agent: &mut Agent,
    critic: &Critic,
    venv: &mut VecEnv<E>,
    horizon: usize,
    teacher: Option<&dyn Controller>,
    rng: &mut R,
) -> Result<RolloutBatch, RlError> {
    let num_envs = venv.len();
    let mut batch = RolloutBatch { num_envs, horizon, ..Default::default() };
    batch.transitions.reserve(num_envs * horizon);
    for _ in 0..horizon {
        for e in 0..num_envs {
            let frame = venv.frames[e].clone();
            let nframe = agent.norm.normalize(&frame);
            let (action, log_prob) = agent.sample(&nframe, rng)?;
            let value = critic.value(&nframe)?;
            let teacher_action = teacher.map(|t| t.mean_action(&frame)).transpose()?;
            let step = venv.envs[e].step(&action).map_err(|source| RlError::Env { env: e, source })?;
            let done = step.terminated || step.truncated;
            let truncation_value = if step.truncated && !step.terminated {
                critic.value(&agent.norm.normalize(&step.frame))?
            } else {
                0.0
            };
            venv.running_return[e] += step.reward;
            venv.running_len[e] += 1;
            if done {
                batch.episode_returns.push(venv.running_return[e]);
                batch.episode_lengths.push(venv.running_len[e]);
                venv.running_return[e] = 0.0;
                venv.running_len[e] = 0;
                venv.frames[e] = venv.envs[e].reset();
            } else {
                venv.frames[e] = step.frame;
            }
            batch.transitions.push(Transition {
                frame,
                nframe,
                action,
                reward: step.reward,
                value,
                log_prob,
                done,
                truncation_value,
                teacher_action,
            });
        }
    }
    batch.bootstrap_values = venv
        .frames
        .iter()
        .map(|f| critic.value(&agent.norm.normalize(f)))
        .collect::<Result<Vec<_>, _>>()?;
    let frames: Vec<Vec<f64>> = batch.transitions.iter().map(|t| t.frame.clone()).collect();
    agent.norm.update(&frames);
    Ok(batch)
}
