use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{CommandRanges, ObsBlock, PerturbationConfig, Randomization, RewardWeights, StageSpec, FRAME_LEN};
use crate::rl::{Env, EnvStep};
use crate::sim::{
    is_terminated, reset, sample_perturbation, step_dynamics, CommandSample, LegWrench, PerturbationEvent,
    RobotParams, Scenario, ScenarioConfig, SimError, SimState,
};

/// Piecewise-constant command over an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSchedule {
    /// `(start_time, command)`, sorted by start time; the first starts at 0.
    pub segments: Vec<(f64, CommandSample)>,
}

impl CommandSchedule {
    pub fn constant(command: CommandSample) -> Self {
        Self { segments: vec![(0.0, command)] }
    }

    /// Zero yaw until `step_time`, then `yaw_rate`, at a fixed forward speed.
    pub fn yaw_step(linear_velocity: f64, yaw_rate: f64, step_time: f64) -> Self {
        Self {
            segments: vec![
                (0.0, CommandSample { linear_velocity, yaw_rate: 0.0 }),
                (step_time, CommandSample { linear_velocity, yaw_rate }),
            ],
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, ranges: &CommandRanges, episode_length: f64) -> Self {
        let uniform = |rng: &mut R, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..hi) };
        let linear_velocity = uniform(rng, ranges.linear);
        let mut segments = vec![(0.0, CommandSample { linear_velocity, yaw_rate: 0.0 })];
        if ranges.yaw.1 > 0.0 {
            let mut t = uniform(rng, ranges.yaw_hold);
            while t < episode_length {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let yaw_rate = sign * uniform(rng, ranges.yaw);
                segments.push((t, CommandSample { linear_velocity, yaw_rate }));
                t += uniform(rng, ranges.yaw_period);
            }
        }
        Self { segments }
    }

    pub fn at(&self, t: f64) -> CommandSample {
        self.segments.iter().take_while(|(start, _)| *start <= t).last().map_or_else(
            || self.segments.first().map(|s| s.1).unwrap_or_default(),
            |s| s.1,
        )
    }

    /// Times at which the command changes.
    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().skip(1).map(|s| s.0)
    }
}

/// Per-term reward breakdown; `total` is the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub lin_vel: f64,
    pub yaw_rate: f64,
    pub alive: f64,
    pub action: f64,
    pub arm_velocity: f64,
    pub base_angle: f64,
    pub total: f64,
}

/// Weighted reward of the state reached after applying `action` (normalized).
///
/// Linear tracking compares the body-frame velocity to `(v_cmd, 0)`. The yaw
/// term only exists for Turn and the base-angle (roll) term only for Stabilize.
pub fn stage_reward(
    state: &SimState,
    scenario: Scenario,
    action: &[f64],
    command: &CommandSample,
    weights: &RewardWeights,
) -> RewardBreakdown {
    let [u, v] = state.body_velocity(scenario);
    let lin = (u - command.linear_velocity).powi(2) + v * v;
    let (yaw, angle) = match scenario {
        Scenario::Stabilize => (0.0, state.base_angle.powi(2)),
        Scenario::Turn => ((state.base_ang_velocity - command.yaw_rate).powi(2), 0.0),
    };
    let act: f64 = action.iter().map(|a| a * a).sum();
    let mut r = RewardBreakdown {
        lin_vel: -weights.lin_vel * lin,
        yaw_rate: -weights.yaw_rate * yaw,
        alive: weights.alive,
        action: -weights.action * act,
        arm_velocity: -weights.arm_velocity * state.arm_ang_velocity.powi(2),
        base_angle: -weights.base_angle * angle,
        total: 0.0,
    };
    r.total = r.lin_vel + r.yaw_rate + r.alive + r.action + r.arm_velocity + r.base_angle;
    r
}

/// Converts a normalized canonical action into arm torque and leg wrench.
pub fn scale_action(action: &[f64], params: &RobotParams) -> (f64, LegWrench) {
    let a = |k: usize| action.get(k).copied().unwrap_or(0.0).clamp(-1.0, 1.0);
    let leg = LegWrench { force: a(0) * params.leg_proxy_force_limit, torque: a(1) * params.leg_proxy_torque_limit };
    (a(2) * params.arm_torque_limit, leg)
}

/// Episode conditions drawn at reset.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeDraw {
    pub schedule: CommandSchedule,
    pub perturbation: Option<PerturbationEvent>,
    pub payload: f64,
    pub friction: f64,
}

/// How episodes are drawn: the training distribution of a stage, or a fixed
/// evaluation protocol supplied per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSource {
    pub commands: CommandRanges,
    pub perturbation: Option<PerturbationConfig>,
    pub randomization: Randomization,
}

impl EpisodeSource {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, contact_friction: f64, episode_length: f64) -> Result<EpisodeDraw, SimError> {
        let schedule = CommandSchedule::sample(rng, &self.commands, episode_length);
        let perturbation = self
            .perturbation
            .as_ref()
            .map(|p| sample_perturbation(rng, p.force_range, p.offset_range, p.duration, episode_length))
            .transpose()?;
        let (payload, friction) = draw_randomization(rng, &self.randomization, contact_friction);
        Ok(EpisodeDraw { schedule, perturbation, payload, friction })
    }
}

pub fn draw_randomization<R: Rng + ?Sized>(rng: &mut R, r: &Randomization, contact_friction: f64) -> (f64, f64) {
    let (lo, hi) = r.payload_range;
    let payload = if lo < hi { rng.random_range(lo..hi) } else { lo };
    let friction = match r.friction_range {
        Some((lo, hi)) if lo < hi => rng.random_range(lo..hi),
        Some((lo, _)) => lo,
        None => contact_friction,
    };
    (payload, friction)
}

/// Single simulated robot running one stage's task, stepped at the policy rate.
#[derive(Debug, Clone)]
pub struct StageEnv {
    pub scenario: ScenarioConfig,
    pub robot: RobotParams,
    pub reward: RewardWeights,
    pub action_dim: usize,
    source: EpisodeSource,
    rng: ChaCha8Rng,
    /// Configuration of the running episode (randomized copies).
    episode_scenario: ScenarioConfig,
    episode_robot: RobotParams,
    draw: EpisodeDraw,
    state: SimState,
    prev_action: [f64; 3],
    steps: usize,
    max_steps: usize,
}

impl StageEnv {
    /// `scenario` supplies physics and arm mode; `spec` the task.
    pub fn new(scenario: &ScenarioConfig, robot: &RobotParams, spec: &StageSpec, randomization: &Randomization, rng: ChaCha8Rng) -> Self {
        let scenario = ScenarioConfig { arm_mode: spec.arm_mode, episode_length: spec.episode_length, ..scenario.clone() };
        let source = EpisodeSource {
            commands: spec.commands.clone(),
            perturbation: spec.perturbation.clone(),
            randomization: randomization.clone(),
        };
        Self::with_source(&scenario, robot, spec.reward.clone(), spec.action_dim(), source, rng)
    }

    pub fn with_source(
        scenario: &ScenarioConfig,
        robot: &RobotParams,
        reward: RewardWeights,
        action_dim: usize,
        source: EpisodeSource,
        rng: ChaCha8Rng,
    ) -> Self {
        let max_steps = scenario.control_steps();
        Self {
            scenario: scenario.clone(),
            robot: robot.clone(),
            reward,
            action_dim,
            source,
            rng,
            episode_scenario: scenario.clone(),
            episode_robot: robot.clone(),
            draw: EpisodeDraw {
                schedule: CommandSchedule::constant(CommandSample::default()),
                perturbation: None,
                payload: 0.0,
                friction: scenario.contact.lateral_friction_coefficient,
            },
            state: SimState::default(),
            prev_action: [0.0; 3],
            steps: 0,
            max_steps,
        }
    }

    /// Starts an episode under explicitly given conditions.
    pub fn reset_with(&mut self, draw: EpisodeDraw) -> Vec<f64> {
        self.episode_robot = RobotParams { body_mass: self.robot.body_mass + draw.payload, ..self.robot.clone() };
        self.episode_scenario = self.scenario.clone();
        self.episode_scenario.contact.lateral_friction_coefficient = draw.friction;
        let command = draw.schedule.at(0.0);
        self.draw = draw;
        self.state = reset(&mut self.rng, &self.episode_robot, &self.episode_scenario, &command);
        self.prev_action = [0.0; 3];
        self.steps = 0;
        self.frame()
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn draw(&self) -> &EpisodeDraw {
        &self.draw
    }

    pub fn command(&self) -> CommandSample {
        self.draw.schedule.at(self.state.time)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Observation frame of the current state; see [`ObsBlock`] for the layout.
    pub fn frame(&self) -> Vec<f64> {
        let s = &self.state;
        let sc = self.scenario.scenario;
        let cmd = self.command();
        let [u, v] = s.body_velocity(sc);
        let mut f = vec![0.0; FRAME_LEN];
        let base = ObsBlock::Base.range().start;
        match sc {
            Scenario::Stabilize => {
                f[base] = s.base_angle;
                f[base + 1] = s.base_ang_velocity;
            }
            Scenario::Turn => {
                f[base] = if u.hypot(v) > 0.1 { v.atan2(u) } else { 0.0 };
                f[base + 1] = s.base_ang_velocity;
            }
        }
        let c = ObsBlock::Command.range().start;
        f[c] = cmd.linear_velocity;
        f[c + 1] = cmd.yaw_rate;
        let pa = ObsBlock::PrevAction.range().start;
        f[pa..pa + 3].copy_from_slice(&self.prev_action);
        if self.scenario.arm_mode == crate::sim::ArmMode::Actuated {
            let a = ObsBlock::Arm.range().start;
            f[a] = s.arm_angle - self.scenario.arm_nominal_angle;
            f[a + 1] = s.arm_ang_velocity;
        }
        let p = ObsBlock::Privileged.range().start;
        if let Some(ev) = self.draw.perturbation.as_ref().filter(|e| e.is_active(s.time)) {
            // Newtons / 50.
            let [fx, fy] = ev.force();
            f[p] = fx * self.scenario.force_scale / 50.0;
            f[p + 1] = fy * self.scenario.force_scale / 50.0;
        }
        f[p + 2] = self.draw.friction;
        f[p + 3] = self.draw.payload;
        f[p + 4] = u;
        f[p + 5] = v;
        f
    }

    /// Advances one policy step with a normalized canonical action (missing
    /// trailing entries are zero). Returns the reward breakdown too.
    pub fn step_detailed(&mut self, action: &[f64]) -> Result<(EnvStep, RewardBreakdown), SimError> {
        let mut act = [0.0; 3];
        for (k, a) in action.iter().take(3).enumerate() {
            act[k] = a.clamp(-1.0, 1.0);
        }
        let (arm, leg) = scale_action(&act, &self.episode_robot);
        let pushes: Vec<PerturbationEvent> = self.draw.perturbation.into_iter().collect();
        let command = self.command();
        for _ in 0..self.scenario.control_decimation {
            self.state = step_dynamics(&self.state, arm, leg, &pushes, &self.episode_robot, &self.episode_scenario)?;
        }
        self.prev_action = act;
        self.steps += 1;
        let reward = stage_reward(&self.state, self.scenario.scenario, &act[..self.action_dim], &command, &self.reward);
        let terminated = is_terminated(&self.state, &self.episode_scenario);
        let truncated = !terminated && self.steps >= self.max_steps;
        Ok((EnvStep { frame: self.frame(), reward: reward.total, terminated, truncated }, reward))
    }
}

impl Env for StageEnv {
    fn frame_len(&self) -> usize {
        FRAME_LEN
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn reset(&mut self) -> Vec<f64> {
        let friction = self.scenario.contact.lateral_friction_coefficient;
        let draw = self
            .source
            .draw(&mut self.rng, friction, self.scenario.episode_length)
            .expect("episode source validated with its stage");
        self.reset_with(draw)
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, SimError> {
        self.step_detailed(action).map(|(s, _)| s)
    }
}
