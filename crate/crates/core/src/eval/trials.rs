use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::rl::Controller;
use crate::seed::rng_for;
use crate::sim::{sample_perturbation, ArmMode, CommandSample, RobotParams, Scenario, ScenarioConfig};
use crate::staged::{draw_randomization, CommandSchedule, EpisodeDraw, EpisodeSource, Randomization, RewardWeights, StageEnv};

/// Commands used by an evaluation battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalCommands {
    /// Even trials stand still, odd trials walk forward at `speed`.
    StandOrWalk { speed: f64 },
    /// Fixed forward speed; trial `i` steps to `yaw_rates[i % len]` with a
    /// random sign at `step_time`.
    YawStep { speed: f64, yaw_rates: Vec<f64>, step_time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    /// Condition name recorded with every trial.
    pub label: String,
    pub trials: usize,
    /// s
    pub episode_length: f64,
    pub commands: EvalCommands,
    /// One push per trial when set.
    pub force_range: Option<(f64, f64)>,
    pub offset_range: (f64, f64),
    pub push_duration: f64,
    pub arm_mode: ArmMode,
    pub randomization: Randomization,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.trials == 0 {
            return Err(EvalError::Config("trial count must be positive".into()));
        }
        if !(self.episode_length > 0.0) {
            return Err(EvalError::Config("episode length must be positive".into()));
        }
        if let EvalCommands::YawStep { yaw_rates, .. } = &self.commands {
            if yaw_rates.is_empty() {
                return Err(EvalError::Config("yaw step battery needs at least one yaw rate".into()));
            }
        }
        Ok(())
    }
}

/// The four evaluation metrics over a trial set.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub success_rate: f64,
    /// Mean episode length over the maximum.
    pub ttf: f64,
    /// Time-averaged `|v_body - (v_cmd, 0)|`, m/s.
    pub v_lin_tracking_error: f64,
    /// Time-averaged `|yaw_rate - yaw_cmd|`, rad/s (zero for Stabilize).
    pub v_ang_tracking_error: f64,
    pub trials: usize,
}

impl Metrics {
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let n = trials.len().max(1) as f64;
        // Fixed-order sums keep the result independent of scheduling.
        let sum = |f: &dyn Fn(&TrialRecord) -> f64| trials.iter().map(f).sum::<f64>() / n;
        Self {
            success_rate: sum(&|t| if t.survived { 1.0 } else { 0.0 }),
            ttf: sum(&|t| t.episode_fraction),
            v_lin_tracking_error: sum(&|t| t.v_lin_error),
            v_ang_tracking_error: sum(&|t| t.v_ang_error),
            trials: trials.len(),
        }
    }
}

/// Mean and sample standard deviation of metrics across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Metrics,
    pub std: Metrics,
    pub seeds: usize,
}

impl MetricSummary {
    pub fn from_seeds(per_seed: &[Metrics]) -> Self {
        let n = per_seed.len();
        let stat = |f: fn(&Metrics) -> f64| {
            let m = per_seed.iter().map(f).sum::<f64>() / n.max(1) as f64;
            let v = if n > 1 { per_seed.iter().map(|x| (f(x) - m).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            (m, v.sqrt())
        };
        let (s_m, s_s) = stat(|m| m.success_rate);
        let (t_m, t_s) = stat(|m| m.ttf);
        let (l_m, l_s) = stat(|m| m.v_lin_tracking_error);
        let (a_m, a_s) = stat(|m| m.v_ang_tracking_error);
        let trials = per_seed.first().map_or(0, |m| m.trials);
        Self {
            mean: Metrics { success_rate: s_m, ttf: t_m, v_lin_tracking_error: l_m, v_ang_tracking_error: a_m, trials },
            std: Metrics { success_rate: s_s, ttf: t_s, v_lin_tracking_error: l_s, v_ang_tracking_error: a_s, trials },
            seeds: n,
        }
    }
}

/// Per-trial log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub condition: String,
    pub trial: usize,
    pub survived: bool,
    /// s
    pub episode_length: f64,
    pub episode_fraction: f64,
    pub v_lin_error: f64,
    pub v_ang_error: f64,
    pub command_linear: f64,
    /// Yaw-rate command after the step (0 for Stabilize).
    pub command_yaw: f64,
    pub push_magnitude: f64,
    pub push_axis: usize,
    pub push_offset: f64,
    pub push_start: f64,
    pub payload: f64,
    pub friction: f64,
}

/// Draws trial `i`'s conditions from its own stream.
fn draw_trial<R: Rng + ?Sized>(
    cfg: &TrialConfig,
    i: usize,
    contact_friction: f64,
    rng: &mut R,
) -> Result<EpisodeDraw, EvalError> {
    let schedule = match &cfg.commands {
        EvalCommands::StandOrWalk { speed } => CommandSchedule::constant(CommandSample {
            linear_velocity: if i % 2 == 0 { 0.0 } else { *speed },
            yaw_rate: 0.0,
        }),
        EvalCommands::YawStep { speed, yaw_rates, step_time } => {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            CommandSchedule::yaw_step(*speed, sign * yaw_rates[i % yaw_rates.len()], *step_time)
        }
    };
    let perturbation = cfg
        .force_range
        .map(|fr| sample_perturbation(rng, fr, cfg.offset_range, cfg.push_duration, cfg.episode_length))
        .transpose()?;
    let (payload, friction) = draw_randomization(rng, &cfg.randomization, contact_friction);
    Ok(EpisodeDraw { schedule, perturbation, payload, friction })
}

/// Checks that a controller's action width fits the arm mode: three actions
/// exactly when the arm is actuated, two otherwise.
pub fn check_compatible(action_dim: usize, arm_mode: ArmMode) -> Result<(), EvalError> {
    let expected = if arm_mode == ArmMode::Actuated { 3 } else { 2 };
    if action_dim != expected {
        return Err(EvalError::Incompatible { action_dim, arm_mode });
    }
    Ok(())
}

/// Runs one trial to termination or the time limit.
pub fn run_trial(
    policy: &(dyn Controller + Sync),
    cfg: &TrialConfig,
    scenario: &ScenarioConfig,
    robot: &RobotParams,
    seed: u64,
    i: usize,
) -> Result<TrialRecord, EvalError> {
    let mut rng = rng_for(seed, &format!("trial{i}"));
    let sc = ScenarioConfig { arm_mode: cfg.arm_mode, episode_length: cfg.episode_length, ..scenario.clone() };
    let draw = draw_trial(cfg, i, sc.contact.lateral_friction_coefficient, &mut rng)?;
    let source = EpisodeSource {
        commands: Default::default(),
        perturbation: None,
        randomization: Randomization::none(),
    };
    let mut env = StageEnv::with_source(&sc, robot, RewardWeights::default(), policy.action_dim(), source, rng);
    let record_draw = draw.clone();
    let mut frame = env.reset_with(draw);
    let (mut lin, mut ang) = (0.0, 0.0);
    let mut survived = true;
    let yaw_axis = sc.scenario == Scenario::Turn;
    loop {
        let action = policy.mean_action(&frame)?;
        let command = env.command();
        let step = env.step_detailed(&action).map(|(s, _)| s)?;
        let st = env.state();
        let [u, v] = st.body_velocity(sc.scenario);
        lin += (u - command.linear_velocity).hypot(v);
        if yaw_axis {
            ang += (st.base_ang_velocity - command.yaw_rate).abs();
        }
        if step.terminated {
            survived = false;
            break;
        }
        if step.truncated {
            break;
        }
        frame = step.frame;
    }
    let steps = env.steps();
    let p = record_draw.perturbation;
    let last = record_draw.schedule.segments.last().map(|s| s.1).unwrap_or_default();
    Ok(TrialRecord {
        condition: cfg.label.clone(),
        trial: i,
        survived,
        episode_length: steps as f64 * sc.control_dt(),
        episode_fraction: steps as f64 / env.max_steps() as f64,
        v_lin_error: lin / steps as f64,
        v_ang_error: ang / steps as f64,
        command_linear: last.linear_velocity,
        command_yaw: last.yaw_rate,
        push_magnitude: p.map_or(0.0, |p| p.force_magnitude),
        push_axis: p.map_or(0, |p| if p.direction[0] != 0.0 { 0 } else { 1 }),
        push_offset: p.map_or(0.0, |p| p.offset_from_base),
        push_start: p.map_or(0.0, |p| p.start_time),
        payload: record_draw.payload,
        friction: record_draw.friction,
    })
}

/// Runs `cfg.trials` independent trials in parallel and aggregates them in
/// trial order.
pub fn run_trials(
    policy: &(dyn Controller + Sync),
    cfg: &TrialConfig,
    scenario: &ScenarioConfig,
    robot: &RobotParams,
    seed: u64,
) -> Result<(Metrics, Vec<TrialRecord>), EvalError> {
    cfg.validate()?;
    check_compatible(policy.action_dim(), cfg.arm_mode)?;
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|i| run_trial(policy, cfg, scenario, robot, seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((Metrics::from_trials(&records), records))
}
