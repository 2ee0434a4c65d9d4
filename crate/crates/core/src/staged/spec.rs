use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::StageError;
use crate::nn::Activation;
use crate::sim::{ArmMode, Scenario};

/// Length of the observation frame every stage environment emits.
pub const FRAME_LEN: usize = 15;

/// Canonical action order: `[leg_force, leg_torque, arm_torque]`.
pub const MAX_ACTION_DIM: usize = 3;

/// Named slices of the observation frame.
///
/// | block        | entries | Stabilize                   | Turn                      |
/// |--------------|---------|-----------------------------|---------------------------|
/// | `Base`       | 0..2    | roll, roll rate             | sideslip, yaw rate        |
/// | `Command`    | 2..4    | forward speed, 0            | forward speed, yaw rate   |
/// | `PrevAction` | 4..7    | previous normalized action  | same                      |
/// | `Arm`        | 7..9    | joint angle from nominal, joint velocity | same         |
/// | `Privileged` | 9..15   | push (2), friction, payload, body velocity (2) | same |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsBlock {
    Base,
    Command,
    PrevAction,
    Arm,
    Privileged,
}

impl ObsBlock {
    pub fn range(self) -> Range<usize> {
        match self {
            ObsBlock::Base => 0..2,
            ObsBlock::Command => 2..4,
            ObsBlock::PrevAction => 4..7,
            ObsBlock::Arm => 7..9,
            ObsBlock::Privileged => 9..15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLayout {
    /// Leg-proxy force and torque.
    Legs,
    /// Leg-proxy force and torque plus arm torque.
    LegsArm,
}

impl ActionLayout {
    pub fn dim(self) -> usize {
        match self {
            ActionLayout::Legs => 2,
            ActionLayout::LegsArm => 3,
        }
    }
}

/// Weights of the per-step reward terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub lin_vel: f64,
    pub yaw_rate: f64,
    pub alive: f64,
    pub action: f64,
    pub arm_velocity: f64,
    pub base_angle: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { lin_vel: 2.0, yaw_rate: 1.0, alive: 1.0, action: 0.01, arm_velocity: 0.001, base_angle: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealShape {
    Linear,
    Cosine,
}

/// Decay of the behavior-cloning weight from `lambda_max` to `lambda_min`
/// over the first `fraction` of a stage's updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSchedule {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub fraction: f64,
    pub shape: AnnealShape,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { lambda_max: 1.0, lambda_min: 0.0, fraction: 0.5, shape: AnnealShape::Linear }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<(), StageError> {
        if !(self.lambda_max >= self.lambda_min && self.lambda_min >= 0.0) {
            return Err(StageError::Config(format!(
                "anneal needs lambda_max >= lambda_min >= 0, got {} and {}",
                self.lambda_max, self.lambda_min
            )));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(StageError::Config(format!("anneal fraction must lie in (0, 1], got {}", self.fraction)));
        }
        Ok(())
    }
}

/// Behavior-cloning weight at `update` of `total` updates.
pub fn anneal_lambda(schedule: &AnnealSchedule, update: usize, total: usize) -> f64 {
    let span = schedule.fraction * total as f64;
    let p = if span <= 0.0 { 1.0 } else { (update as f64 / span).min(1.0) };
    let (hi, lo) = (schedule.lambda_max, schedule.lambda_min);
    match schedule.shape {
        AnnealShape::Linear => hi - (hi - lo) * p,
        AnnealShape::Cosine => lo + (hi - lo) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()),
    }
}

/// Command distribution used for training episodes.
///
/// The forward speed is drawn once per episode. The yaw-rate command starts at
/// zero for `yaw_hold` seconds, then switches every `yaw_period` seconds to a
/// value of random sign with magnitude uniform in `yaw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandRanges {
    /// m/s
    pub linear: (f64, f64),
    /// rad/s, magnitude
    pub yaw: (f64, f64),
    /// s
    pub yaw_hold: (f64, f64),
    /// s
    pub yaw_period: (f64, f64),
}

impl Default for CommandRanges {
    fn default() -> Self {
        Self { linear: (0.0, 0.3), yaw: (0.0, 0.0), yaw_hold: (0.5, 1.5), yaw_period: (2.0, 4.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub force_range: (f64, f64),
    /// m
    pub offset_range: (f64, f64),
    /// s
    pub duration: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self { force_range: (200.0, 300.0), offset_range: (-0.12, 0.12), duration: 0.2 }
    }
}

/// Per-episode domain randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Randomization {
    /// Added to the torso mass, kg.
    pub payload_range: (f64, f64),
    /// Replaces the contact friction coefficient; `None` keeps the configured one.
    pub friction_range: Option<(f64, f64)>,
}

impl Randomization {
    pub fn default_for(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Stabilize => Self { payload_range: (-1.0, 1.0), friction_range: Some((0.7, 1.1)) },
            Scenario::Turn => Self { payload_range: (-1.0, 1.0), friction_range: Some((0.5, 0.8)) },
        }
    }

    pub fn none() -> Self {
        Self { payload_range: (0.0, 0.0), friction_range: None }
    }
}

impl Default for Randomization {
    fn default() -> Self {
        Self::default_for(Scenario::Stabilize)
    }
}

/// Network sizes shared by all stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub extrinsic_dim: usize,
    pub activation: Activation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            encoder_hidden: vec![32],
            extrinsic_dim: 8,
            activation: Activation::Elu,
        }
    }
}

/// One stage of the pipeline: what the policy sees, what it controls, what it
/// is rewarded for and under which conditions it trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    /// Visible blocks; `Privileged` entries go through the encoder.
    pub observation: Vec<ObsBlock>,
    pub action: ActionLayout,
    pub arm_mode: ArmMode,
    #[serde(default)]
    pub reward: RewardWeights,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub commands: CommandRanges,
    /// s
    pub episode_length: f64,
    /// Behavior-cloning schedule toward the previous stage; absent for stage 1.
    #[serde(default)]
    pub anneal: Option<AnnealSchedule>,
    /// PPO updates spent on this stage.
    pub updates: usize,
}

impl StageSpec {
    pub fn action_dim(&self) -> usize {
        self.action.dim()
    }

    fn has(&self, block: ObsBlock) -> bool {
        self.observation.contains(&block)
    }

    /// Frame entries fed straight to the policy.
    pub fn obs_index(&self) -> Vec<usize> {
        let mut blocks: Vec<ObsBlock> = self.observation.clone();
        blocks.sort();
        blocks.dedup();
        blocks
            .into_iter()
            .filter(|b| *b != ObsBlock::Privileged)
            .flat_map(|b| match b {
                ObsBlock::PrevAction => {
                    let r = b.range();
                    r.start..r.start + self.action_dim()
                }
                _ => b.range(),
            })
            .collect()
    }

    /// Frame entries fed to the privileged encoder.
    pub fn privileged_index(&self) -> Vec<usize> {
        if self.has(ObsBlock::Privileged) {
            ObsBlock::Privileged.range().collect()
        } else {
            Vec::new()
        }
    }

    /// Frame entries read by the critic: everything the policy sees plus the
    /// raw privileged block.
    pub fn critic_index(&self) -> Vec<usize> {
        let mut idx = self.obs_index();
        idx.extend(ObsBlock::Privileged.range());
        idx
    }

    pub fn validate(&self, stage: usize) -> Result<(), StageError> {
        let err = |m: String| Err(StageError::Config(format!("stage {stage}: {m}")));
        if self.observation.is_empty() {
            return err("observation has no blocks".into());
        }
        match (self.action, self.arm_mode) {
            (ActionLayout::LegsArm, ArmMode::Actuated) | (ActionLayout::Legs, ArmMode::NoArm | ArmMode::Locked) => {}
            (a, m) => return err(format!("action layout {a:?} is incompatible with arm mode {m:?}")),
        }
        if self.has(ObsBlock::Arm) && self.arm_mode != ArmMode::Actuated {
            return err("arm observations need an actuated arm".into());
        }
        if !(self.episode_length > 0.0) {
            return err(format!("episode_length must be positive, got {}", self.episode_length));
        }
        let c = &self.commands;
        for (name, (lo, hi)) in
            [("linear", c.linear), ("yaw", c.yaw), ("yaw_hold", c.yaw_hold), ("yaw_period", c.yaw_period)]
        {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return err(format!("command range {name} ({lo}, {hi}) is not ordered"));
            }
        }
        if c.yaw.0 < 0.0 || c.yaw_period.0 <= 0.0 || c.yaw_hold.0 < 0.0 {
            return err("yaw magnitudes and durations must be nonnegative".into());
        }
        if let Some(p) = &self.perturbation {
            let (lo, hi) = p.force_range;
            if !(lo >= 0.0 && lo <= hi) || !(p.offset_range.0 <= p.offset_range.1) || !(p.duration > 0.0) {
                return err(format!("invalid perturbation {p:?}"));
            }
        }
        match (&self.anneal, stage) {
            (Some(_), 1) => return err("the first stage has no teacher and takes no anneal schedule".into()),
            (None, s) if s > 1 => return err("stages after the first need an anneal schedule".into()),
            (Some(a), _) => a.validate()?,
            _ => {}
        }
        Ok(())
    }

    /// Default three-stage decomposition for a scenario.
    ///
    /// Stabilize: no arm and no pushes, then a locked arm under pushes, then
    /// the actuated arm under pushes. Turn: no arm at moderate speeds, then a
    /// locked arm over the full speed range, then the actuated arm.
    pub fn default_pipeline(scenario: Scenario, updates: [usize; 3]) -> Vec<StageSpec> {
        use ObsBlock::*;
        let (commands_1, commands_23, push, episode_length) = match scenario {
            Scenario::Stabilize => (
                CommandRanges::default(),
                CommandRanges::default(),
                Some(PerturbationConfig::default()),
                5.0,
            ),
            Scenario::Turn => (
                CommandRanges { linear: (0.3, 0.8), yaw: (0.3, 1.0), ..Default::default() },
                CommandRanges { linear: (0.6, 1.5), yaw: (0.5, 2.0), ..Default::default() },
                None,
                8.0,
            ),
        };
        let reward = RewardWeights::default();
        vec![
            StageSpec {
                observation: vec![Base, Command, PrevAction, Privileged],
                action: ActionLayout::Legs,
                arm_mode: ArmMode::NoArm,
                reward: reward.clone(),
                perturbation: None,
                commands: commands_1,
                episode_length,
                anneal: None,
                updates: updates[0],
            },
            StageSpec {
                observation: vec![Base, Command, PrevAction, Privileged],
                action: ActionLayout::Legs,
                arm_mode: ArmMode::Locked,
                reward: reward.clone(),
                perturbation: push.clone(),
                commands: commands_23.clone(),
                episode_length,
                anneal: Some(AnnealSchedule::default()),
                updates: updates[1],
            },
            StageSpec {
                observation: vec![Base, Command, PrevAction, Arm, Privileged],
                action: ActionLayout::LegsArm,
                arm_mode: ArmMode::Actuated,
                reward,
                perturbation: push,
                commands: commands_23,
                episode_length,
                anneal: Some(AnnealSchedule::default()),
                updates: updates[2],
            },
        ]
    }
}

/// Checks every stage and that each one nests the previous: its observation
/// blocks and action dimensions contain the previous stage's.
pub fn validate_stages(stages: &[StageSpec]) -> Result<(), StageError> {
    if stages.is_empty() || stages.len() > 3 {
        return Err(StageError::Config(format!("expected 1 to 3 stages, got {}", stages.len())));
    }
    for (i, s) in stages.iter().enumerate() {
        s.validate(i + 1)?;
        if i > 0 {
            let prev = &stages[i - 1];
            if let Some(b) = prev.observation.iter().find(|b| !s.observation.contains(b)) {
                return Err(StageError::Config(format!(
                    "stage {} drops observation block {b:?} seen by stage {i}",
                    i + 1
                )));
            }
            if s.action_dim() < prev.action_dim() {
                return Err(StageError::Config(format!("stage {} has fewer actions than stage {i}", i + 1)));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pipeline() -> Vec<StageSpec> {
        StageSpec::default_pipeline(Scenario::Stabilize, [10, 10, 10])
    }

    #[test]
    fn anneal_hits_endpoints_and_decreases() {
        for shape in [AnnealShape::Linear, AnnealShape::Cosine] {
            let s = AnnealSchedule { lambda_max: 2.0, lambda_min: 0.25, fraction: 0.5, shape };
            assert_eq!(anneal_lambda(&s, 0, 100), 2.0);
            assert!((anneal_lambda(&s, 50, 100) - 0.25).abs() < 1e-12);
            assert!((anneal_lambda(&s, 99, 100) - 0.25).abs() < 1e-12);
            let values: Vec<f64> = (0..100).map(|u| anneal_lambda(&s, u, 100)).collect();
            assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }
        let lin = AnnealSchedule { fraction: 1.0, ..Default::default() };
        assert!((anneal_lambda(&lin, 25, 100) - 0.75).abs() < 1e-12);
        let cos = AnnealSchedule { fraction: 1.0, shape: AnnealShape::Cosine, ..Default::default() };
        assert!((anneal_lambda(&cos, 50, 100) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn anneal_rejects_inverted_bounds() {
        assert!(AnnealSchedule { lambda_max: 0.1, lambda_min: 0.2, ..Default::default() }.validate().is_err());
        assert!(AnnealSchedule { fraction: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn default_pipelines_nest() {
        for sc in [Scenario::Stabilize, Scenario::Turn] {
            validate_stages(&StageSpec::default_pipeline(sc, [1, 1, 1])).unwrap();
        }
    }

    #[test]
    fn dropping_a_block_breaks_nesting() {
        let mut p = pipeline();
        p[2].observation.retain(|b| *b != ObsBlock::Privileged);
        let err = validate_stages(&p).unwrap_err().to_string();
        assert!(err.contains("Privileged"), "{err}");
    }

    #[test]
    fn layout_must_match_arm_mode() {
        let mut p = pipeline();
        p[2].arm_mode = ArmMode::Locked;
        assert!(validate_stages(&p).is_err());
        let mut p = pipeline();
        p[1].observation.push(ObsBlock::Arm);
        assert!(p[1].validate(2).is_err());
    }

    #[test]
    fn anneal_only_after_the_first_stage() {
        let mut p = pipeline();
        p[0].anneal = Some(AnnealSchedule::default());
        assert!(p[0].validate(1).is_err());
        p[1].anneal = None;
        assert!(p[1].validate(2).is_err());
    }

    #[test]
    fn indices_follow_the_frame_layout() {
        let p = pipeline();
        assert_eq!(p[1].obs_index(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(p[2].obs_index(), vec![0, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(p[2].privileged_index(), (9..15).collect::<Vec<_>>());
        assert_eq!(p[1].critic_index(), vec![0, 1, 2, 3, 4, 5, 9, 10, 11, 12, 13, 14]);
    }
}
