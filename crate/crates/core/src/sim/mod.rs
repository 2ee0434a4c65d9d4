//! Reduced-order planar simulator of a cuboid torso with an actuated rod.
//!
//! Two scenarios share one rotational core:
//!
//! - [`Scenario::Stabilize`]: the frontal plane. The base angle is roll, the
//!   arm swings in the roll plane and pushes arrive laterally or vertically.
//! - [`Scenario::Turn`]: the ground plane seen from above. The base angle is
//!   yaw and the arm swings horizontally.
//!
//! The twelve leg joints are replaced by a bounded leg-proxy wrench (a forward
//! force and a torque about the scenario axis) that acts through the contact
//! model. The arm pivots at the torso center of mass, so with contact and
//! gravity disabled the body and arm exchange angular momentum exactly and
//! `alpha_body / alpha_arm = -I_arm / I_body`.

mod dynamics;
mod params;
mod perturbation;
mod trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dynamics::{angular_momentum, is_terminated, reset, step_dynamics, CommandSample, LegWrench};
pub use params::{derive_inertias, RobotParams, DEFAULT_COM_SHIFT, DEFAULT_COUPLING};
pub use perturbation::{sample_perturbation, PerturbationEvent};
pub use trajectory::{write_trajectory_csv, TrajectoryRow};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("parameter out of domain: {0}")]
    Param(String),
    #[error("integration diverged at t = {:.4} s: {state:?}", state.time)]
    Divergence { state: Box<SimState> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Stabilize,
    Turn,
}

impl Scenario {
    /// Sign of the arm joint axis relative to the base rotation axis.
    ///
    /// In the turning scenario the first arm joint axis points down, so a
    /// positive joint deflection is a clockwise swing seen from above.
    pub fn arm_axis_sign(self) -> f64 {
        match self {
            Scenario::Stabilize => 1.0,
            Scenario::Turn => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Stabilize => "stabilize",
            Scenario::Turn => "turn",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stabilize" => Ok(Scenario::Stabilize),
            "turn" => Ok(Scenario::Turn),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// How the arm is attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmMode {
    /// No arm: its mass and state are absent.
    NoArm,
    /// Rigidly held at the nominal angle.
    Locked,
    /// Torque-controlled joint.
    Actuated,
}

impl ArmMode {
    pub fn name(self) -> &'static str {
        match self {
            ArmMode::NoArm => "noarm",
            ArmMode::Locked => "locked",
            ArmMode::Actuated => "actuated",
        }
    }
}

impl std::str::FromStr for ArmMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noarm" => Ok(ArmMode::NoArm),
            "locked" => Ok(ArmMode::Locked),
            "actuated" => Ok(ArmMode::Actuated),
            other => Err(format!("unknown arm mode `{other}` (noarm|locked|actuated)")),
        }
    }
}

/// Abstraction of the foot-ground interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactModel {
    /// Largest torque the support polygon can exert about the scenario axis, N m.
    pub support_torque_limit: f64,
    pub lateral_friction_coefficient: f64,
    /// Leg stiffness; acts as `contact_spring * (w/2)^2` about the roll axis, N/m.
    pub contact_spring: f64,
    /// Ground damping on forward motion, and `contact_damping * (w/2)^2` about
    /// the scenario axis, N s/m.
    pub contact_damping: f64,
}

impl ContactModel {
    /// No contact at all: the free-floating configuration.
    pub fn disabled() -> Self {
        Self {
            support_torque_limit: 0.0,
            lateral_friction_coefficient: 0.0,
            contact_spring: 0.0,
            contact_damping: 0.0,
        }
    }

    pub fn default_for(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Stabilize => Self {
                support_torque_limit: 30.0,
                lateral_friction_coefficient: 0.9,
                contact_spring: 2000.0,
                contact_damping: 80.0,
            },
            Scenario::Turn => Self {
                support_torque_limit: 3.0,
                lateral_friction_coefficient: 0.6,
                contact_spring: 0.0,
                contact_damping: 10.0,
            },
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("support_torque_limit", self.support_torque_limit),
            ("lateral_friction_coefficient", self.lateral_friction_coefficient),
            ("contact_spring", self.contact_spring),
            ("contact_damping", self.contact_damping),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Param(format!("{name} must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub arm_mode: ArmMode,
    /// m/s^2
    pub gravity: f64,
    /// Physics step, s.
    pub dt: f64,
    /// Physics steps per policy step.
    pub control_decimation: usize,
    /// s
    pub episode_length: f64,
    pub contact: ContactModel,
    /// Roll limit (Stabilize) or sideslip limit (Turn), rad.
    pub termination_angle: f64,
    /// Multiplies configured push magnitudes to obtain newtons.
    pub force_scale: f64,
    /// Arm joint angle the locked arm is held at and episodes start from, rad.
    pub arm_nominal_angle: f64,
    /// Half-width of uniform reset noise on angles (rad) and velocities.
    pub reset_noise: f64,
}

impl ScenarioConfig {
    pub fn default_for(scenario: Scenario) -> Self {
        Self {
            scenario,
            arm_mode: ArmMode::Actuated,
            gravity: 9.81,
            dt: 0.005,
            control_decimation: 4,
            episode_length: 20.0,
            contact: ContactModel::default_for(scenario),
            termination_angle: 0.5,
            force_scale: match scenario {
                Scenario::Stabilize => 0.2,
                Scenario::Turn => 0.1,
            },
            arm_nominal_angle: match scenario {
                Scenario::Stabilize => std::f64::consts::FRAC_PI_2,
                Scenario::Turn => 0.0,
            },
            reset_noise: 0.05,
        }
    }

    /// Contact and gravity removed.
    pub fn free_floating(scenario: Scenario) -> Self {
        Self {
            gravity: 0.0,
            contact: ContactModel::disabled(),
            ..Self::default_for(scenario)
        }
    }

    pub fn control_dt(&self) -> f64 {
        self.dt * self.control_decimation as f64
    }

    /// Number of policy steps in a full episode.
    pub fn control_steps(&self) -> usize {
        (self.episode_length / self.control_dt()).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::Param(format!("dt must be positive, got {}", self.dt)));
        }
        if self.control_decimation == 0 {
            return Err(SimError::Param("control_decimation must be at least 1".into()));
        }
        let steps = self.episode_length / self.dt;
        if !(self.episode_length > 0.0) || (steps - steps.round()).abs() > 1e-6 {
            return Err(SimError::Param(format!(
                "episode_length {} is not a positive multiple of dt {}",
                self.episode_length, self.dt
            )));
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(SimError::Param(format!("gravity must be nonnegative, got {}", self.gravity)));
        }
        if !(self.termination_angle > 0.0) {
            return Err(SimError::Param("termination_angle must be positive".into()));
        }
        if !(self.force_scale.is_finite() && self.force_scale >= 0.0) {
            return Err(SimError::Param("force_scale must be nonnegative".into()));
        }
        if !(self.reset_noise.is_finite() && self.reset_noise >= 0.0) {
            return Err(SimError::Param("reset_noise must be nonnegative".into()));
        }
        self.contact.validate()
    }
}

/// Ground truth of the simulated robot.
///
/// Stabilize: `base_position`/`base_lin_velocity` are (forward, lateral) and
/// `base_angle` is roll. Turn: they are world-frame (x, y) and `base_angle` is yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub base_position: [f64; 2],
    pub base_angle: f64,
    pub base_lin_velocity: [f64; 2],
    pub base_ang_velocity: f64,
    /// Joint angle relative to the torso, rad.
    pub arm_angle: f64,
    pub arm_ang_velocity: f64,
    pub time: f64,
}

impl SimState {
    pub fn is_finite(&self) -> bool {
        self.base_position.iter().all(|v| v.is_finite())
            && self.base_lin_velocity.iter().all(|v| v.is_finite())
            && self.base_angle.is_finite()
            && self.base_ang_velocity.is_finite()
            && self.arm_angle.is_finite()
            && self.arm_ang_velocity.is_finite()
            && self.time.is_finite()
    }

    /// Velocity in the torso frame (forward, left). Identity for Stabilize.
    pub fn body_velocity(&self, scenario: Scenario) -> [f64; 2] {
        match scenario {
            Scenario::Stabilize => self.base_lin_velocity,
            Scenario::Turn => {
                let (s, c) = self.base_angle.sin_cos();
                let [vx, vy] = self.base_lin_velocity;
                [c * vx + s * vy, -s * vx + c * vy]
            }
        }
    }
}
