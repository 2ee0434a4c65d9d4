use serde::{Deserialize, Serialize};

use super::{Scenario, SimError};

/// Mass and geometry of the torso (a uniform cuboid) and the arm (a uniform
/// rod pivoting at the torso's center of mass), plus actuator limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Arm mass, kg.
    pub arm_mass: f64,
    /// Torso mass, kg.
    pub body_mass: f64,
    /// Arm length from pivot to tip, m.
    pub arm_length: f64,
    /// Torso height, m.
    pub body_height: f64,
    /// Torso width, m.
    pub body_width: f64,
    /// Torso length, m.
    pub body_length: f64,
    /// Height of the torso center of mass above the feet, m.
    pub stance_height: f64,
    pub arm_torque_limit: f64,
    /// `(lower, upper)` arm joint angle, rad.
    pub arm_joint_limits: (f64, f64),
    pub leg_proxy_force_limit: f64,
    pub leg_proxy_torque_limit: f64,
}

/// Coupling coefficient `4 M_a l^2 / (M_b (h^2 + w^2))` targeted by the defaults.
pub const DEFAULT_COUPLING: f64 = 0.378;
/// Maximum center-of-mass shift `M_a / (M_a + M_b) * l / 2` targeted by the defaults, m.
pub const DEFAULT_COM_SHIFT: f64 = 0.022;

impl RobotParams {
    /// Solves for arm mass and length so that the coupling coefficient and the
    /// maximum CoM shift hit the given targets for a fixed torso.
    ///
    /// With `S = k/4 * M_b (h^2 + w^2)` and `p = M_a l`, the two targets give
    /// `M_a l^2 = S` and `p = 2c (M_a + M_b)`, i.e. `(2c/S) p^2 - p + 2c M_b = 0`.
    /// The smaller root (the lighter arm) is taken.
    pub fn solve_arm(
        body_mass: f64,
        body_height: f64,
        body_width: f64,
        coupling: f64,
        com_shift: f64,
    ) -> Result<(f64, f64), SimError> {
        let s = coupling / 4.0 * body_mass * (body_height.powi(2) + body_width.powi(2));
        let a = 2.0 * com_shift / s;
        let c = 2.0 * com_shift * body_mass;
        let disc = 1.0 - 4.0 * a * c;
        if !(s > 0.0) || !(com_shift > 0.0) || disc < 0.0 {
            return Err(SimError::Param(format!(
                "no arm satisfies coupling {coupling} and CoM shift {com_shift} for this torso"
            )));
        }
        let p = 2.0 * c / (1.0 + disc.sqrt());
        let arm_mass = p * p / s;
        let arm_length = s / p;
        Ok((arm_mass, arm_length))
    }

    pub fn default_for(scenario: Scenario) -> Self {
        let (body_mass, body_height, body_width) = (12.0, 0.2, 0.4);
        let (arm_mass, arm_length) = Self::solve_arm(
            body_mass,
            body_height,
            body_width,
            DEFAULT_COUPLING,
            DEFAULT_COM_SHIFT,
        )
        .expect("default torso admits a solution");
        let arm_joint_limits = match scenario {
            Scenario::Stabilize => (std::f64::consts::FRAC_PI_2 - 1.4, std::f64::consts::FRAC_PI_2 + 1.4),
            Scenario::Turn => (-1.4, 1.4),
        };
        Self {
            arm_mass,
            body_mass,
            arm_length,
            body_height,
            body_width,
            body_length: 0.5,
            stance_height: 0.28,
            arm_torque_limit: 8.0,
            arm_joint_limits,
            leg_proxy_force_limit: 80.0,
            leg_proxy_torque_limit: match scenario {
                Scenario::Stabilize => 12.0,
                Scenario::Turn => 2.0,
            },
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("arm_mass", self.arm_mass),
            ("body_mass", self.body_mass),
            ("arm_length", self.arm_length),
            ("body_height", self.body_height),
            ("body_width", self.body_width),
            ("body_length", self.body_length),
            ("stance_height", self.stance_height),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Param(format!("{name} must be positive, got {v}")));
            }
        }
        let limits = [
            ("arm_torque_limit", self.arm_torque_limit),
            ("leg_proxy_force_limit", self.leg_proxy_force_limit),
            ("leg_proxy_torque_limit", self.leg_proxy_torque_limit),
        ];
        for (name, v) in limits {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Param(format!("{name} must be nonnegative, got {v}")));
            }
        }
        let (lo, hi) = self.arm_joint_limits;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(SimError::Param(format!("arm joint limits ({lo}, {hi}) are not ordered")));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.arm_mass + self.body_mass
    }
}

/// Rod about its pivot and cuboid about the axis the scenario rotates around.
///
/// The stabilization scenario rolls about the longitudinal axis (`h^2 + w^2`);
/// the turning scenario yaws about the vertical axis (`d^2 + w^2`).
pub fn derive_inertias(params: &RobotParams, scenario: Scenario) -> Result<(f64, f64), SimError> {
    params.validate()?;
    let arm = params.arm_mass * params.arm_length.powi(2) / 3.0;
    let cross = match scenario {
        Scenario::Stabilize => params.body_height.powi(2) + params.body_width.powi(2),
        Scenario::Turn => params.body_length.powi(2) + params.body_width.powi(2),
    };
    let body = params.body_mass * cross / 12.0;
    Ok((arm, body))
}
