use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::derive_inertias;
use super::{ArmMode, PerturbationEvent, RobotParams, Scenario, ScenarioConfig, SimError, SimState};

/// Leg-proxy wrench: a forward force (N) and a torque about the scenario axis (N m).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegWrench {
    pub force: f64,
    pub torque: f64,
}

/// Velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommandSample {
    /// Forward velocity, m/s.
    pub linear_velocity: f64,
    /// Yaw rate, rad/s.
    pub yaw_rate: f64,
}

/// Total push force in the scenario plane (N) and its torque about the base.
///
/// The push is applied at `offset` along the in-plane perpendicular of its
/// direction, giving a torque of `-offset * |F|`.
fn push_wrench(perturbations: &[PerturbationEvent], t: f64, scale: f64) -> ([f64; 2], f64) {
    let mut force = [0.0; 2];
    let mut torque = 0.0;
    for p in perturbations.iter().filter(|p| p.is_active(t)) {
        let f = p.force_magnitude * scale;
        force[0] += f * p.direction[0];
        force[1] += f * p.direction[1];
        torque -= p.offset_from_base * f;
    }
    (force, torque)
}

/// Angular momentum of body plus arm about the joint, in base-axis coordinates.
pub fn angular_momentum(state: &SimState, params: &RobotParams, scenario: &ScenarioConfig) -> f64 {
    let (i_arm, i_body) = derive_inertias(params, scenario.scenario).unwrap_or((0.0, 0.0));
    let s = scenario.scenario.arm_axis_sign();
    match scenario.arm_mode {
        ArmMode::NoArm => i_body * state.base_ang_velocity,
        ArmMode::Locked => (i_body + i_arm) * state.base_ang_velocity,
        ArmMode::Actuated => {
            i_body * state.base_ang_velocity
                + i_arm * (state.base_ang_velocity + s * state.arm_ang_velocity)
        }
    }
}

/// Advances the state by one semi-implicit Euler step of `scenario.dt`.
///
/// Torques are clamped to the actuator limits first. When the arm reaches a
/// joint stop its angle is clamped and its relative velocity is zeroed; the
/// stop is an internal impact, so body and arm leave it with their combined
/// angular momentum.
pub fn step_dynamics(
    state: &SimState,
    arm_torque: f64,
    leg: LegWrench,
    perturbations: &[PerturbationEvent],
    params: &RobotParams,
    scenario: &ScenarioConfig,
) -> Result<SimState, SimError> {
    let dt = scenario.dt;
    let g = scenario.gravity;
    let contact = &scenario.contact;
    let s = scenario.scenario.arm_axis_sign();
    let (i_arm, i_body) = derive_inertias(params, scenario.scenario)?;
    let has_arm = scenario.arm_mode != ArmMode::NoArm;
    let mass = if has_arm { params.total_mass() } else { params.body_mass };

    let arm_torque = match scenario.arm_mode {
        ArmMode::Actuated => arm_torque.clamp(-params.arm_torque_limit, params.arm_torque_limit),
        _ => 0.0,
    };
    let leg_force = leg.force.clamp(-params.leg_proxy_force_limit, params.leg_proxy_force_limit);
    let leg_torque = leg.torque.clamp(-params.leg_proxy_torque_limit, params.leg_proxy_torque_limit);

    let (push, push_torque) = push_wrench(perturbations, state.time, scenario.force_scale);
    let half_width_sq = (params.body_width / 2.0).powi(2);
    let rot_stiffness = contact.contact_spring * half_width_sq;
    let rot_damping = contact.contact_damping * half_width_sq;
    let phi = state.base_angle;
    let omega = state.base_ang_velocity;

    let mut next = *state;
    let ext_torque;
    // Torque of the arm's own weight about its pivot (Stabilize only).
    let mut arm_gravity = 0.0;

    match scenario.scenario {
        Scenario::Stabilize => {
            // Plane axes: e1 lateral, e2 up. push = (lateral, vertical).
            let [vx, vy] = state.base_lin_velocity;
            let ax = (leg_force - contact.contact_damping * vx) / mass;
            let normal = (mass * g - push[1]).max(0.0);
            let max_friction = contact.lateral_friction_coefficient * normal;
            let friction = (-(push[0] + mass * vy / dt)).clamp(-max_friction, max_friction);
            let ay = (push[0] + friction) / mass;
            next.base_lin_velocity = [vx + dt * ax, vy + dt * ay];

            let support = (-rot_stiffness * phi - rot_damping * omega + leg_torque)
                .clamp(-contact.support_torque_limit, contact.support_torque_limit);
            let tip = mass * g * params.stance_height * phi.sin();
            let feet = params.stance_height * friction;
            ext_torque = support + tip + feet + push_torque;

            if has_arm {
                let arm_abs = phi + s * match scenario.arm_mode {
                    ArmMode::Locked => scenario.arm_nominal_angle,
                    _ => state.arm_angle,
                };
                arm_gravity = -params.arm_mass * g * params.arm_length / 2.0 * arm_abs.cos();
            }
        }
        Scenario::Turn => {
            // Body-frame (forward u, left v) translational dynamics.
            let [u, v] = state.body_velocity(Scenario::Turn);
            let (push_u, push_v) = (push[0], push[1]);
            let du = (leg_force + push_u - contact.contact_damping * u) / mass + v * omega;
            let max_friction = contact.lateral_friction_coefficient * mass * g;
            let needed = mass * (-v / dt + u * omega) - push_v;
            let friction = needed.clamp(-max_friction, max_friction);
            let dv = (friction + push_v) / mass - u * omega;
            let (u1, v1) = (u + dt * du, v + dt * dv);
            // Rotate back with the heading the velocity was expressed in.
            let (sn, cs) = phi.sin_cos();
            next.base_lin_velocity = [cs * u1 - sn * v1, sn * u1 + cs * v1];

            let support = (leg_torque - rot_damping * omega)
                .clamp(-contact.support_torque_limit, contact.support_torque_limit);
            ext_torque = support + push_torque;
        }
    }

    // Rotational core.
    match scenario.arm_mode {
        ArmMode::NoArm => {
            next.base_ang_velocity = omega + dt * ext_torque / i_body;
            next.arm_angle = state.arm_angle;
            next.arm_ang_velocity = 0.0;
        }
        ArmMode::Locked => {
            next.base_ang_velocity = omega + dt * (ext_torque + arm_gravity) / (i_body + i_arm);
            next.arm_angle = scenario.arm_nominal_angle;
            next.arm_ang_velocity = 0.0;
        }
        ArmMode::Actuated => {
            let body_acc = (ext_torque - s * arm_torque) / i_body;
            let arm_abs_acc = (s * arm_torque + arm_gravity) / i_arm;
            let joint_acc = s * (arm_abs_acc - body_acc);
            next.base_ang_velocity = omega + dt * body_acc;
            next.arm_ang_velocity = state.arm_ang_velocity + dt * joint_acc;
        }
    }

    next.base_angle = phi + dt * next.base_ang_velocity;
    next.base_position = [
        state.base_position[0] + dt * next.base_lin_velocity[0],
        state.base_position[1] + dt * next.base_lin_velocity[1],
    ];
    if scenario.arm_mode == ArmMode::Actuated {
        next.arm_angle = state.arm_angle + dt * next.arm_ang_velocity;
        let (lo, hi) = params.arm_joint_limits;
        if next.arm_angle < lo || next.arm_angle > hi {
            next.arm_angle = next.arm_angle.clamp(lo, hi);
            let momentum = i_body * next.base_ang_velocity
                + i_arm * (next.base_ang_velocity + s * next.arm_ang_velocity);
            next.base_ang_velocity = momentum / (i_body + i_arm);
            next.arm_ang_velocity = 0.0;
        }
    }
    next.time = state.time + dt;

    if !next.is_finite() {
        return Err(SimError::Divergence { state: Box::new(next) });
    }
    Ok(next)
}

/// Reduced-order stand-in for the base touching the ground.
///
/// Stabilize: the roll exceeds the termination angle. Turn: above 0.3 m/s,
/// the sideslip angle between heading and velocity exceeds it.
pub fn is_terminated(state: &SimState, scenario: &ScenarioConfig) -> bool {
    match scenario.scenario {
        Scenario::Stabilize => state.base_angle.abs() > scenario.termination_angle,
        Scenario::Turn => {
            let [u, v] = state.body_velocity(Scenario::Turn);
            u.hypot(v) > 0.3 && v.atan2(u).abs() > scenario.termination_angle
        }
    }
}

/// Nominal pose moving at the commanded forward speed, with uniform noise of
/// half-width `scenario.reset_noise` on every angle and velocity.
pub fn reset<R: Rng + ?Sized>(
    rng: &mut R,
    params: &RobotParams,
    scenario: &ScenarioConfig,
    command: &CommandSample,
) -> SimState {
    let a = scenario.reset_noise;
    let mut noise = || if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
    let base_angle = noise();
    let base_ang_velocity = noise();
    let forward = command.linear_velocity + noise();
    let lateral = noise();
    let (arm_angle, arm_ang_velocity) = match scenario.arm_mode {
        ArmMode::Actuated => {
            let (lo, hi) = params.arm_joint_limits;
            ((scenario.arm_nominal_angle + noise()).clamp(lo, hi), noise())
        }
        _ => (scenario.arm_nominal_angle, 0.0),
    };
    let base_lin_velocity = match scenario.scenario {
        Scenario::Stabilize => [forward, lateral],
        Scenario::Turn => {
            let (s, c) = base_angle.sin_cos();
            [c * forward - s * lateral, s * forward + c * lateral]
        }
    };
    SimState {
        base_position: [0.0, 0.0],
        base_angle,
        base_lin_velocity,
        base_ang_velocity,
        arm_angle,
        arm_ang_velocity,
        time: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::sample_perturbation;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn free(scenario: Scenario) -> ScenarioConfig {
        ScenarioConfig::free_floating(scenario)
    }

    #[test]
    fn zero_input_fixed_point() {
        let cfg = free(Scenario::Stabilize);
        let p = RobotParams::default_for(Scenario::Stabilize);
        let s0 = SimState { arm_angle: cfg.arm_nominal_angle, ..Default::default() };
        let s1 = step_dynamics(&s0, 0.0, LegWrench::default(), &[], &p, &cfg).unwrap();
        assert_eq!(SimState { time: cfg.dt, ..s0 }, s1);
    }

    #[test]
    fn constant_torque_coupling_matches_inertia_ratio() {
        let cfg = free(Scenario::Stabilize);
        let p = RobotParams::default_for(Scenario::Stabilize);
        let (ia, ib) = derive_inertias(&p, Scenario::Stabilize).unwrap();
        let s0 = SimState { arm_angle: cfg.arm_nominal_angle, ..Default::default() };
        let s1 = step_dynamics(&s0, 2.0, LegWrench::default(), &[], &p, &cfg).unwrap();
        let body_acc = s1.base_ang_velocity / cfg.dt;
        let arm_acc = (s1.base_ang_velocity + s1.arm_ang_velocity) / cfg.dt;
        assert_relative_eq!(body_acc / arm_acc, -ia / ib, max_relative = 1e-12);
        assert_relative_eq!(body_acc / arm_acc, -0.378, max_relative = 1e-9);
    }

    #[test]
    fn torques_are_clamped() {
        let cfg = free(Scenario::Stabilize);
        let p = RobotParams::default_for(Scenario::Stabilize);
        let s0 = SimState { arm_angle: cfg.arm_nominal_angle, ..Default::default() };
        let a = step_dynamics(&s0, p.arm_torque_limit, LegWrench::default(), &[], &p, &cfg).unwrap();
        let b = step_dynamics(&s0, 1e6, LegWrench::default(), &[], &p, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn joint_stop_clamps_and_keeps_momentum() {
        let cfg = free(Scenario::Stabilize);
        let p = RobotParams::default_for(Scenario::Stabilize);
        let mut s = SimState { arm_angle: cfg.arm_nominal_angle, ..Default::default() };
        let l0 = angular_momentum(&s, &p, &cfg);
        for _ in 0..2000 {
            s = step_dynamics(&s, p.arm_torque_limit, LegWrench::default(), &[], &p, &cfg).unwrap();
            assert!(s.arm_angle <= p.arm_joint_limits.1 && s.arm_angle >= p.arm_joint_limits.0);
        }
        assert_eq!(s.arm_angle, p.arm_joint_limits.1);
        assert_eq!(s.arm_ang_velocity, 0.0);
        assert!((angular_momentum(&s, &p, &cfg) - l0).abs() < 1e-9);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = free(Scenario::Stabilize);
        let p = RobotParams::default_for(Scenario::Stabilize);
        let s0 = SimState { base_ang_velocity: f64::INFINITY, ..Default::default() };
        let err = step_dynamics(&s0, 0.0, LegWrench::default(), &[], &p, &cfg).unwrap_err();
        assert!(matches!(err, SimError::Divergence { .. }));
    }

    #[test]
    fn termination_threshold() {
        let cfg = ScenarioConfig::default_for(Scenario::Stabilize);
        let upright = SimState::default();
        assert!(!is_terminated(&upright, &cfg));
        let tipped = SimState { base_angle: cfg.termination_angle + 0.01, ..Default::default() };
        assert!(is_terminated(&tipped, &cfg));
        let tipped = SimState { base_angle: -cfg.termination_angle - 0.01, ..Default::default() };
        assert!(is_terminated(&tipped, &cfg));
    }

    #[test]
    fn turn_sideslip_terminates() {
        let cfg = ScenarioConfig::default_for(Scenario::Turn);
        let skid = SimState { base_lin_velocity: [1.0, 1.0], ..Default::default() };
        assert!(is_terminated(&skid, &cfg));
        let slow = SimState { base_lin_velocity: [0.1, 0.1], ..Default::default() };
        assert!(!is_terminated(&slow, &cfg));
        let straight = SimState { base_lin_velocity: [1.5, 0.1], ..Default::default() };
        assert!(!is_terminated(&straight, &cfg));
    }

    #[test]
    fn oversized_push_on_locked_arm_falls_early() {
        let mut cfg = ScenarioConfig::default_for(Scenario::Stabilize);
        cfg.arm_mode = ArmMode::Locked;
        let p = RobotParams::default_for(Scenario::Stabilize);
        let push = PerturbationEvent {
            force_magnitude: 2000.0,
            direction: [1.0, 0.0],
            offset_from_base: 0.1,
            start_time: 1.0,
            duration: 0.2,
        };
        let mut s = SimState { arm_angle: cfg.arm_nominal_angle, ..Default::default() };
        let mut fell_at = None;
        while s.time < cfg.episode_length {
            s = step_dynamics(&s, 0.0, LegWrench::default(), &[push], &p, &cfg).unwrap();
            if is_terminated(&s, &cfg) {
                fell_at = Some(s.time);
                break;
            }
        }
        let t = fell_at.expect("should fall");
        assert!(t > 1.0 && t < cfg.episode_length);
    }

    #[test]
    fn standing_still_is_stable_under_gravity() {
        for mode in [ArmMode::NoArm, ArmMode::Locked, ArmMode::Actuated] {
            let mut cfg = ScenarioConfig::default_for(Scenario::Stabilize);
            cfg.arm_mode = mode;
            let p = RobotParams::default_for(Scenario::Stabilize);
            let mut s = SimState { base_angle: 0.05, arm_angle: cfg.arm_nominal_angle, ..Default::default() };
            for _ in 0..2000 {
                // hold the arm upright with a PD joint controller
                let tau = -30.0 * (s.arm_angle - cfg.arm_nominal_angle + s.base_angle) - 3.0 * s.arm_ang_velocity;
                s = step_dynamics(&s, tau, LegWrench::default(), &[], &p, &cfg).unwrap();
            }
            assert!(s.base_angle.abs() < 0.02, "{mode:?}: {}", s.base_angle);
        }
    }

    #[test]
    fn reset_is_deterministic_and_exact_without_noise() {
        let p = RobotParams::default_for(Scenario::Stabilize);
        let mut cfg = ScenarioConfig::default_for(Scenario::Stabilize);
        let cmd = CommandSample { linear_velocity: 0.3, yaw_rate: 0.0 };
        let a = reset(&mut ChaCha8Rng::seed_from_u64(3), &p, &cfg, &cmd);
        let b = reset(&mut ChaCha8Rng::seed_from_u64(3), &p, &cfg, &cmd);
        assert_eq!(a, b);
        cfg.reset_noise = 0.0;
        let c = reset(&mut ChaCha8Rng::seed_from_u64(3), &p, &cfg, &cmd);
        assert_eq!(
            c,
            SimState {
                base_lin_velocity: [0.3, 0.0],
                arm_angle: cfg.arm_nominal_angle,
                ..Default::default()
            }
        );
    }

    #[test]
    fn reset_spread_matches_noise_bounds() {
        let p = RobotParams::default_for(Scenario::Stabilize);
        let cfg = ScenarioConfig::default_for(Scenario::Stabilize);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..1000)
            .map(|_| reset(&mut rng, &p, &cfg, &CommandSample::default()).base_angle)
            .collect();
        let a = cfg.reset_noise;
        assert!(samples.iter().all(|x| x.abs() <= a));
        let mean = samples.iter().sum::<f64>() / 1000.0;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 999.0;
        // Uniform(-a, a): mean 0, variance a^2/3. 1000 samples: sd of mean ~ 0.018 a.
        assert!(mean.abs() < 0.1 * a);
        assert!((var / (a * a / 3.0) - 1.0).abs() < 0.1);
        assert!(samples.iter().cloned().fold(f64::MIN, f64::max) > 0.95 * a);
        assert!(samples.iter().cloned().fold(f64::MAX, f64::min) < -0.95 * a);
    }

    #[test]
    fn sampled_push_changes_roll() {
        let p = RobotParams::default_for(Scenario::Stabilize);
        let cfg = ScenarioConfig::default_for(Scenario::Stabilize);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ev = sample_perturbation(&mut rng, (250.0, 250.0), (0.0, 0.0), 0.2, 1.0).unwrap();
        ev.direction = [1.0, 0.0];
        ev.start_time = 0.0;
        let s0 = SimState { arm_angle: cfg.arm_nominal_angle, ..Default::default() };
        let s1 = step_dynamics(&s0, 0.0, LegWrench::default(), &[ev], &p, &cfg).unwrap();
        assert!(s1.base_ang_velocity < 0.0);
    }
}
