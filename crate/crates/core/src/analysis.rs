//! Closed-form arm/body coupling, and the behavioral analyses of trained
//! turning policies: arm-yaw regression and arm-lead lag.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;
use crate::rl::Controller;
use crate::seed::rng_for;
use crate::sim::{step_dynamics, ArmMode, LegWrench, RobotParams, Scenario, ScenarioConfig, SimError, SimState};
use crate::staged::{scale_action, CommandSchedule, EpisodeDraw, EpisodeSource, Randomization, RewardWeights, StageEnv};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),
    #[error("no command step in the trajectory")]
    NoCommandStep,
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{0}")]
    Io(String),
}

/// Horizontal CoM offset of body plus arm at joint angle `theta`, m.
pub fn com_shift(params: &RobotParams, theta: f64) -> f64 {
    max_com_shift(params) * theta.cos()
}

pub fn max_com_shift(params: &RobotParams) -> f64 {
    params.arm_mass / params.total_mass() * params.arm_length / 2.0
}

/// Body over arm angular acceleration for a rod on a cuboid rolling about
/// its long axis: `-4 M_a l^2 / (M_b (h^2 + w^2))`.
pub fn accel_coupling_ratio(params: &RobotParams) -> f64 {
    -4.0 * params.arm_mass * params.arm_length.powi(2)
        / (params.body_mass * (params.body_height.powi(2) + params.body_width.powi(2)))
}

/// The same ratio measured in the simulator: one free-floating step from
/// rest under a constant arm torque.
pub fn measure_coupling(params: &RobotParams, scenario: Scenario, torque: f64) -> Result<f64, AnalysisError> {
    let cfg = ScenarioConfig { arm_mode: ArmMode::Actuated, ..ScenarioConfig::free_floating(scenario) };
    let s0 = SimState { arm_angle: cfg.arm_nominal_angle, ..Default::default() };
    let s1 = step_dynamics(&s0, torque, LegWrench::default(), &[], params, &cfg)?;
    let body = s1.base_ang_velocity;
    let arm = s1.base_ang_velocity + scenario.arm_axis_sign() * s1.arm_ang_velocity;
    if arm == 0.0 {
        return Err(AnalysisError::DegenerateRegression("arm did not accelerate".into()));
    }
    Ok(body / arm)
}

/// Ordinary least squares fit `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

pub fn ols(samples: &[(f64, f64)]) -> Result<Regression, AnalysisError> {
    let n = samples.len();
    if n < 3 {
        return Err(AnalysisError::DegenerateRegression(format!("need at least 3 samples, got {n}")));
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(AnalysisError::DegenerateRegression("non-finite sample".into()));
    }
    let nf = n as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / nf;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / nf;
    let cxx = samples.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    let cxy = samples.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
    let cyy = samples.iter().map(|(_, y)| (y - my).powi(2)).sum::<f64>();
    if cxx <= 1e-24 * nf * (1.0 + mx * mx) {
        return Err(AnalysisError::DegenerateRegression("arm angle has zero variance".into()));
    }
    let slope = cxy / cxx;
    let r_squared = if cyy == 0.0 { 0.0 } else { (cxy * cxy / (cxx * cyy)).clamp(0.0, 1.0) };
    Ok(Regression { slope, intercept: my - slope * mx, r_squared, samples: n })
}

/// Arm-yaw regression: `x` is the arm angle, `y` the base yaw.
pub fn correlate_arm_yaw(samples: &[(f64, f64)]) -> Result<Regression, AnalysisError> {
    ols(samples)
}

/// One row of a recorded turning trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub time: f64,
    /// Joint angle from nominal, rad.
    pub arm_angle: f64,
    pub arm_velocity: f64,
    /// Normalized arm torque command.
    pub arm_command: f64,
    pub base_yaw: f64,
    pub yaw_rate: f64,
    pub yaw_command: f64,
    pub base_vx: f64,
    pub base_vy: f64,
}

/// Uniformly sampled time series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
}

impl TrajectoryRecord {
    pub fn dt(&self) -> f64 {
        match self.samples.as_slice() {
            [a, b, ..] => b.time - a.time,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |m: String| Err(AnalysisError::Trajectory(m));
        if self.samples.len() < 2 {
            return bad("fewer than two samples".into());
        }
        let dt = self.dt();
        if !(dt > 0.0) {
            return bad(format!("time step {dt} is not positive"));
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            if ((w[1].time - w[0].time) - dt).abs() > 1e-6 * dt.max(1.0) {
                return bad(format!("row {} breaks the uniform spacing of {dt}", i + 2));
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            let v = [s.time, s.arm_angle, s.arm_velocity, s.arm_command, s.base_yaw, s.yaw_rate, s.yaw_command, s.base_vx, s.base_vy];
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("row {} has a non-finite entry", i + 1));
            }
        }
        Ok(())
    }

    /// Index of the first sample whose yaw command differs from the first one.
    pub fn command_step(&self) -> Option<usize> {
        let first = self.samples.first()?.yaw_command;
        self.samples.iter().position(|s| s.yaw_command != first)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), AnalysisError> {
        let io = |e: csv::Error| AnalysisError::Io(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        for s in &self.samples {
            w.serialize(s).map_err(io)?;
        }
        w.flush().map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))
    }

    pub fn read_csv(path: &Path) -> Result<Self, AnalysisError> {
        let io = |e: csv::Error| AnalysisError::Io(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(io)?;
        let samples = r.deserialize().collect::<Result<Vec<TrajectorySample>, _>>().map_err(io)?;
        let rec = Self { samples };
        rec.validate()?;
        Ok(rec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagResult {
    /// Positive when the arm moves before the body, s.
    pub lag: f64,
    /// Correlation at the chosen shift.
    pub correlation: f64,
    pub step_time: f64,
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Shift that best aligns the base yaw rate with the arm velocity.
///
/// For each shift `k` within `max_lag` seconds the Pearson correlation of
/// `arm_velocity[t]` and `yaw_rate[t + k]` is computed over their overlap,
/// starting `max_lag` before the first command step. The shift with the
/// largest absolute correlation wins, so a reaction of either sign counts.
pub fn lag_analysis(record: &TrajectoryRecord, max_lag: f64) -> Result<LagResult, AnalysisError> {
    record.validate()?;
    let step = record.command_step().ok_or(AnalysisError::NoCommandStep)?;
    let dt = record.dt();
    let kmax = (max_lag / dt).round() as isize;
    let start = step.saturating_sub(kmax as usize);
    let arm: Vec<f64> = record.samples[start..].iter().map(|s| s.arm_velocity).collect();
    let yaw: Vec<f64> = record.samples[start..].iter().map(|s| s.yaw_rate).collect();
    let n = arm.len() as isize;
    let mut best: Option<(isize, f64)> = None;
    for k in -kmax..=kmax {
        let (a, y) = if k >= 0 {
            (&arm[..(n - k).max(0) as usize], &yaw[k.min(n) as usize..])
        } else {
            (&arm[(-k).min(n) as usize..], &yaw[..(n + k).max(0) as usize])
        };
        if a.len() < 3 {
            continue;
        }
        let c = pearson(a, y);
        if best.is_none_or(|(_, b)| c.abs() > b.abs()) {
            best = Some((k, c));
        }
    }
    let (k, correlation) = best.ok_or_else(|| AnalysisError::Trajectory("record too short for the lag window".into()))?;
    Ok(LagResult { lag: k as f64 * dt, correlation, step_time: record.samples[step].time })
}

/// Rolls out `policy` on a Turn yaw-step command and records every policy step.
#[allow(clippy::too_many_arguments)]
pub fn record_yaw_step(
    policy: &dyn Controller,
    scenario: &ScenarioConfig,
    robot: &RobotParams,
    speed: f64,
    yaw_rate: f64,
    step_time: f64,
    duration: f64,
    seed: u64,
) -> Result<TrajectoryRecord, AnalysisError> {
    let sc = ScenarioConfig { arm_mode: ArmMode::Actuated, episode_length: duration, ..scenario.clone() };
    let source = EpisodeSource { commands: Default::default(), perturbation: None, randomization: Randomization::none() };
    let mut env = StageEnv::with_source(&sc, robot, RewardWeights::default(), policy.action_dim(), source, rng_for(seed, "probe"));
    let draw = EpisodeDraw {
        schedule: CommandSchedule::yaw_step(speed, yaw_rate, step_time),
        perturbation: None,
        payload: 0.0,
        friction: sc.contact.lateral_friction_coefficient,
    };
    let mut frame = env.reset_with(draw);
    let mut samples = Vec::new();
    let snap = |env: &StageEnv, arm_command: f64| {
        let s = env.state();
        TrajectorySample {
            time: s.time,
            arm_angle: s.arm_angle - sc.arm_nominal_angle,
            arm_velocity: s.arm_ang_velocity,
            arm_command,
            base_yaw: s.base_angle,
            yaw_rate: s.base_ang_velocity,
            yaw_command: env.command().yaw_rate,
            base_vx: s.base_lin_velocity[0],
            base_vy: s.base_lin_velocity[1],
        }
    };
    samples.push(snap(&env, 0.0));
    loop {
        let action = policy.mean_action(&frame)?;
        let (arm_torque, _) = scale_action(&action, robot);
        let (step, _) = env.step_detailed(&action)?;
        samples.push(snap(&env, arm_torque / robot.arm_torque_limit.max(f64::MIN_POSITIVE)));
        if step.terminated || step.truncated {
            break;
        }
        frame = step.frame;
    }
    Ok(TrajectoryRecord { samples })
}

/// Protocol of the arm-yaw study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmYawProtocol {
    pub commands: usize,
    /// m/s
    pub speed: f64,
    /// Magnitude range of the yaw-rate step, rad/s.
    pub yaw_range: (f64, f64),
    /// s
    pub step_time: f64,
    /// Seconds after the step at which (arm angle, yaw) pairs are taken.
    pub sample_offsets: Vec<f64>,
    /// s
    pub duration: f64,
    /// s
    pub max_lag: f64,
}

impl Default for ArmYawProtocol {
    fn default() -> Self {
        Self {
            commands: 10,
            speed: 1.5,
            yaw_range: (0.5, 2.0),
            step_time: 1.0,
            sample_offsets: vec![0.1, 0.2, 0.3],
            duration: 3.0,
            max_lag: 1.0,
        }
    }
}

/// Arm angle against yaw accumulated since the step, and per-command lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmYawStudy {
    pub regression: Regression,
    pub samples: Vec<(f64, f64)>,
    pub lags: Vec<f64>,
    pub median_lag: f64,
}

pub fn arm_yaw_study(
    policy: &dyn Controller,
    scenario: &ScenarioConfig,
    robot: &RobotParams,
    protocol: &ArmYawProtocol,
    seed: u64,
) -> Result<ArmYawStudy, AnalysisError> {
    use rand::Rng;
    let mut rng = rng_for(seed, "arm-yaw");
    let mut samples = Vec::new();
    let mut lags = Vec::new();
    for c in 0..protocol.commands {
        let (lo, hi) = protocol.yaw_range;
        let mag = if lo < hi { rng.random_range(lo..hi) } else { lo };
        let yaw_rate = if rng.random_bool(0.5) { mag } else { -mag };
        let rec = record_yaw_step(
            policy,
            scenario,
            robot,
            protocol.speed,
            yaw_rate,
            protocol.step_time,
            protocol.duration,
            seed.wrapping_add(c as u64),
        )?;
        let step = rec.command_step().ok_or(AnalysisError::NoCommandStep)?;
        let yaw0 = rec.samples[step - 1].base_yaw;
        for off in &protocol.sample_offsets {
            let i = step + (off / rec.dt()).round() as usize;
            if let Some(s) = rec.samples.get(i) {
                samples.push((s.arm_angle, s.base_yaw - yaw0));
            }
        }
        lags.push(lag_analysis(&rec, protocol.max_lag)?.lag);
    }
    let regression = correlate_arm_yaw(&samples)?;
    let mut sorted = lags.clone();
    sorted.sort_by(f64::total_cmp);
    let median_lag = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    Ok(ArmYawStudy { regression, samples, lags, median_lag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(ma: f64, mb: f64, l: f64, h: f64, w: f64) -> RobotParams {
        RobotParams {
            arm_mass: ma,
            body_mass: mb,
            arm_length: l,
            body_height: h,
            body_width: w,
            ..RobotParams::default_for(Scenario::Stabilize)
        }
    }

    #[test]
    fn com_shift_examples() {
        let p = params(1.0, 3.0, 1.0, 0.2, 0.4);
        assert_eq!(com_shift(&p, 0.0), 0.125);
        assert!(com_shift(&p, std::f64::consts::FRAC_PI_2).abs() < 1e-16);
        assert!((com_shift(&RobotParams::default_for(Scenario::Stabilize), 0.0) - 0.022).abs() < 1e-12);
        for k in 0..50 {
            let t = k as f64 * 0.1;
            assert_eq!(com_shift(&p, t), com_shift(&p, -t));
            assert!(com_shift(&p, t).abs() <= max_com_shift(&p));
        }
    }

    #[test]
    fn coupling_examples_and_scaling() {
        assert!((accel_coupling_ratio(&params(1.0, 12.0, 1.0, 1.0, 1.0)) + 1.0 / 6.0).abs() < 1e-15);
        assert!((accel_coupling_ratio(&RobotParams::default_for(Scenario::Stabilize)) + 0.378).abs() < 1e-12);
        let base = accel_coupling_ratio(&params(1.0, 12.0, 0.5, 0.2, 0.4));
        assert!((accel_coupling_ratio(&params(3.0, 12.0, 0.5, 0.2, 0.4)) - 3.0 * base).abs() < 1e-12);
        assert!((accel_coupling_ratio(&params(1.0, 12.0, 1.5, 0.2, 0.4)) - 9.0 * base).abs() < 1e-12);
    }

    #[test]
    fn simulated_coupling_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let p = params(
                rng.random_range(0.2..3.0),
                rng.random_range(5.0..20.0),
                rng.random_range(0.2..0.8),
                rng.random_range(0.1..0.4),
                rng.random_range(0.2..0.5),
            );
            let measured = measure_coupling(&p, Scenario::Stabilize, 2.0).unwrap();
            let expected = accel_coupling_ratio(&p);
            assert!(((measured - expected) / expected).abs() < 1e-9);
        }
    }

    fn two_pass(samples: &[(f64, f64)]) -> (f64, f64, f64) {
        let n = samples.len() as f64;
        let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let cov = samples.iter().map(|s| (s.0 - mx) * (s.1 - my)).sum::<f64>() / (n - 1.0);
        let vx = samples.iter().map(|s| (s.0 - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = samples.iter().map(|s| (s.1 - my).powi(2)).sum::<f64>() / (n - 1.0);
        let slope = cov / vx;
        (slope, my - slope * mx, cov * cov / (vx * vy))
    }

    #[test]
    fn ols_matches_two_pass_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.random_range(3..40);
            let s: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let x = rng.random_range(-2.0..2.0);
                    (x, 0.7 * x + rng.random_range(-1.0..1.0))
                })
                .collect();
            let r = ols(&s).unwrap();
            let (slope, intercept, r2) = two_pass(&s);
            assert!((r.slope - slope).abs() < 1e-10);
            assert!((r.intercept - intercept).abs() < 1e-10);
            assert!((r.r_squared - r2).abs() < 1e-10);
        }
    }

    #[test]
    fn regression_edge_cases() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64 - 1.0)).collect();
        let r = correlate_arm_yaw(&line).unwrap();
        assert!((r.r_squared - 1.0).abs() < 1e-12 && (r.slope - 2.0).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0)).collect();
        assert_eq!(correlate_arm_yaw(&flat).unwrap().r_squared, 0.0);
        let vertical: Vec<(f64, f64)> = (0..10).map(|i| (1.0, i as f64)).collect();
        assert!(matches!(correlate_arm_yaw(&vertical), Err(AnalysisError::DegenerateRegression(_))));
        assert!(correlate_arm_yaw(&line[..2]).is_err());
    }

    fn synthetic(shift: usize, dt: f64) -> TrajectoryRecord {
        let n = 600;
        let bump = |t: f64| (-(t - 1.5).powi(2) / 0.02).exp() + 0.4 * (-(t - 2.2).powi(2) / 0.05).exp();
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                TrajectorySample {
                    time: t,
                    arm_velocity: bump(t),
                    yaw_rate: if i >= shift { bump(t - shift as f64 * dt) } else { 0.0 },
                    yaw_command: if t >= 1.0 { 1.0 } else { 0.0 },
                    ..Default::default()
                }
            })
            .collect();
        TrajectoryRecord { samples }
    }

    #[test]
    fn lag_recovers_known_shift() {
        let dt = 0.01;
        for k in [0usize, 7, 25] {
            let r = lag_analysis(&synthetic(k, dt), 1.0).unwrap();
            assert!((r.lag - k as f64 * dt).abs() < 1e-12, "shift {k}: {}", r.lag);
            assert!((r.step_time - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lag_needs_a_command_step() {
        let mut rec = synthetic(3, 0.01);
        rec.samples.iter_mut().for_each(|s| s.yaw_command = 0.5);
        assert!(matches!(lag_analysis(&rec, 1.0), Err(AnalysisError::NoCommandStep)));
        rec.samples[5].time += 0.003;
        assert!(matches!(rec.validate(), Err(AnalysisError::Trajectory(_))));
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rec = synthetic(4, 0.02);
        rec.write_csv(&path).unwrap();
        assert_eq!(TrajectoryRecord::read_csv(&path).unwrap(), rec);
    }
}
