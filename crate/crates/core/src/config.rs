//! Experiment configuration files (TOML).
//!
//! A file names a scenario and overrides only what differs from that
//! scenario's defaults:
//!
//! ```toml
//! schema_version = 1
//! experiment = "stabilize"
//! scenario = "stabilize"
//! seeds = [0, 1, 2, 3, 4]
//! updates = [60, 60, 60]
//!
//! [robot]
//! arm_torque_limit = 8.0
//!
//! [ppo]
//! num_envs = 16
//! ```
//!
//! Errors carry the line of the offending entry.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::ArmYawProtocol;
use crate::eval::{check_out_of_distribution, EvalSettings};
use crate::rl::PpoConfig;
use crate::sim::{RobotParams, Scenario, ScenarioConfig};
use crate::staged::{validate_stages, AnnealSchedule, NetworkConfig, Randomization, StageSpec, TrainSetup};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    AtLine { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotOverrides {
    arm_mass: Option<f64>,
    body_mass: Option<f64>,
    arm_length: Option<f64>,
    body_height: Option<f64>,
    body_width: Option<f64>,
    body_length: Option<f64>,
    stance_height: Option<f64>,
    arm_torque_limit: Option<f64>,
    arm_joint_limits: Option<(f64, f64)>,
    leg_proxy_force_limit: Option<f64>,
    leg_proxy_torque_limit: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimOverrides {
    gravity: Option<f64>,
    dt: Option<f64>,
    control_decimation: Option<usize>,
    support_torque_limit: Option<f64>,
    lateral_friction_coefficient: Option<f64>,
    contact_spring: Option<f64>,
    contact_damping: Option<f64>,
    termination_angle: Option<f64>,
    force_scale: Option<f64>,
    arm_nominal_angle: Option<f64>,
    reset_noise: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomizationOverrides {
    payload_range: Option<(f64, f64)>,
    friction_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    experiment: String,
    scenario: Scenario,
    seeds: Option<Vec<u64>>,
    updates: Option<[usize; 3]>,
    #[serde(default)]
    robot: RobotOverrides,
    #[serde(default)]
    sim: SimOverrides,
    #[serde(default)]
    randomization: RandomizationOverrides,
    /// Merged onto [`default_ppo`].
    ppo: Option<toml::Table>,
    network: Option<NetworkConfig>,
    /// Replaces the schedule of every stage after the first.
    anneal: Option<AnnealSchedule>,
    /// Replaces the default stage decomposition entirely.
    stages: Option<Vec<StageSpec>>,
    eval: Option<EvalSettings>,
    analysis: Option<ArmYawProtocol>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    pub setup: TrainSetup,
    pub stages: Vec<StageSpec>,
    pub eval: EvalSettings,
    pub analysis: ArmYawProtocol,
}

/// PPO settings sized for a single machine; the library default targets
/// larger batches.
pub fn default_ppo() -> PpoConfig {
    PpoConfig { num_envs: 16, horizon: 128, minibatch_size: 512, learning_rate: 1e-3, ..Default::default() }
}

pub const DEFAULT_UPDATES: [usize; 3] = [60, 60, 60];

impl ExperimentConfig {
    pub fn default_for(scenario: Scenario) -> Self {
        Self {
            experiment: scenario.name().to_string(),
            scenario,
            seeds: vec![0, 1, 2, 3, 4],
            setup: TrainSetup {
                scenario: ScenarioConfig::default_for(scenario),
                robot: RobotParams::default_for(scenario),
                ppo: default_ppo(),
                network: NetworkConfig::default(),
                randomization: Randomization::default_for(scenario),
            },
            stages: StageSpec::default_pipeline(scenario, DEFAULT_UPDATES),
            eval: EvalSettings::default(),
            analysis: ArmYawProtocol::default(),
        }
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let cfg = Self::parse(&text, &path.display().to_string())?;
        Ok((cfg, text))
    }

    /// Parses and validates `text`; `origin` names the source in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| match e.span() {
            Some(span) => ConfigError::AtLine {
                path: origin.into(),
                line: line_of_offset(text, span.start),
                message: e.message().to_string(),
            },
            None => ConfigError::Invalid { path: origin.into(), message: e.message().to_string() },
        })?;
        let at = |section: Option<&str>, key: &str, message: String| {
            let line = find_key(text, section, key).or_else(|| section.and_then(|s| find_section(text, s)));
            match line {
                Some(line) => ConfigError::AtLine { path: origin.into(), line, message },
                None => ConfigError::Invalid { path: origin.into(), message },
            }
        };
        // Domain errors mention the field; anchor on the first one present in the section.
        let in_section = |section: &str, message: String| {
            let key = message
                .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                .find(|w| !w.is_empty() && find_key(text, Some(section), w).is_some())
                .unwrap_or("")
                .to_string();
            at(Some(section), &key, message)
        };
        if raw.schema_version != SCHEMA_VERSION {
            return Err(at(
                None,
                "schema_version",
                format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", raw.schema_version),
            ));
        }
        let mut cfg = Self::default_for(raw.scenario);
        cfg.experiment = raw.experiment;
        if let Some(s) = raw.seeds {
            if s.is_empty() {
                return Err(at(None, "seeds", "at least one seed is required".into()));
            }
            cfg.seeds = s;
        }

        let r = raw.robot;
        let robot = &mut cfg.setup.robot;
        macro_rules! set {
            ($dst:expr, $src:expr, $($f:ident),*) => { $( if let Some(v) = $src.$f { $dst.$f = v; } )* };
        }
        set!(robot, r, arm_mass, body_mass, arm_length, body_height, body_width, body_length, stance_height,
             arm_torque_limit, arm_joint_limits, leg_proxy_force_limit, leg_proxy_torque_limit);
        robot.validate().map_err(|e| in_section("robot", e.to_string()))?;

        let s = raw.sim;
        let sc = &mut cfg.setup.scenario;
        set!(sc, s, gravity, dt, control_decimation, termination_angle, force_scale, arm_nominal_angle, reset_noise);
        set!(sc.contact, s, support_torque_limit, lateral_friction_coefficient, contact_spring, contact_damping);
        sc.validate().map_err(|e| in_section("sim", e.to_string()))?;

        let rz = raw.randomization;
        if let Some(p) = rz.payload_range {
            cfg.setup.randomization.payload_range = p;
        }
        if let Some(f) = rz.friction_range {
            cfg.setup.randomization.friction_range = Some(f);
        }
        let (plo, phi) = cfg.setup.randomization.payload_range;
        if !(plo <= phi) || cfg.setup.robot.body_mass + plo <= 0.0 {
            return Err(at(Some("randomization"), "payload_range", format!("invalid payload range ({plo}, {phi})")));
        }
        if let Some((lo, hi)) = cfg.setup.randomization.friction_range {
            if !(0.0 <= lo && lo <= hi) {
                return Err(at(Some("randomization"), "friction_range", format!("invalid friction range ({lo}, {hi})")));
            }
        }

        if let Some(over) = raw.ppo {
            let mut table = toml::Table::try_from(default_ppo()).expect("PpoConfig serializes");
            table.extend(over);
            let p: PpoConfig = table.try_into().map_err(|e: toml::de::Error| in_section("ppo", e.message().to_string()))?;
            p.validate().map_err(|e| in_section("ppo", e.to_string()))?;
            cfg.setup.ppo = p;
        }
        if let Some(n) = raw.network {
            if n.hidden.is_empty() || n.critic_hidden.is_empty() || n.hidden.iter().chain(&n.critic_hidden).any(|w| *w == 0) {
                return Err(at(Some("network"), "hidden", "hidden layers must be non-empty with positive widths".into()));
            }
            cfg.setup.network = n;
        }

        let updates = raw.updates.unwrap_or(DEFAULT_UPDATES);
        cfg.stages = match raw.stages {
            Some(stages) => {
                if raw.updates.is_some() {
                    return Err(at(None, "updates", "`updates` cannot be combined with explicit [[stages]]".into()));
                }
                stages
            }
            None => StageSpec::default_pipeline(raw.scenario, updates),
        };
        if let Some(a) = raw.anneal {
            a.validate().map_err(|e| in_section("anneal", e.to_string()))?;
            for s in cfg.stages.iter_mut().skip(1) {
                s.anneal = Some(a.clone());
            }
        }
        validate_stages(&cfg.stages).map_err(|e| at(Some("stages"), "observation", e.to_string()))?;

        if let Some(e) = raw.eval {
            if e.trials == 0 {
                return Err(at(Some("eval"), "trials", "trials must be positive".into()));
            }
            cfg.eval = e;
        }
        check_out_of_distribution(&cfg.stages, cfg.eval.ood_force_range)
            .map_err(|e| at(Some("eval"), "ood_force_range", e.to_string()))?;
        if let Some(a) = raw.analysis {
            if a.commands == 0 || a.sample_offsets.is_empty() {
                return Err(at(Some("analysis"), "commands", "the arm-yaw study needs commands and sample offsets".into()));
            }
            cfg.analysis = a;
        }
        Ok(cfg)
    }

    /// Scales every stage's update count (at least one update each).
    pub fn with_updates(mut self, updates: [usize; 3]) -> Self {
        for (s, u) in self.stages.iter_mut().zip(updates) {
            s.updates = u;
        }
        self
    }

    pub fn updates(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.updates).collect()
    }
}

/// Hex SHA-256 of the configuration text.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn section_header(line: &str) -> Option<&str> {
    let t = line.trim();
    let t = t.strip_prefix("[[").and_then(|t| t.strip_suffix("]]")).or_else(|| t.strip_prefix('[').and_then(|t| t.strip_suffix(']')))?;
    Some(t.trim())
}

/// Line of `key = ...` inside `[section]` (top level when `None`).
fn find_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    if key.is_empty() {
        return None;
    }
    let mut current: Option<&str> = None;
    for (i, line) in text.lines().enumerate() {
        if let Some(h) = section_header(line) {
            current = Some(h);
        } else if current == section && line.split_once('=').is_some_and(|(k, _)| k.trim() == key) {
            return Some(i + 1);
        }
    }
    None
}

fn find_section(text: &str, section: &str) -> Option<usize> {
    text.lines().position(|l| section_header(l) == Some(section)).map(|i| i + 1)
}


#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\nexperiment = \"t\"\nscenario = \"turn\"\n";

    #[test]
    fn minimal_file_takes_scenario_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL, "m.toml").unwrap();
        let mut expected = ExperimentConfig::default_for(Scenario::Turn);
        expected.experiment = "t".into();
        assert_eq!(cfg, expected);
    }

    #[test]
    fn partial_tables_merge() {
        let text = format!(
            "{MINIMAL}updates = [3, 4, 5]\n[robot]\narm_torque_limit = 5.0\n[sim]\nforce_scale = 0.3\n[ppo]\nnum_envs = 4\n[anneal]\nlambda_max = 2.0\n"
        );
        let cfg = ExperimentConfig::parse(&text, "m.toml").unwrap();
        assert_eq!(cfg.setup.robot.arm_torque_limit, 5.0);
        assert_eq!(cfg.setup.robot.body_mass, 12.0);
        assert_eq!(cfg.setup.scenario.force_scale, 0.3);
        assert_eq!(cfg.setup.ppo.num_envs, 4);
        assert_eq!(cfg.setup.ppo.horizon, default_ppo().horizon);
        assert_eq!(cfg.updates(), vec![3, 4, 5]);
        assert_eq!(cfg.stages[2].anneal.as_ref().unwrap().lambda_max, 2.0);
    }

    fn line_of(err: ConfigError) -> usize {
        match err {
            ConfigError::AtLine { line, .. } => line,
            e => panic!("no line in {e}"),
        }
    }

    #[test]
    fn errors_point_at_lines() {
        let unknown = format!("{MINIMAL}[robot]\narm_mas = 2.0\n");
        assert_eq!(line_of(ExperimentConfig::parse(&unknown, "x").unwrap_err()), 5);
        let bad_type = format!("{MINIMAL}seeds = \"one\"\n");
        assert_eq!(line_of(ExperimentConfig::parse(&bad_type, "x").unwrap_err()), 4);
        let bad_value = format!("{MINIMAL}[robot]\nbody_mass = 1.0\narm_length = -1.0\n");
        let err = ExperimentConfig::parse(&bad_value, "x").unwrap_err();
        assert!(err.to_string().contains("arm_length"), "{err}");
        assert_eq!(line_of(err), 6);
        let version = "schema_version = 7\nexperiment = \"t\"\nscenario = \"turn\"\n";
        assert_eq!(line_of(ExperimentConfig::parse(version, "x").unwrap_err()), 1);
        let ood = "schema_version = 1\nexperiment = \"t\"\nscenario = \"stabilize\"\n[eval]\nood_force_range = [250.0, 400.0]\n";
        assert_eq!(line_of(ExperimentConfig::parse(ood, "x").unwrap_err()), 5);
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["stabilize.toml", "turn.toml", "quick.toml"] {
            let (cfg, text) = ExperimentConfig::load(&dir.join(name)).unwrap();
            assert_eq!(config_hash(&text).len(), 64);
            assert_eq!(cfg.stages.len(), 3);
        }
    }
}
