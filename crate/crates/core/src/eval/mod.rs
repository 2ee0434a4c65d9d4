//! Seeded evaluation batteries, the baseline methods and comparison tables.
//!
//! Results are laid out as `{root}/{experiment}/{method}/{seed}/metrics.json`
//! and `trials.csv`, with the comparison in `{root}/{experiment}/summary.csv`.

mod baselines;
mod table;
mod trials;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{run_method, FixedLegs, Method, MethodOutcome, TrainedPolicy};
pub use table::{compare_table, CompareTable, MetricKind};
pub use trials::{check_compatible, run_trial, run_trials, EvalCommands, MetricSummary, Metrics, TrialConfig, TrialRecord};

use crate::nn::NnError;
use crate::rl::Controller;
use crate::sim::{ArmMode, RobotParams, Scenario, ScenarioConfig, SimError};
use crate::staged::{Randomization, StageError, StageSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation: {0}")]
    Config(String),
    #[error("a policy with {action_dim} actions cannot run with arm mode `{}`", arm_mode.name())]
    Incompatible { action_dim: usize, arm_mode: ArmMode },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Stage(#[from] StageError),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}

impl From<crate::rl::RlError> for EvalError {
    fn from(e: crate::rl::RlError) -> Self {
        EvalError::Stage(StageError::Rl(e))
    }
}

/// Evaluation protocol of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub trials: usize,
    /// s
    pub episode_length: f64,
    /// In-distribution push range (Stabilize).
    pub train_force_range: (f64, f64),
    /// Out-of-distribution push range (Stabilize).
    pub ood_force_range: (f64, f64),
    pub offset_range: (f64, f64),
    pub push_duration: f64,
    /// Forward speed of the walking half of Stabilize trials, m/s.
    pub stand_speed: f64,
    /// Forward speeds of the Turn conditions, m/s.
    pub turn_speeds: Vec<f64>,
    /// rad/s
    pub yaw_rates: Vec<f64>,
    /// s
    pub yaw_step_time: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            trials: 500,
            episode_length: 20.0,
            train_force_range: (200.0, 300.0),
            ood_force_range: (300.0, 400.0),
            offset_range: (-0.12, 0.12),
            push_duration: 0.2,
            stand_speed: 0.3,
            turn_speeds: vec![1.0, 1.25, 1.5],
            yaw_rates: vec![0.5, 2.0],
            yaw_step_time: 1.0,
        }
    }
}

impl EvalSettings {
    /// Named trial batteries: push ranges for Stabilize, speeds for Turn.
    pub fn conditions(&self, scenario: Scenario, arm_mode: ArmMode, randomization: &Randomization) -> Vec<TrialConfig> {
        let base = |label: String, commands: EvalCommands, force_range: Option<(f64, f64)>| TrialConfig {
            label,
            trials: self.trials,
            episode_length: self.episode_length,
            commands,
            force_range,
            offset_range: self.offset_range,
            push_duration: self.push_duration,
            arm_mode,
            randomization: randomization.clone(),
        };
        match scenario {
            Scenario::Stabilize => [self.train_force_range, self.ood_force_range]
                .into_iter()
                .map(|r| base(range_label(r), EvalCommands::StandOrWalk { speed: self.stand_speed }, Some(r)))
                .collect(),
            Scenario::Turn => self
                .turn_speeds
                .iter()
                .map(|&speed| {
                    let commands = EvalCommands::YawStep {
                        speed,
                        yaw_rates: self.yaw_rates.clone(),
                        step_time: self.yaw_step_time,
                    };
                    base(format!("{speed}"), commands, None)
                })
                .collect(),
        }
    }
}

pub fn range_label((lo, hi): (f64, f64)) -> String {
    format!("{lo}-{hi}")
}

/// Fails if any training stage pushes harder than the lower end of the
/// out-of-distribution range.
pub fn check_out_of_distribution(stages: &[StageSpec], ood: (f64, f64)) -> Result<(), EvalError> {
    for (i, s) in stages.iter().enumerate() {
        if let Some(p) = &s.perturbation {
            if p.force_range.1 > ood.0 {
                return Err(EvalError::Config(format!(
                    "stage {} trains with pushes up to {}, inside the held-out range {}",
                    i + 1,
                    p.force_range.1,
                    range_label(ood)
                )));
            }
        }
    }
    Ok(())
}

/// `metrics.json` of one method and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub experiment: String,
    pub method: String,
    pub seed: u64,
    pub env_steps: usize,
    pub conditions: BTreeMap<String, Metrics>,
}

/// Evaluates `policy` on every battery.
pub fn evaluate(
    policy: &(dyn Controller + Sync),
    batteries: &[TrialConfig],
    scenario: &ScenarioConfig,
    robot: &RobotParams,
    seed: u64,
) -> Result<(BTreeMap<String, Metrics>, Vec<TrialRecord>), EvalError> {
    let mut metrics = BTreeMap::new();
    let mut records = Vec::new();
    for cfg in batteries {
        let (m, r) = run_trials(policy, cfg, scenario, robot, seed)?;
        metrics.insert(cfg.label.clone(), m);
        records.extend(r);
    }
    Ok((metrics, records))
}

fn io<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> EvalError + '_ {
    move |e| EvalError::Io(format!("{}: {e}", path.display()))
}

/// Writes `metrics.json` and `trials.csv` into `dir`.
pub fn write_run(dir: &Path, metrics: &RunMetrics, trials: &[TrialRecord]) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mp = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(metrics).map_err(io(&mp))?;
    fs::write(&mp, text).map_err(io(&mp))?;
    let tp = dir.join("trials.csv");
    let mut w = csv::Writer::from_path(&tp).map_err(io(&tp))?;
    for t in trials {
        w.serialize(t).map_err(io(&tp))?;
    }
    w.flush().map_err(io(&tp))?;
    Ok(())
}

pub fn read_run_metrics(path: &Path) -> Result<RunMetrics, EvalError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(io(path))
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>, EvalError> {
    let mut r = csv::Reader::from_path(path).map_err(io(path))?;
    r.deserialize().collect::<Result<Vec<TrialRecord>, _>>().map_err(io(path))
}

/// Method directories under an experiment directory: every subdirectory
/// holding `{seed}/metrics.json`.
pub fn method_dirs(experiment_dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut out = Vec::new();
    for entry in sorted_entries(experiment_dir)? {
        if entry.is_dir() && sorted_entries(&entry)?.iter().any(|s| s.join("metrics.json").is_file()) {
            out.push(entry);
        }
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut v = fs::read_dir(dir)
        .map_err(io(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io(dir))?;
    v.sort();
    Ok(v)
}

/// One row per method directory (mean and std over its seed directories),
/// with the conditions of the first method.
pub fn summarize_methods(dirs: &[PathBuf], metrics: &[MetricKind]) -> Result<CompareTable, EvalError> {
    let mut labels = Vec::new();
    let mut runs_by_method = Vec::new();
    for d in dirs {
        let runs = sorted_entries(d)?
            .into_iter()
            .map(|s| s.join("metrics.json"))
            .filter(|p| p.is_file())
            .map(|p| read_run_metrics(&p))
            .collect::<Result<Vec<_>, _>>()?;
        if runs.is_empty() {
            return Err(EvalError::Io(format!("{}: no {{seed}}/metrics.json found", d.display())));
        }
        labels.push(d.file_name().map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().into_owned()));
        runs_by_method.push(runs);
    }
    let conditions: Vec<String> =
        runs_by_method.first().map(|runs| runs[0].conditions.keys().cloned().collect()).unwrap_or_default();
    let mut sets = Vec::new();
    for (label, runs) in labels.iter().zip(&runs_by_method) {
        let mut row = Vec::new();
        for c in &conditions {
            let per_seed = runs
                .iter()
                .map(|r| r.conditions.get(c).copied().ok_or_else(|| EvalError::Parse(format!("{label} lacks condition {c}"))))
                .collect::<Result<Vec<_>, _>>()?;
            row.push(MetricSummary::from_seeds(&per_seed));
        }
        sets.push(row);
    }
    compare_table(&sets, &labels, &conditions, metrics)
}

/// [`summarize_methods`] over every method directory of an experiment.
pub fn summarize_dir(experiment_dir: &Path, metrics: &[MetricKind]) -> Result<CompareTable, EvalError> {
    summarize_methods(&method_dirs(experiment_dir)?, metrics)
}

/// A trained policy with what is needed to evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub method: Method,
    pub seed: u64,
    pub scenario: Scenario,
    pub arm_mode: ArmMode,
    pub policy: TrainedPolicy,
}

impl PolicyCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        crate::nn::save_json(path, self).map_err(|e| EvalError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        crate::nn::load_json(path).map_err(|e| EvalError::Io(e.to_string()))
    }
}

/// A policy read from disk with the arm mode and scenario it was trained for.
#[derive(Debug, Clone)]
pub struct LoadedPolicy {
    pub policy: TrainedPolicy,
    pub arm_mode: ArmMode,
    pub scenario: Scenario,
}

/// Loads either a pipeline stage checkpoint or a policy checkpoint.
pub fn load_policy(path: &Path) -> Result<LoadedPolicy, EvalError> {
    if let Ok(p) = PolicyCheckpoint::load(path) {
        return Ok(LoadedPolicy { policy: p.policy, arm_mode: p.arm_mode, scenario: p.scenario });
    }
    let ck = crate::staged::StageCheckpoint::load(path)
        .map_err(|e| EvalError::Io(format!("{} is not a readable checkpoint: {e}", path.display())))?;
    Ok(LoadedPolicy { policy: TrainedPolicy::Single { agent: ck.agent }, arm_mode: ck.spec.arm_mode, scenario: ck.scenario })
}

/// Default table columns for a scenario.
pub fn table_metrics(scenario: Scenario) -> Vec<MetricKind> {
    match scenario {
        Scenario::Stabilize => vec![MetricKind::Success, MetricKind::Ttf, MetricKind::VLin],
        Scenario::Turn => vec![MetricKind::Success, MetricKind::Ttf, MetricKind::VLin, MetricKind::VAng],
    }
}
