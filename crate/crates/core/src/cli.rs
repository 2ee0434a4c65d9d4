//! `armtail` command line: train, eval, analyze, compare and run.
//!
//! Outputs go under `--out`, else `$ARMTAIL_RUNS_DIR`, else `./runs`. A
//! command never writes into an existing run directory; a rerun gets the
//! first free `-1`, `-2`, ... suffix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{self, TrajectoryRecord};
use crate::config::{config_hash, ExperimentConfig, SCHEMA_VERSION};
use crate::eval::{
    self, evaluate, load_policy, method_dirs, LoadedPolicy, run_method, summarize_methods, table_metrics, Method, MetricKind,
    PolicyCheckpoint, RunMetrics, TrainedPolicy, TrialConfig,
};
use crate::rl::Controller;
use crate::sim::{ArmMode, RobotParams, Scenario};
use crate::staged::{run_pipeline, train_stage, write_curves, StageCheckpoint};

pub const RUNS_DIR_ENV: &str = "ARMTAIL_RUNS_DIR";

#[derive(Debug, Parser)]
#[command(name = "armtail", version, about = "Stage-wise RL for a quadruped with an arm used as a tail")]
pub struct Cli {
    /// Worker threads for rollouts and evaluation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the stage pipeline or one baseline for one seed.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the trial batteries.
    Eval(EvalArgs),
    /// Closed-form and behavioral analyses.
    Analyze(AnalyzeArgs),
    /// Summarize run directories into one table.
    Compare(CompareArgs),
    /// Train and evaluate methods x seeds of an experiment, then summarize.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train only this stage (1-3); stages after the first need --teacher.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub stage: Option<u8>,
    /// Previous-stage checkpoint used as teacher with --stage.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
    /// Train a baseline instead of the pipeline.
    #[arg(long)]
    pub baseline: Option<Method>,
    /// Override the per-stage update counts, e.g. `4,4,4`.
    #[arg(long, value_parser = parse_updates)]
    pub updates: Option<[usize; 3]>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Experiment config supplying robot, physics and protocol (default: scenario defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Push magnitude range `lo:hi`, replacing the default batteries.
    #[arg(long, value_parser = parse_range)]
    pub force_range: Option<(f64, f64)>,
    #[arg(long, value_enum)]
    pub arm_mode: Option<ArmModeArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (default: next to the checkpoint).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArmModeArg {
    Noarm,
    Locked,
    Actuated,
}

impl From<ArmModeArg> for ArmMode {
    fn from(a: ArmModeArg) -> Self {
        match a {
            ArmModeArg::Noarm => ArmMode::NoArm,
            ArmModeArg::Locked => ArmMode::Locked,
            ArmModeArg::Actuated => ArmMode::Actuated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    /// Body/arm angular acceleration ratio, closed form and simulated.
    Coupling,
    /// Center-of-mass shift over the arm angle.
    Com,
    /// OLS of base yaw on arm angle from a CSV with `arm_angle` and `base_yaw` columns.
    Correlation,
    /// Arm-lead lag of a trajectory CSV.
    Lag,
    /// Arm-yaw regression and lags of a trained Turn policy.
    ArmYaw,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, value_enum)]
    pub kind: AnalysisKind,
    /// Experiment config for robot parameters and protocol.
    #[arg(long, alias = "params")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for analysis.json and plot-ready CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Method directories (each holding `{seed}/metrics.json`), or one experiment directory.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Summary CSV path (default: `summary.csv` in the experiment directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated methods (default: all).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Comma-separated seeds (default: the config's).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_parser = parse_updates)]
    pub updates: Option<[usize; 3]>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("`{lo}`: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("`{hi}`: {e}"))?;
    if !(lo >= 0.0 && lo <= hi) {
        return Err(format!("range {lo}:{hi} must satisfy 0 <= lo <= hi"));
    }
    Ok((lo, hi))
}

fn parse_updates(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s.split(',').map(|x| x.trim().parse().map_err(|e| format!("`{x}`: {e}"))).collect::<Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected three update counts, got {}", v.len()))
}

/// Provenance of a run, written before any training starts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub command: String,
    pub method: String,
    pub seed: u64,
    pub stage: Option<u8>,
    pub config_path: String,
    pub config_sha256: String,
    pub schema_version: u32,
    pub crate_version: String,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub created: String,
    pub updates: Vec<usize>,
    pub env_steps_per_update: usize,
    /// Relative to the run directory.
    pub outputs: Vec<String>,
}

fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(|s| UNIX_EPOCH + Duration::from_secs(s))
        .unwrap_or_else(SystemTime::now);
    humantime::format_rfc3339_seconds(now).to_string()
}

pub fn runs_root(out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(RUNS_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// `base`, or the first of `base-1`, `base-2`, ... that does not exist yet.
pub fn fresh_dir(base: &Path) -> Result<PathBuf> {
    let mut candidate = base.to_path_buf();
    let mut k = 0;
    while candidate.exists() {
        k += 1;
        let name = format!("{}-{k}", base.file_name().map(|n| n.to_string_lossy()).unwrap_or_default());
        candidate = base.with_file_name(name);
    }
    fs::create_dir_all(&candidate).with_context(|| format!("creating {}", candidate.display()))?;
    Ok(candidate)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn load_config(path: &Path, updates: Option<[usize; 3]>) -> Result<(ExperimentConfig, String)> {
    let (cfg, text) = ExperimentConfig::load(path)?;
    let cfg = match updates {
        Some(u) => cfg.with_updates(u),
        None => cfg,
    };
    Ok((cfg, text))
}

fn manifest(cfg: &ExperimentConfig, text: &str, path: &Path, command: &str, method: &str, seed: u64) -> RunManifest {
    RunManifest {
        experiment: cfg.experiment.clone(),
        command: command.into(),
        method: method.into(),
        seed,
        stage: None,
        config_path: path.display().to_string(),
        config_sha256: config_hash(text),
        schema_version: SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        created: timestamp(),
        updates: cfg.updates(),
        env_steps_per_update: cfg.setup.steps_per_update(),
        outputs: Vec::new(),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf> {
    let (cfg, text) = load_config(&args.config, args.updates)?;
    let method = args.baseline.unwrap_or(Method::Staged);
    if args.baseline.is_some() && args.stage.is_some() {
        bail!("--stage selects a pipeline stage and cannot be combined with --baseline");
    }
    match (args.stage, &args.teacher) {
        (Some(k), None) if k > 1 => bail!("stage {k} needs --teacher <stage{}_*.ckpt>", k - 1),
        (Some(1), Some(_)) => bail!("stage 1 takes no teacher"),
        (None, Some(_)) => bail!("--teacher only applies with --stage"),
        _ => {}
    }
    let root = runs_root(args.out.as_deref()).join(&cfg.experiment).join(method.name());
    let dir = fresh_dir(&root.join(args.seed.to_string()))?;
    let seed = args.seed;
    let mut m = manifest(&cfg, &text, &args.config, "train", method.name(), seed);
    m.stage = args.stage;
    m.outputs = match (method, args.stage) {
        (Method::Staged, None) => (1..=cfg.stages.len())
            .flat_map(|i| [StageCheckpoint::file_name(i, seed), format!("stage{i}_{seed}_curves.csv")])
            .collect(),
        (Method::Staged, Some(k)) => vec![StageCheckpoint::file_name(k as usize, seed), format!("stage{k}_{seed}_curves.csv")],
        _ => vec!["policy.ckpt".into(), "curves.csv".into()],
    };
    write_json(&dir.join("manifest.json"), &m)?;

    match (method, args.stage) {
        (Method::Staged, None) => {
            run_pipeline(&cfg.setup, &cfg.stages, seed, Some(&dir))?;
        }
        (Method::Staged, Some(k)) => {
            let k = k as usize;
            let spec = cfg.stages.get(k - 1).ok_or_else(|| anyhow!("config has only {} stages", cfg.stages.len()))?;
            let teacher = args.teacher.as_deref().map(StageCheckpoint::load).transpose()?.map(|c| c.agent);
            let out = train_stage(&cfg.setup, k, spec, teacher.as_ref(), None, seed)?;
            out.checkpoint.save(&dir)?;
            write_curves(&dir.join(format!("stage{k}_{seed}_curves.csv")), &out.curves)?;
        }
        (method, _) => {
            let out = run_method(method, &cfg.setup, &cfg.stages, seed)?;
            let arm_mode = cfg.stages.last().map_or(ArmMode::Actuated, |s| s.arm_mode);
            PolicyCheckpoint { method, seed, scenario: cfg.scenario, arm_mode, policy: out.policy }
                .save(&dir.join("policy.ckpt"))?;
            write_curves(&dir.join("curves.csv"), &out.curves)?;
        }
    }
    Ok(dir)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<PathBuf> {
    let LoadedPolicy { policy, arm_mode: ckpt_mode, scenario } = load_policy(&args.checkpoint)?;
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?.0,
        None => ExperimentConfig::default_for(scenario),
    };
    if cfg.scenario != scenario {
        bail!("checkpoint is a {} policy but the config is for {}", scenario.name(), cfg.scenario.name());
    }
    let arm_mode = args.arm_mode.map_or(ckpt_mode, ArmMode::from);
    eval::check_compatible(policy.action_dim(), arm_mode)?;
    let mut settings = cfg.eval.clone();
    if let Some(t) = args.trials {
        settings.trials = t;
    }
    let mut batteries = settings.conditions(scenario, arm_mode, &cfg.setup.randomization);
    if let Some(r) = args.force_range {
        let base = batteries.remove(0);
        batteries = vec![TrialConfig { label: eval::range_label(r), force_range: Some(r), ..base }];
    }
    let (metrics, trials) = evaluate(&policy, &batteries, &cfg.setup.scenario, &cfg.setup.robot, args.seed)?;
    let dir = match &args.out {
        Some(d) => fresh_dir(d)?,
        None => {
            let stem = args.checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let parent = args.checkpoint.parent().unwrap_or(Path::new("."));
            fresh_dir(&parent.join(format!("eval-{stem}-{}", arm_mode.name())))?
        }
    };
    let run = RunMetrics {
        experiment: cfg.experiment.clone(),
        method: args.checkpoint.display().to_string(),
        seed: args.seed,
        env_steps: 0,
        conditions: metrics,
    };
    eval::write_run(&dir, &run, &trials)?;
    for (c, m) in &run.conditions {
        println!(
            "{c}: success {:.4}  ttf {:.4}  v_lin {:.4}  v_ang {:.4}  ({} trials)",
            m.success_rate, m.ttf, m.v_lin_tracking_error, m.v_ang_tracking_error, m.trials
        );
    }
    Ok(dir)
}

fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers().with_context(|| format!("{}: bad header", path.display()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("{}: no `{name}` column", path.display()))
    };
    let (a, y) = (col("arm_angle")?, col("base_yaw")?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| anyhow!("{}: row {}: {e}", path.display(), i + 2))
        };
        out.push((num(a)?, num(y)?));
    }
    Ok(out)
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<serde_json::Value> {
    let cfg = |default: Scenario| -> Result<ExperimentConfig> {
        match &args.config {
            Some(p) => Ok(ExperimentConfig::load(p)?.0),
            None => Ok(ExperimentConfig::default_for(default)),
        }
    };
    let need_input = || args.input.as_deref().ok_or_else(|| anyhow!("--kind {:?} needs --input", args.kind));
    let out_dir = args.out.as_deref().map(fresh_dir).transpose()?;
    let value = match args.kind {
        AnalysisKind::Coupling => {
            let robot = cfg(Scenario::Stabilize)?.setup.robot;
            serde_json::json!({
                "ratio": analysis::accel_coupling_ratio(&robot),
                "simulated": analysis::measure_coupling(&robot, Scenario::Stabilize, robot.arm_torque_limit.clamp(1e-3, 1.0))?,
            })
        }
        AnalysisKind::Com => {
            let robot: RobotParams = cfg(Scenario::Stabilize)?.setup.robot;
            if let Some(d) = &out_dir {
                let mut w = csv::Writer::from_path(d.join("com_shift.csv"))?;
                w.write_record(["theta", "com_shift"])?;
                for k in 0..=180 {
                    let t = -std::f64::consts::PI + k as f64 * std::f64::consts::PI / 90.0;
                    w.write_record([t.to_string(), analysis::com_shift(&robot, t).to_string()])?;
                }
                w.flush()?;
            }
            serde_json::json!({ "max_com_shift": analysis::max_com_shift(&robot) })
        }
        AnalysisKind::Correlation => {
            let pairs = read_pairs(need_input()?)?;
            serde_json::to_value(analysis::correlate_arm_yaw(&pairs)?)?
        }
        AnalysisKind::Lag => {
            let rec = TrajectoryRecord::read_csv(need_input()?)?;
            let max_lag = cfg(Scenario::Turn)?.analysis.max_lag;
            serde_json::to_value(analysis::lag_analysis(&rec, max_lag)?)?
        }
        AnalysisKind::ArmYaw => {
            let path = args.checkpoint.as_deref().ok_or_else(|| anyhow!("--kind arm-yaw needs --checkpoint"))?;
            let LoadedPolicy { policy, arm_mode, .. } = load_policy(path)?;
            if arm_mode != ArmMode::Actuated {
                bail!("{} does not control the arm", path.display());
            }
            let cfg = cfg(Scenario::Turn)?;
            let study = analysis::arm_yaw_study(&policy, &cfg.setup.scenario, &cfg.setup.robot, &cfg.analysis, args.seed)?;
            if let Some(d) = &out_dir {
                let mut w = csv::Writer::from_path(d.join("arm_yaw_samples.csv"))?;
                w.write_record(["arm_angle", "base_yaw"])?;
                for (a, y) in &study.samples {
                    w.write_record([a.to_string(), y.to_string()])?;
                }
                w.flush()?;
                let p = &cfg.analysis;
                let rec = analysis::record_yaw_step(
                    &policy,
                    &cfg.setup.scenario,
                    &cfg.setup.robot,
                    p.speed,
                    p.yaw_range.1,
                    p.step_time,
                    p.duration,
                    args.seed,
                )?;
                rec.write_csv(&d.join("trajectory.csv"))?;
            }
            serde_json::to_value(&study)?
        }
    };
    if let Some(d) = &out_dir {
        write_json(&d.join("analysis.json"), &value)?;
    }
    Ok(value)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<PathBuf> {
    let (dirs, default_out) = match args.dirs.as_slice() {
        [one] if !method_dirs(one)?.is_empty() => (method_dirs(one)?, Some(one.join("summary.csv"))),
        many => (many.to_vec(), None),
    };
    for d in &dirs {
        if !d.is_dir() {
            bail!("{} is not a directory", d.display());
        }
    }
    let first = dirs
        .first()
        .and_then(|d| fs::read_dir(d).ok())
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok().map(|e| e.path().join("metrics.json")))
        .find(|p| p.is_file())
        .ok_or_else(|| anyhow!("no metrics.json found under {}", dirs[0].display()))?;
    let has_yaw = eval::read_run_metrics(&first)?.conditions.values().any(|m| m.v_ang_tracking_error != 0.0);
    let metrics: Vec<MetricKind> = table_metrics(if has_yaw { Scenario::Turn } else { Scenario::Stabilize });
    let table = summarize_methods(&dirs, &metrics)?;
    let out = args
        .out
        .clone()
        .or(default_out)
        .ok_or_else(|| anyhow!("--out is required when comparing several method directories"))?;
    fs::write(&out, table.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", table.to_text());
    Ok(out)
}

/// Trains and evaluates every method and seed; the staged pipeline's
/// stage-2 policy is also evaluated with the arm locked, as method `locked`.
pub fn cmd_run(args: &RunArgs) -> Result<PathBuf> {
    let (mut cfg, text) = load_config(&args.config, args.updates)?;
    if let Some(t) = args.trials {
        cfg.eval.trials = t;
    }
    let methods = args.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
    let seeds = args.seeds.clone().unwrap_or_else(|| cfg.seeds.clone());
    let exp = fresh_dir(&runs_root(args.out.as_deref()).join(&cfg.experiment))?;
    let mut m = manifest(&cfg, &text, &args.config, "run", "all", seeds.first().copied().unwrap_or(0));
    m.outputs = methods.iter().map(|m| format!("{}/", m.name())).chain(["summary.csv".to_string()]).collect();
    write_json(&exp.join("manifest.json"), &m)?;
    write_json(&exp.join("config.resolved.json"), &cfg)?;
    let sc = &cfg.setup.scenario;
    let robot = &cfg.setup.robot;
    for &method in &methods {
        for &seed in &seeds {
            let dir = exp.join(method.name()).join(seed.to_string());
            fs::create_dir_all(&dir)?;
            let out = run_method(method, &cfg.setup, &cfg.stages, seed)?;
            PolicyCheckpoint { method, seed, scenario: cfg.scenario, arm_mode: ArmMode::Actuated, policy: out.policy.clone() }
                .save(&dir.join("policy.ckpt"))?;
            write_curves(&dir.join("curves.csv"), &out.curves)?;
            let batteries = cfg.eval.conditions(cfg.scenario, ArmMode::Actuated, &cfg.setup.randomization);
            let eval_seed = crate::seed::derive_seed(seed, "eval");
            let (metrics, trials) = evaluate(&out.policy, &batteries, sc, robot, eval_seed)?;
            let run = RunMetrics {
                experiment: cfg.experiment.clone(),
                method: method.name().into(),
                seed,
                env_steps: out.env_steps,
                conditions: metrics,
            };
            eval::write_run(&dir, &run, &trials)?;
            report(&run);
            if let (Method::Staged, Some(locked)) = (method, out.locked_policy) {
                let dir = exp.join("locked").join(seed.to_string());
                fs::create_dir_all(&dir)?;
                let policy = TrainedPolicy::Single { agent: locked };
                PolicyCheckpoint { method, seed, scenario: cfg.scenario, arm_mode: ArmMode::Locked, policy: policy.clone() }
                    .save(&dir.join("policy.ckpt"))?;
                let batteries = cfg.eval.conditions(cfg.scenario, ArmMode::Locked, &cfg.setup.randomization);
                let (metrics, trials) = evaluate(&policy, &batteries, sc, robot, eval_seed)?;
                let run = RunMetrics { method: "locked".into(), conditions: metrics, ..run };
                eval::write_run(&dir, &run, &trials)?;
                report(&run);
            }
        }
    }
    let table = summarize_methods(&method_dirs(&exp)?, &table_metrics(cfg.scenario))?;
    fs::write(exp.join("summary.csv"), table.to_csv())?;
    print!("{}", table.to_text());
    Ok(exp)
}

fn report(run: &RunMetrics) {
    let cells: BTreeMap<_, _> = run
        .conditions
        .iter()
        .map(|(c, m)| (c.clone(), format!("success {:.3} v_lin {:.3} v_ang {:.3}", m.success_rate, m.v_lin_tracking_error, m.v_ang_tracking_error)))
        .collect();
    let cells: Vec<String> = cells.into_iter().map(|(c, v)| format!("[{c}] {v}")).collect();
    eprintln!("{} seed {}: {}", run.method, run.seed, cells.join("  "));
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring threads")?;
    }
    match &cli.command {
        Command::Train(a) => println!("{}", cmd_train(a)?.display()),
        Command::Eval(a) => println!("{}", cmd_eval(a)?.display()),
        Command::Analyze(a) => println!("{}", serde_json::to_string_pretty(&cmd_analyze(a)?)?),
        Command::Compare(a) => eprintln!("wrote {}", cmd_compare(a)?.display()),
        Command::Run(a) => println!("{}", cmd_run(a)?.display()),
    }
    Ok(())
}
