//! Python bindings: closed-form analyses, GAE, checkpoint inference,
//! evaluation and experiment runs.

use std::path::PathBuf;

use armtail::analysis;
use armtail::cli::{cmd_run, RunArgs};
use armtail::config::ExperimentConfig;
use armtail::eval::{self, load_policy, LoadedPolicy, Method};
use armtail::rl::Controller;
use armtail::sim::{ArmMode, RobotParams, Scenario};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(format!("{e:#}"))
}

fn scenario(name: &str) -> PyResult<Scenario> {
    name.parse().map_err(PyValueError::new_err)
}

fn robot(name: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<RobotParams> {
    let mut p = RobotParams::default_for(scenario(name)?);
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let v: f64 = v.extract()?;
            match key.as_str() {
                "arm_mass" => p.arm_mass = v,
                "body_mass" => p.body_mass = v,
                "arm_length" => p.arm_length = v,
                "body_height" => p.body_height = v,
                "body_width" => p.body_width = v,
                "body_length" => p.body_length = v,
                other => return Err(PyValueError::new_err(format!("unknown robot parameter `{other}`"))),
            }
        }
    }
    p.validate().map_err(value_err)?;
    Ok(p)
}

/// Closed-form body/arm angular acceleration ratio.
#[pyfunction]
#[pyo3(signature = (scenario = "stabilize", params = None))]
fn coupling_ratio(scenario: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    Ok(analysis::accel_coupling_ratio(&robot(scenario, params)?))
}

/// Ratio measured from one free-floating simulator step under `torque`.
#[pyfunction]
#[pyo3(signature = (scenario = "stabilize", torque = 1.0, params = None))]
fn measure_coupling(scenario: &str, torque: f64, params: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    let p = robot(scenario, params)?;
    analysis::measure_coupling(&p, self::scenario(scenario)?, torque).map_err(runtime_err)
}

#[pyfunction]
#[pyo3(signature = (scenario = "stabilize", params = None))]
fn max_com_shift(scenario: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    Ok(analysis::max_com_shift(&robot(scenario, params)?))
}

/// Generalized advantage estimates and returns for one sequence.
#[pyfunction]
fn gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    dones: Vec<bool>,
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    armtail::rl::gae(&rewards, &values, &dones, bootstrap_value, gamma, gae_lambda).map_err(value_err)
}

/// OLS of `y` on `x`: returns (slope, intercept, r_squared).
#[pyfunction]
fn regression(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err(format!("x has {} samples, y has {}", x.len(), y.len())));
    }
    let pairs: Vec<(f64, f64)> = x.into_iter().zip(y).collect();
    let r = analysis::correlate_arm_yaw(&pairs).map_err(value_err)?;
    Ok((r.slope, r.intercept, r.r_squared))
}

/// Validated experiment configuration as a JSON string.
#[pyfunction]
fn load_config(path: PathBuf) -> PyResult<String> {
    let (cfg, _) = ExperimentConfig::load(&path).map_err(value_err)?;
    serde_json::to_string(&cfg).map_err(runtime_err)
}

/// A trained policy loaded from a stage or policy checkpoint.
#[pyclass(module = "armtail_py")]
struct Policy {
    inner: LoadedPolicy,
}

#[pymethods]
impl Policy {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_policy(&path).map_err(value_err)? })
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.policy.action_dim()
    }

    #[getter]
    fn arm_mode(&self) -> &'static str {
        self.inner.arm_mode.name()
    }

    #[getter]
    fn scenario(&self) -> &'static str {
        self.inner.scenario.name()
    }

    /// Deterministic action for a raw observation frame.
    fn act(&self, frame: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.policy.mean_action(&frame).map_err(value_err)
    }

    /// Runs the evaluation batteries and returns `{condition: {metric: value}}`.
    #[pyo3(signature = (trials = 100, seed = 0, arm_mode = None, config = None))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        trials: usize,
        seed: u64,
        arm_mode: Option<&str>,
        config: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = match config {
            Some(p) => ExperimentConfig::load(&p).map_err(value_err)?.0,
            None => ExperimentConfig::default_for(self.inner.scenario),
        };
        let mode: ArmMode = match arm_mode {
            Some(m) => m.parse().map_err(PyValueError::new_err)?,
            None => self.inner.arm_mode,
        };
        let settings = eval::EvalSettings { trials, ..cfg.eval.clone() };
        let batteries = settings.conditions(cfg.scenario, mode, &cfg.setup.randomization);
        let (metrics, _) = py
            .detach(|| eval::evaluate(&self.inner.policy, &batteries, &cfg.setup.scenario, &cfg.setup.robot, seed))
            .map_err(value_err)?;
        let out = PyDict::new(py);
        for (label, m) in metrics {
            let d = PyDict::new(py);
            d.set_item("success_rate", m.success_rate)?;
            d.set_item("ttf", m.ttf)?;
            d.set_item("v_lin_tracking_error", m.v_lin_tracking_error)?;
            d.set_item("v_ang_tracking_error", m.v_ang_tracking_error)?;
            d.set_item("trials", m.trials)?;
            out.set_item(label, d)?;
        }
        Ok(out)
    }
}

/// Trains and evaluates an experiment; returns the experiment directory.
#[pyfunction]
#[pyo3(signature = (config, out, methods = None, seeds = None, trials = None, updates = None))]
fn run_experiment(
    py: Python<'_>,
    config: PathBuf,
    out: PathBuf,
    methods: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    trials: Option<usize>,
    updates: Option<[usize; 3]>,
) -> PyResult<PathBuf> {
    let methods = methods
        .map(|m| m.iter().map(|s| s.parse::<Method>().map_err(value_err)).collect::<PyResult<Vec<_>>>())
        .transpose()?;
    let args = RunArgs { config, methods, seeds, trials, updates, out: Some(out) };
    py.detach(|| cmd_run(&args)).map_err(runtime_err)
}

#[pymodule]
fn armtail_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(coupling_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(measure_coupling, m)?)?;
    m.add_function(wrap_pyfunction!(max_com_shift, m)?)?;
    m.add_function(wrap_pyfunction!(gae, m)?)?;
    m.add_function(wrap_pyfunction!(regression, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<Policy>()?;
    Ok(())
}
