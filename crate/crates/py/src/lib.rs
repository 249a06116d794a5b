//! Python bindings: environments, grounding, reference policies, scoring,
//! the PPO baseline and the experiment harness.

use std::path::PathBuf;

use gymtext_core::env::{self as core_env, Action, EnvId, Observation};
use gymtext_core::evaluation::{normalize as core_normalize, ThresholdTable};
use gymtext_core::{dataset, grounding, harness, policies, ppo};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn env_id(name: &str) -> PyResult<EnvId> {
    name.parse().map_err(value_err)
}

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn obs_from_py(env: EnvId, obs: &Bound<'_, PyAny>) -> PyResult<Observation> {
    let text: String = obs.py().import("json")?.call_method1("dumps", (obs,))?.extract()?;
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(value_err)?;
    if let Some(map) = value.as_object_mut() {
        map.entry("kind").or_insert_with(|| kind_tag(env).into());
    }
    let parsed: Observation = serde_json::from_value(value).map_err(value_err)?;
    if !parsed.matches(env) {
        return Err(PyValueError::new_err(format!("observation does not belong to {env}")));
    }
    Ok(parsed)
}

fn kind_tag(env: EnvId) -> String {
    let (_, obs) = core_env::reset(env, 0, 1).expect("reset");
    serde_json::to_value(obs).expect("serializable")["kind"]
        .as_str()
        .unwrap_or_default()
        .to_string()
}

fn action_from_py(env: EnvId, action: &Bound<'_, PyAny>) -> PyResult<Action> {
    if env == EnvId::MountaincarContinuous {
        Ok(Action::Continuous(action.extract()?))
    } else {
        Ok(Action::Discrete(action.extract()?))
    }
}

/// Names of the supported environments.
#[pyfunction]
fn env_ids() -> Vec<&'static str> {
    EnvId::ALL.iter().map(|e| e.as_str()).collect()
}

/// A seeded environment instance.
#[pyclass(name = "Env")]
struct PyEnv {
    id: EnvId,
    inner: core_env::Env,
    observation: Observation,
}

#[pymethods]
impl PyEnv {
    #[new]
    #[pyo3(signature = (env, seed, step_cap = core_env::DEFAULT_STEP_CAP))]
    fn new(env: &str, seed: u64, step_cap: u32) -> PyResult<Self> {
        let id = env_id(env)?;
        let (inner, observation) = core_env::reset(id, seed, step_cap).map_err(value_err)?;
        Ok(PyEnv { id, inner, observation })
    }

    #[getter]
    fn env(&self) -> &'static str {
        self.id.as_str()
    }

    /// Current observation as a dict.
    #[getter]
    fn observation(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.observation)
    }

    /// Current observation as text.
    fn describe(&self) -> PyResult<String> {
        grounding::translate_observation(self.id, &self.observation).map_err(runtime_err)
    }

    /// Apply a 0-based action (a float for mountaincar_continuous); returns
    /// (observation, reward, terminated, truncated).
    fn step(&mut self, py: Python<'_>, action: &Bound<'_, PyAny>) -> PyResult<(Py<PyAny>, f64, bool, bool)> {
        let a = action_from_py(self.id, action)?;
        let r = self.inner.step(a).map_err(value_err)?;
        self.observation = r.observation;
        Ok((to_py(py, &r.observation)?, r.reward, r.terminated, r.truncated))
    }
}

/// Text rendering of an observation dict.
#[pyfunction]
fn translate_observation(env: &str, obs: &Bound<'_, PyAny>) -> PyResult<String> {
    let id = env_id(env)?;
    grounding::translate_observation(id, &obs_from_py(id, obs)?).map_err(runtime_err)
}

/// Game, goal and action descriptions.
#[pyfunction]
fn describe(py: Python<'_>, env: &str) -> PyResult<Py<PyAny>> {
    let id = env_id(env)?;
    let d = PyDict::new(py);
    d.set_item("game", grounding::describe_game(id))?;
    d.set_item("goal", grounding::describe_goal(id))?;
    d.set_item("action", grounding::describe_action(id))?;
    Ok(d.into_any().unbind())
}

/// The scripted or tabular expert's 0-based action.
#[pyfunction]
fn expert_action(py: Python<'_>, env: &str, obs: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let id = env_id(env)?;
    let a = policies::expert_action(id, &obs_from_py(id, obs)?).map_err(runtime_err)?;
    match a {
        Action::Discrete(i) => Ok(i.into_pyobject(py)?.into_any().unbind()),
        Action::Continuous(f) => Ok(f.into_pyobject(py)?.into_any().unbind()),
    }
}

/// A reference-policy dataset as JSONL text.
#[pyfunction]
#[pyo3(signature = (policy, env, n = 5, seed = 0, step_cap = core_env::DEFAULT_STEP_CAP))]
fn generate_dataset(policy: &str, env: &str, n: usize, seed: u64, step_cap: u32) -> PyResult<String> {
    let id = env_id(env)?;
    let kind: policies::PolicyKind = policy.parse().map_err(value_err)?;
    let trajs = policies::generate_dataset(kind, id, n, seed, step_cap).map_err(runtime_err)?;
    Ok(dataset::to_jsonl(&dataset::header_for(id, seed, kind.as_str(), &trajs), &trajs))
}

/// Normalized score against the shipped thresholds.
#[pyfunction]
fn normalize(env: &str, score: f64) -> PyResult<f64> {
    let t = ThresholdTable::builtin().get(env_id(env)?).map_err(value_err)?;
    Ok(core_normalize(score, &t))
}

#[pyfunction]
fn ppo_param_count(obs_dim: usize, action_num: usize) -> usize {
    ppo::param_count(obs_dim, action_num)
}

/// Train the PPO baseline; returns the learning curve as a list of dicts.
#[pyfunction]
#[pyo3(signature = (env, epochs = 400, seed = 0, traj_per_epoch = 50))]
fn ppo_train(py: Python<'_>, env: &str, epochs: usize, seed: u64, traj_per_epoch: usize) -> PyResult<Py<PyAny>> {
    let id = env_id(env)?;
    let cfg = ppo::PpoConfig {
        epochs,
        seed,
        traj_per_epoch,
        ..ppo::best_config(id).unwrap_or_default()
    };
    let result = py.detach(|| ppo::train(id, &cfg)).map_err(runtime_err)?;
    to_py(py, &result.curve)
}

/// Run an experiment config (TOML text) into `out_dir`; returns the summary.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &str, out_dir: PathBuf) -> PyResult<Py<PyAny>> {
    let cfg = harness::ExperimentConfig::from_toml(config).map_err(value_err)?;
    let s = py.detach(|| harness::run(&cfg, config, &out_dir)).map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("executed", s.executed)?;
    d.set_item("completed", s.completed)?;
    d.set_item("failed", s.failed)?;
    d.set_item("skipped", s.skipped)?;
    Ok(d.into_any().unbind())
}

#[pymodule]
fn gymtext(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_function(wrap_pyfunction!(env_ids, m)?)?;
    m.add_function(wrap_pyfunction!(translate_observation, m)?)?;
    m.add_function(wrap_pyfunction!(describe, m)?)?;
    m.add_function(wrap_pyfunction!(expert_action, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(ppo_param_count, m)?)?;
    m.add_function(wrap_pyfunction!(ppo_train, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
