//! Python bindings: configuration, environment stepping, training,
//! evaluation, and the reference baselines.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use starris::cli::{baseline_run, build_env, evaluate_agent, oracle_run, sweep_run, train_run};
use starris::config::{load_config, RunConfig};
use starris::ddpg::{Trainer as CoreTrainer, TrainerCheckpoint};
use starris::env::StarRisEnv;
use starris::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotFound(p) => PyFileNotFoundError::new_err(p),
        Error::InvalidArgument(_) | Error::Config { .. } | Error::BudgetExceeded { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Serializable value → plain Python objects (dicts, lists, floats).
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Run configuration. Unset fields take the reference defaults.
#[pyclass(name = "Config", module = "starris_py", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml=None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(text) => RunConfig::parse(text).map_err(to_py)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_config(&path).map_err(to_py)?,
        })
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Config(M={}, N={}, users={}+{}, p_max_dbm={}, r_min={}, episodes={}, steps={})",
            c.channel.antennas,
            c.channel.elements,
            c.channel.users_t,
            c.channel.users_r,
            c.system.p_max_dbm,
            c.system.r_min,
            c.episodes,
            c.steps
        )
    }

    #[getter]
    fn episodes(&self) -> usize {
        self.inner.episodes
    }
    #[setter]
    fn set_episodes(&mut self, v: usize) {
        self.inner.episodes = v;
    }
    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }
    #[setter]
    fn set_steps(&mut self, v: usize) {
        self.inner.steps = v;
    }
    #[getter]
    fn p_max_dbm(&self) -> f64 {
        self.inner.system.p_max_dbm
    }
    #[setter]
    fn set_p_max_dbm(&mut self, v: f64) {
        self.inner.system.p_max_dbm = v;
    }
    #[getter]
    fn r_min(&self) -> f64 {
        self.inner.system.r_min
    }
    #[setter]
    fn set_r_min(&mut self, v: f64) {
        self.inner.system.r_min = v;
    }
    #[getter]
    fn antennas(&self) -> usize {
        self.inner.channel.antennas
    }
    #[setter]
    fn set_antennas(&mut self, v: usize) {
        self.inner.channel.antennas = v;
    }
    #[getter]
    fn elements(&self) -> usize {
        self.inner.channel.elements
    }
    #[setter]
    fn set_elements(&mut self, v: usize) {
        self.inner.channel.elements = v;
    }
    #[getter]
    fn users_t(&self) -> usize {
        self.inner.channel.users_t
    }
    #[setter]
    fn set_users_t(&mut self, v: usize) {
        self.inner.channel.users_t = v;
    }
    #[getter]
    fn users_r(&self) -> usize {
        self.inner.channel.users_r
    }
    #[setter]
    fn set_users_r(&mut self, v: usize) {
        self.inner.channel.users_r = v;
    }
    #[getter]
    fn fixed_channel(&self) -> bool {
        self.inner.channel.fixed
    }
    #[setter]
    fn set_fixed_channel(&mut self, v: bool) {
        self.inner.channel.fixed = v;
    }
    #[getter]
    fn hidden(&self) -> usize {
        self.inner.agent.hidden
    }
    #[setter]
    fn set_hidden(&mut self, v: usize) {
        self.inner.agent.hidden = v;
    }
    #[getter]
    fn batch_size(&self) -> usize {
        self.inner.agent.batch_size
    }
    #[setter]
    fn set_batch_size(&mut self, v: usize) {
        self.inner.agent.batch_size = v;
    }
}

/// The STAR-RIS NOMA environment with its own seeded channel stream.
#[pyclass(name = "Environment", module = "starris_py", unsendable)]
pub struct PyEnvironment {
    env: StarRisEnv,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyEnvironment {
    #[new]
    fn new(config: &PyConfig, seed: u64) -> PyResult<Self> {
        config.inner.validate().map_err(to_py)?;
        Ok(Self {
            env: build_env(&config.inner, seed).map_err(to_py)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    #[getter]
    fn state_dim(&self) -> usize {
        self.env.state_dim()
    }

    /// Draws channels (unless fixed) and returns the initial state.
    fn reset(&mut self) -> PyResult<Vec<f64>> {
        self.env.reset(&mut self.rng).map_err(to_py)
    }

    /// Applies a raw action with entries in (−1, 1); returns the step
    /// outcome as a dict.
    fn step<'py>(&mut self, py: Python<'py>, action: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let r = self.env.step(&action).map_err(to_py)?;
        to_object(py, &r)
    }
}

/// DDPG training loop plus greedy evaluation.
#[pyclass(name = "Trainer", module = "starris_py", unsendable)]
pub struct PyTrainer {
    config: RunConfig,
    seed: u64,
    trainer: CoreTrainer,
}

#[pymethods]
impl PyTrainer {
    #[new]
    fn new(config: &PyConfig, seed: u64) -> PyResult<Self> {
        config.inner.validate().map_err(to_py)?;
        let env = build_env(&config.inner, seed).map_err(to_py)?;
        let trainer = CoreTrainer::new(env, config.inner.agent.clone(), seed).map_err(to_py)?;
        Ok(Self {
            config: config.inner.clone(),
            seed,
            trainer,
        })
    }

    /// Resumes from a checkpoint written by `save` or the command line.
    #[staticmethod]
    fn load(config: &PyConfig, seed: u64, path: PathBuf) -> PyResult<Self> {
        let ckpt = TrainerCheckpoint::load(&path).map_err(to_py)?;
        let env = build_env(&config.inner, seed).map_err(to_py)?;
        Ok(Self {
            config: config.inner.clone(),
            seed,
            trainer: CoreTrainer::restore(env, ckpt).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.trainer.checkpoint().save(&path).map_err(to_py)
    }

    #[getter]
    fn episodes_done(&self) -> usize {
        self.trainer.episodes_done
    }

    #[pyo3(signature = (steps=None))]
    fn run_episode<'py>(&mut self, py: Python<'py>, steps: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let m = self
            .trainer
            .run_episode(steps.unwrap_or(self.config.steps))
            .map_err(to_py)?;
        to_object(py, &m)
    }

    /// Runs `episodes` more episodes; returns one metrics dict per episode.
    #[pyo3(signature = (episodes=None, steps=None))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        episodes: Option<usize>,
        steps: Option<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let log = self
            .trainer
            .train(
                episodes.unwrap_or(self.config.episodes),
                steps.unwrap_or(self.config.steps),
                |_, _| Ok(()),
            )
            .map_err(to_py)?;
        to_object(py, &log)
    }

    /// Deterministic policy output, or a noisy one with `explore`.
    #[pyo3(signature = (state, explore=false))]
    fn act(&mut self, state: Vec<f64>, explore: bool) -> PyResult<Vec<f64>> {
        let t = &mut self.trainer;
        t.agent.select_action(&state, explore, &mut t.agent_rng).map_err(to_py)
    }

    /// Greedy policy on fresh channel draws.
    fn evaluate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let s = evaluate_agent(&self.trainer.agent, &self.config, self.seed).map_err(to_py)?;
        to_object(py, &s)
    }
}

/// Trains with the configuration's episode/step counts; returns the metrics log.
#[pyfunction]
fn train<'py>(py: Python<'py>, config: &PyConfig, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    config.inner.validate().map_err(to_py)?;
    let out = train_run(&config.inner, seed, None).map_err(to_py)?;
    to_object(py, &out.log)
}

/// Random-coefficients policy on the same channel stream as training.
#[pyfunction]
fn random_baseline<'py>(py: Python<'py>, config: &PyConfig, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    config.inner.validate().map_err(to_py)?;
    let log = baseline_run(&config.inner, seed).map_err(to_py)?;
    to_object(py, &log)
}

/// Exhaustive grid search on the seed's fixed channel realization.
#[pyfunction]
fn grid_oracle<'py>(py: Python<'py>, config: &PyConfig, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    config.inner.validate().map_err(to_py)?;
    let r = oracle_run(&config.inner, seed, None).map_err(to_py)?;
    to_object(py, &r)
}

/// Train + evaluate across the configured sweep axis and seeds.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyAny>> {
    config.inner.validate().map_err(to_py)?;
    let points = sweep_run(&config.inner, None, |_, _, _| {}).map_err(to_py)?;
    to_object(py, &points)
}

#[pymodule]
pub fn starris_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyTrainer>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(random_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(grid_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
