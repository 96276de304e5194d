//! Python bindings: the mixed policy network, advice mixing, returns,
//! statistics, map oracles, the Table environment and the experiment harness.

use std::collections::HashMap;

use actor_advisor::agents::critic_advice as core_critic_advice;
use actor_advisor::env::{bfs_shortest_path as core_bfs, load_map, Environment, TableEnv as CoreTable};
use actor_advisor::gradcheck::run_gradient_suites;
use actor_advisor::harness::{self, load_builtin_world, EnvId, ExperimentConfig};
use actor_advisor::nn::softmax as core_softmax;
use actor_advisor::{AdviceVector, Error, Features, MlpPolicy, PolicyDistribution};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::DivergentGradient | Error::NonFiniteLoss => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn advice_or_neutral(advice: Option<Vec<f64>>, n: usize) -> PyResult<AdviceVector> {
    match advice {
        Some(a) => AdviceVector::new(a).map_err(to_py),
        None => Ok(AdviceVector::neutral(n)),
    }
}

/// One-hidden-layer policy network whose output is mixed with advice.
#[pyclass(name = "Policy")]
struct PyPolicy {
    net: MlpPolicy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (inputs, actions, hidden = 100, seed = 0))]
    fn new(inputs: usize, actions: usize, hidden: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = MlpPolicy::new(inputs, hidden, actions, &mut rng).map_err(to_py)?;
        Ok(Self { net })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            net: MlpPolicy::load(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.net.save(path).map_err(to_py)
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.net.n_actions()
    }

    #[getter]
    fn n_inputs(&self) -> usize {
        self.net.input_dim()
    }

    #[getter]
    fn params(&self) -> Vec<f64> {
        self.net.params().to_vec()
    }

    #[setter]
    fn set_params(&mut self, params: Vec<f64>) -> PyResult<()> {
        if params.len() != self.net.params().len() {
            return Err(PyValueError::new_err(format!(
                "expected {} parameters, got {}",
                self.net.params().len(),
                params.len()
            )));
        }
        self.net.params_mut().copy_from_slice(&params);
        Ok(())
    }

    /// Mixed action distribution; neutral advice when `advice` is None.
    #[pyo3(signature = (state, advice = None))]
    fn forward(&self, state: Vec<f64>, advice: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let advice = advice_or_neutral(advice, self.net.n_actions())?;
        let (dist, _) = self.net.forward(&Features::Dense(state), &advice).map_err(to_py)?;
        Ok(dist.into_inner())
    }

    /// Gradient of `-scale * log y[action]` with respect to the parameters.
    #[pyo3(signature = (state, action, scale, advice = None))]
    fn gradient(&self, state: Vec<f64>, action: usize, scale: f64, advice: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let advice = advice_or_neutral(advice, self.net.n_actions())?;
        let (_, cache) = self.net.forward(&Features::Dense(state), &advice).map_err(to_py)?;
        self.net.backward(&cache, action, scale).map_err(to_py)
    }
}

#[pyfunction]
fn mix(learned: Vec<f64>, advice: Vec<f64>) -> PyResult<Vec<f64>> {
    let learned = PolicyDistribution::new(learned).map_err(to_py)?;
    let advice = AdviceVector::new(advice).map_err(to_py)?;
    Ok(actor_advisor::mix(&learned, &advice).map_err(to_py)?.into_inner())
}

#[pyfunction]
fn discounted_returns(rewards: Vec<f64>, gamma: f64) -> Vec<f64> {
    actor_advisor::discounted_returns(&rewards, gamma)
}

#[pyfunction]
#[pyo3(signature = (values, temperature = 1.0))]
fn softmax(values: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    Ok(core_softmax(&values, temperature).map_err(to_py)?.into_inner())
}

#[pyfunction]
#[pyo3(signature = (q, temperature = 0.1))]
fn critic_advice(q: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    Ok(core_critic_advice(&q, temperature).map_err(to_py)?.prefs().to_vec())
}

/// Returns (U, two-sided p).
#[pyfunction]
fn wilcoxon_rank_sum(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = harness::wilcoxon_rank_sum(&a, &b).map_err(to_py)?;
    Ok((r.statistic, r.p_value))
}

/// Returns (t, two-sided p).
#[pyfunction]
fn welch_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = harness::welch_t_test(&a, &b).map_err(to_py)?;
    Ok((r.statistic, r.p_value))
}

fn world_from(map: &str) -> PyResult<actor_advisor::env::GridWorld> {
    let builtin = match map {
        "grid1" => Some(EnvId::Grid1),
        "grid2" => Some(EnvId::Grid2),
        "fiverooms" => Some(EnvId::FiveRooms),
        _ => None,
    };
    match builtin {
        Some(id) => Ok(load_builtin_world(id).map_err(to_py)?.expect("grid id")),
        None => load_map(map).map_err(to_py),
    }
}

/// Shortest start-to-goal path for a built-in map name or map text; None if unreachable.
#[pyfunction]
fn bfs_shortest_path(map: &str) -> PyResult<Option<u32>> {
    Ok(core_bfs(&world_from(map)?))
}

/// Shortest path, optimal undiscounted return, room and door counts.
#[pyfunction]
fn oracle(map: &str) -> PyResult<HashMap<String, f64>> {
    let world = world_from(map)?;
    let mut out = HashMap::new();
    if let Some(len) = core_bfs(&world) {
        out.insert("shortest_path".into(), f64::from(len));
        out.insert("optimal_return".into(), world.goal_bonus + world.step_penalty * f64::from(len));
    }
    out.insert("rooms".into(), world.n_rooms() as f64);
    out.insert("doors".into(), world.doors.len() as f64);
    Ok(out)
}

/// The continuous Table docking task.
#[pyclass(name = "TableEnv")]
struct PyTableEnv {
    env: CoreTable,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyTableEnv {
    #[new]
    fn new() -> Self {
        Self {
            env: CoreTable::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.env.reset().to_dense()
    }

    /// Returns (observation, reward, done, terminal cause).
    fn step(&mut self, action: usize) -> PyResult<(Vec<f64>, f64, bool, String)> {
        let r = self.env.step(action, &mut self.rng).map_err(to_py)?;
        let cause = r.terminal.map_or("none", |t| t.as_str()).to_string();
        Ok((r.observation.to_dense(), r.reward, r.terminal.is_some(), cause))
    }
}

/// Runs the three gradient suites: (name, worst error, tolerance, passed) each.
#[pyfunction]
#[pyo3(signature = (seed = 0, trials = 100))]
fn gradcheck(seed: u64, trials: usize) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let suites = run_gradient_suites(seed, trials, false).map_err(to_py)?;
    Ok(suites
        .into_iter()
        .map(|s| (s.name.to_string(), s.worst, s.tolerance, s.passed()))
        .collect())
}

type RecordTuple = (usize, usize, f64, u64, u64, u64, String);

/// Runs a single-kind config given as config-file text. Records come back
/// as (run, episode, return, steps, decisions, interventions, terminal).
#[pyfunction]
#[pyo3(signature = (config, jobs = 1))]
fn run_experiment(py: Python<'_>, config: &str, jobs: usize) -> PyResult<Vec<RecordTuple>> {
    let cfg = ExperimentConfig::parse(config).map_err(to_py)?;
    let records = py.detach(|| harness::run_experiment(&cfg, jobs)).map_err(to_py)?;
    Ok(records
        .into_iter()
        .map(|r| {
            (
                r.run,
                r.episode,
                r.ret,
                r.steps,
                r.decisions,
                r.interventions,
                r.terminal.as_str().to_string(),
            )
        })
        .collect())
}

#[pymodule]
#[pyo3(name = "actor_advisor")]
fn actor_advisor_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyTableEnv>()?;
    m.add_function(wrap_pyfunction!(mix, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_returns, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(critic_advice, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_rank_sum, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(bfs_shortest_path, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
