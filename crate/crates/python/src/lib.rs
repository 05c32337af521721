//! Python bindings for `ctrlsense-core`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ctrlsense_core::agents::{
    evaluate_centralized, evaluate_decentralized, run_joint_detection, train_centralized, train_decentralized,
    EvalConfig, EvalMetrics, Topology, TrainConfig, TrainedAgent,
};
use ctrlsense_core::belief::{self, BeliefVector, JointBelief, PairwiseModel};
use ctrlsense_core::experiment::{self, ExperimentConfig, RawConfig};
use ctrlsense_core::world::{self, Domain, Lane, Observation, ProcessStates, SeedTree};
use ctrlsense_core::{checkpoint, rewards, AlgorithmVariant, CostParams, Error, RewardKind};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Checkpoint(checkpoint::CheckpointError::Io(_)) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn observation(entries: Vec<(usize, u8)>) -> PyResult<Observation> {
    if entries.iter().any(|&(_, y)| y > 1) {
        return Err(PyValueError::new_err("observations must be 0 or 1"));
    }
    Ok(Observation::new(entries))
}

/// Pairwise dependence among binary processes.
#[pyclass(name = "DependenceStructure", frozen)]
struct PyDependence {
    inner: world::DependenceStructure,
}

#[pymethods]
impl PyDependence {
    #[new]
    #[pyo3(signature = (n, groups, rho, q=0.8))]
    fn new(n: usize, groups: Vec<Vec<usize>>, rho: f64, q: f64) -> PyResult<Self> {
        let inner = world::DependenceStructure::new(n, groups, rho, q).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Groups {0,1}, {2,3}, {4} over five processes.
    #[staticmethod]
    fn paired_five(rho: f64) -> PyResult<Self> {
        Ok(Self { inner: world::DependenceStructure::paired_five(rho).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn groups(&self) -> Vec<Vec<usize>> {
        self.inner.groups().to_vec()
    }

    /// `[P00, P01, P10, P11]` for a dependent pair.
    fn pair_joint(&self) -> [f64; 4] {
        self.inner.pair_joint()
    }

    fn state_probability(&self, bits: Vec<u8>) -> PyResult<f64> {
        let s = ProcessStates::new(bits).map_err(to_py)?;
        if s.len() != self.inner.n() {
            return Err(PyValueError::new_err("state length does not match n"));
        }
        Ok(self.inner.state_probability(&s))
    }

    #[pyo3(signature = (seed, episode=0))]
    fn sample_state(&self, seed: u64, episode: u64) -> Vec<u8> {
        let mut rng = SeedTree::new(seed).rng(Domain::Eval, episode, Lane::State);
        self.inner.sample_state(&mut rng).bits().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "DependenceStructure(n={}, groups={:?}, rho={}, q={})",
            self.inner.n(),
            self.inner.groups(),
            self.inner.rho(),
            self.inner.q()
        )
    }
}

/// One step of the marginal belief recursion. `naive` updates only observed entries.
#[pyfunction]
#[pyo3(signature = (sigma, observations, dep, p, naive=false))]
fn update_marginal(
    sigma: Vec<f64>,
    observations: Vec<(usize, u8)>,
    dep: &PyDependence,
    p: f64,
    naive: bool,
) -> PyResult<Vec<f64>> {
    let sigma = BeliefVector::new(sigma).map_err(to_py)?;
    let model = if naive {
        PairwiseModel::self_only(dep.inner.n(), dep.inner.q())
    } else {
        PairwiseModel::from_dependence(&dep.inner)
    };
    let out = belief::update_marginal(&sigma, &observation(observations)?, &model, p).map_err(to_py)?;
    Ok(out.as_slice().to_vec())
}

#[pyfunction]
fn joint_prior(dep: &PyDependence) -> PyResult<Vec<f64>> {
    Ok(JointBelief::prior(&dep.inner).map_err(to_py)?.probs().to_vec())
}

/// Exact Bayes update of a joint pmf over `2^n` states (bit `i` of the index is `s_i`).
#[pyfunction]
fn update_joint(pi: Vec<f64>, n: usize, observations: Vec<(usize, u8)>, p: f64) -> PyResult<Vec<f64>> {
    let pi = JointBelief::from_probs(n, pi).map_err(to_py)?;
    Ok(belief::update_joint(&pi, &observation(observations)?, p).map_err(to_py)?.probs().to_vec())
}

#[pyfunction]
fn marginalize(pi: Vec<f64>, n: usize) -> PyResult<Vec<f64>> {
    let pi = JointBelief::from_probs(n, pi).map_err(to_py)?;
    Ok(belief::marginalize(&pi).as_slice().to_vec())
}

#[pyfunction]
fn binary_entropy(x: f64) -> f64 {
    rewards::binary_entropy(x)
}

#[pyfunction]
fn llr_stat(x: f64) -> f64 {
    rewards::llr_stat(x)
}

#[pyfunction]
fn central_reward(kind: &str, prev: Vec<f64>, next: Vec<f64>) -> PyResult<f64> {
    let kind: RewardKind = parse(kind)?;
    let prev = BeliefVector::new(prev).map_err(to_py)?;
    let next = BeliefVector::new(next).map_err(to_py)?;
    if prev.len() != next.len() {
        return Err(PyValueError::new_err("belief vectors differ in length"));
    }
    Ok(rewards::central_reward(kind, &prev, &next))
}

fn metrics_dict<'py>(py: Python<'py>, m: &EvalMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("episodes", m.episodes)?;
    d.set_item("correct", m.correct)?;
    d.set_item("timeouts", m.timeouts)?;
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("mean_stopping_time", m.mean_stopping_time)?;
    d.set_item("mean_obs_per_unit_time", m.mean_obs_per_unit_time)?;
    Ok(d)
}

/// Trained actor and critic.
#[pyclass(name = "Agent")]
struct PyAgent {
    inner: TrainedAgent,
}

#[pymethods]
impl PyAgent {
    #[getter]
    fn variant(&self) -> String {
        self.inner.variant.to_string()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn episodes_trained(&self) -> u64 {
        self.inner.episodes_trained
    }

    #[getter]
    fn episode_rewards(&self) -> Vec<f64> {
        self.inner.episode_rewards.clone()
    }

    #[pyo3(signature = (window=500))]
    fn moving_average(&self, window: usize) -> Vec<f64> {
        self.inner.moving_average(window)
    }

    /// Actor output: process probabilities (centralized) or per-process
    /// selection probabilities (decentralized).
    fn policy(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.actor.net.output(&x).map_err(to_py)
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.critic.net.output(&x).map_err(to_py)?[0])
    }

    /// `topology` is one of shared, local or joint and applies to the
    /// decentralized variant only.
    #[pyo3(signature = (dep, p, upsilon, episodes=2000, seed=0, k_max=500, topology="shared", greedy=false))]
    #[allow(clippy::too_many_arguments)]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        dep: &PyDependence,
        p: f64,
        upsilon: f64,
        episodes: usize,
        seed: u64,
        k_max: usize,
        topology: &str,
        greedy: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let eval = EvalConfig { upsilon, episodes, k_max, seed, greedy };
        let n = dep.inner.n();
        let m = py
            .detach(|| {
                if self.inner.variant.is_centralized() {
                    return evaluate_centralized(&self.inner, &dep.inner, p, &eval);
                }
                match topology {
                    "shared" => evaluate_decentralized(&self.inner, &dep.inner, p, &eval, &Topology::shared(n)),
                    "local" => evaluate_decentralized(&self.inner, &dep.inner, p, &eval, &Topology::local(n)),
                    "joint" => run_joint_detection(&self.inner, &dep.inner, p, &eval),
                    other => Err(Error::InvalidConfig(format!("unknown topology `{other}`"))),
                }
            })
            .map_err(to_py)?;
        metrics_dict(py, &m)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&path, &self.inner, [0; 32]).map_err(|e| to_py(e.into()))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = checkpoint::load(&path).map_err(|e| to_py(e.into()))?;
        Ok(Self { inner: ck.into_agent() })
    }

    fn __repr__(&self) -> String {
        format!(
            "Agent(variant={}, n={}, episodes_trained={})",
            self.inner.variant, self.inner.n, self.inner.episodes_trained
        )
    }
}

/// Trains an agent. `lam` and `eta` set the sensing cost of the
/// decentralized variant; unset values take the defaults for `reward`.
#[pyfunction]
#[pyo3(signature = (variant, dep, p=0.2, reward="entropy", episodes=20000, steps_per_episode=100, seed=0, lam=5.0, eta=None, log_phi=false))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    variant: &str,
    dep: &PyDependence,
    p: f64,
    reward: &str,
    episodes: usize,
    steps_per_episode: usize,
    seed: u64,
    lam: f64,
    eta: Option<f64>,
    log_phi: bool,
) -> PyResult<PyAgent> {
    let variant: AlgorithmVariant = parse(variant)?;
    let reward: RewardKind = parse(reward)?;
    let mut cfg = if variant.is_centralized() {
        TrainConfig::centralized(reward)
    } else {
        TrainConfig::decentralized(reward, lam)
    };
    cfg.episodes = episodes;
    cfg.steps_per_episode = steps_per_episode;
    cfg.seed = seed;
    cfg.log_phi = log_phi;
    if let (Some(cost), Some(eta)) = (cfg.cost.as_mut(), eta) {
        *cost = CostParams { eta, lambda: cost.lambda };
    }
    let inner = py
        .detach(|| {
            if variant.is_centralized() {
                train_centralized(&cfg, variant, &dep.inner, p)
            } else {
                train_decentralized(&cfg, &dep.inner, p)
            }
        })
        .map_err(to_py)?;
    Ok(PyAgent { inner })
}

/// Runs a full sweep from TOML config text; returns the metrics rows as dicts.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ExperimentConfig::resolve(RawConfig::from_toml(config_toml).map_err(to_py)?).map_err(to_py)?;
    let out = py.detach(|| experiment::run_sweep(&cfg)).map_err(to_py)?;
    out.rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("seed", r.seed)?;
            d.set_item("variant", r.variant.to_string())?;
            d.set_item("reward_kind", r.reward_kind.as_str())?;
            d.set_item("topology", &r.topology)?;
            d.set_item("upsilon", r.upsilon)?;
            d.set_item("rho", r.rho)?;
            d.set_item("lambda_cost", r.lambda_cost)?;
            d.set_item("eta", r.eta)?;
            d.set_item("accuracy", r.accuracy)?;
            d.set_item("mean_stopping_time", r.mean_stopping_time)?;
            d.set_item("mean_obs_per_unit_time", r.mean_obs_per_unit_time)?;
            d.set_item("episodes", r.episodes)?;
            d.set_item("timeouts", r.timeouts)?;
            Ok(d)
        })
        .collect()
}

/// JSON summary of a checkpoint file.
#[pyfunction]
fn inspect_checkpoint(path: PathBuf) -> PyResult<String> {
    experiment::inspect_checkpoint(&path).map_err(to_py)
}

#[pymodule]
fn ctrlsense(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDependence>()?;
    m.add_class::<PyAgent>()?;
    m.add_function(wrap_pyfunction!(update_marginal, m)?)?;
    m.add_function(wrap_pyfunction!(joint_prior, m)?)?;
    m.add_function(wrap_pyfunction!(update_joint, m)?)?;
    m.add_function(wrap_pyfunction!(marginalize, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(llr_stat, m)?)?;
    m.add_function(wrap_pyfunction!(central_reward, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(inspect_checkpoint, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
