//! Python bindings: closed-form link and learning primitives plus the two-agent environment.

use std::sync::Arc;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use jamshield::config::Config;
use jamshield::env::{decode_joint_action, random_action, AgentObservation, JamEnv, StepResult};
use jamshield::link_abstraction::{EsmConfig, PerMode};
use jamshield::propagation::{ArrayGeometry, PathLossConstants};
use jamshield::rng::{stream, SimRng, Stream};
use jamshield::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        Error::Divergence(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn esm(beta: f64, sinr50_db: f64, slope: f64) -> EsmConfig {
    EsmConfig {
        beta_eesm: beta,
        bler_sinr50_db: sinr50_db,
        bler_slope: slope,
    }
}

/// Linear path loss at `d` meters with the default urban-micro constants.
#[pyfunction]
#[pyo3(signature = (d, los=true))]
fn path_loss(d: f64, los: bool) -> PyResult<f64> {
    jamshield::propagation::path_loss(d, los, &PathLossConstants::default()).map_err(to_py)
}

/// Unit-norm steering vector of an `m`-element half-wavelength array.
#[pyfunction]
#[pyo3(signature = (theta, phi, m, wavelength_m=0.0857))]
fn steering_vector(theta: f64, phi: f64, m: usize, wavelength_m: f64) -> Vec<Complex64> {
    jamshield::propagation::steering_vector(theta, phi, &ArrayGeometry::for_count(m, wavelength_m))
}

#[pyfunction]
#[pyo3(signature = (w, theta, phi, wavelength_m=0.0857))]
fn array_gain(w: Vec<Complex64>, theta: f64, phi: f64, wavelength_m: f64) -> PyResult<f64> {
    if w.is_empty() {
        return Err(PyValueError::new_err("empty weight vector"));
    }
    let g = ArrayGeometry::for_count(w.len(), wavelength_m);
    Ok(jamshield::propagation::array_gain(&w, theta, phi, &g))
}

#[pyfunction]
#[pyo3(signature = (sinr, beta=2.0))]
fn effective_sinr(sinr: Vec<f64>, beta: f64) -> PyResult<f64> {
    jamshield::link_abstraction::effective_sinr(&sinr, &esm(beta, 1.0, 1.0)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (sinr_eff, sinr50_db=1.0, slope=1.0))]
fn sinr_to_bler(sinr_eff: f64, sinr50_db: f64, slope: f64) -> f64 {
    jamshield::link_abstraction::sinr_to_bler(sinr_eff, &esm(2.0, sinr50_db, slope))
}

/// `mode` is `"as_written"` or `"residual"`.
#[pyfunction]
#[pyo3(signature = (bler, r, mode="as_written"))]
fn per_closed_form(bler: f64, r: u32, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "as_written" => PerMode::AsWritten,
        "residual" => PerMode::Residual,
        other => return Err(PyValueError::new_err(format!("unknown PER mode {other:?}"))),
    };
    Ok(jamshield::link_abstraction::per_closed_form(bler, r, mode))
}

/// Returns `(advantages, returns)`.
#[pyfunction]
#[pyo3(signature = (rewards, values, terminal_value=0.0, gamma=0.95, lam=0.95))]
fn compute_gae(
    rewards: Vec<f64>,
    values: Vec<f64>,
    terminal_value: f64,
    gamma: f64,
    lam: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(PyValueError::new_err("rewards and values differ in length"));
    }
    Ok(jamshield::marl::gae::compute_gae(&rewards, &values, terminal_value, gamma, lam))
}

#[pyfunction]
#[pyo3(signature = (ratio, advantage, eps=0.2))]
fn ppo_clip_objective(ratio: f64, advantage: f64, eps: f64) -> f64 {
    jamshield::marl::ppo::ppo_clip_objective(ratio, advantage, eps)
}

#[pyfunction]
fn prediction_entropy(p: Vec<f64>) -> PyResult<f64> {
    jamshield::detector::prediction_entropy(&p).map_err(to_py)
}

/// Two-agent anti-jamming environment without a detector.
///
/// ```python
/// env = Env(topology_seed=6)
/// o1, o2 = env.reset(0)
/// o1, o2, r1, r2, done, kpi = env.step([0, 0, 0, 1, 1], [0.0, 0.0, 0.0, 0.0])
/// ```
#[pyclass(unsendable)]
struct Env {
    inner: JamEnv,
    rng: SimRng,
}

fn obs_pair(o: AgentObservation) -> (Vec<f64>, Vec<f64>) {
    (o.agent1, o.agent2)
}

type StepTuple<'py> = (Vec<f64>, Vec<f64>, f64, f64, bool, Bound<'py, PyDict>);

fn step_tuple<'py>(py: Python<'py>, s: StepResult) -> PyResult<StepTuple<'py>> {
    let k = &s.kpi;
    let d = PyDict::new(py);
    d.set_item("slot", k.slot_index)?;
    d.set_item("packet_loss", k.packet_loss_rate)?;
    d.set_item("attempts", k.attempts)?;
    d.set_item("latency_s", k.latency_s)?;
    d.set_item("jitter_s", k.jitter_s)?;
    d.set_item("sinr_eff", k.sinr_eff)?;
    d.set_item("rssi_w", k.rssi_w)?;
    d.set_item("rsrp_w", k.rsrp_w)?;
    d.set_item("bwp", k.bwp_idx)?;
    d.set_item("jam_in_band", k.jam_in_band)?;
    let (o1, o2) = obs_pair(s.obs);
    Ok((o1, o2, s.rewards.0, s.rewards.1, s.done, d))
}

#[pymethods]
impl Env {
    /// `config` is TOML text; the scenario seed picks the topology unless `topology_seed` is given.
    #[new]
    #[pyo3(signature = (config=None, topology_seed=None))]
    fn new(config: Option<&str>, topology_seed: Option<u64>) -> PyResult<Self> {
        let cfg = match config {
            Some(text) => Config::from_toml(text).map_err(to_py)?,
            None => Config::default(),
        };
        let seed = topology_seed.unwrap_or(cfg.scenario.seed);
        let inner = JamEnv::new(Arc::new(cfg.scenario), cfg.rewards, seed, None).map_err(to_py)?;
        Ok(Self {
            inner,
            rng: stream(seed, Stream::Policy),
        })
    }

    #[getter]
    fn obs_dims(&self) -> (usize, usize) {
        let d = self.inner.obs_dims();
        (d[0], d[1])
    }

    #[getter]
    fn slot(&self) -> usize {
        self.inner.slot()
    }

    fn reset(&mut self, episode_seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.rng = stream(episode_seed, Stream::Policy);
        self.inner.reset(episode_seed).map(obs_pair).map_err(to_py)
    }

    /// `raw1 = [rb_start, rb_num, i_notch, bwp_idx, r_max]`, `raw2` = four beam outputs in (−1, 1).
    fn step<'py>(&mut self, py: Python<'py>, raw1: [i64; 5], raw2: [f64; 4]) -> PyResult<StepTuple<'py>> {
        let a = decode_joint_action(raw1, raw2, self.inner.n_rb_per_bwp()).map_err(to_py)?;
        let s = self.inner.step(&a).map_err(to_py)?;
        step_tuple(py, s)
    }

    fn step_random<'py>(&mut self, py: Python<'py>) -> PyResult<StepTuple<'py>> {
        let a = random_action(&mut self.rng, self.inner.n_rb_per_bwp());
        let s = self.inner.step(&a).map_err(to_py)?;
        step_tuple(py, s)
    }
}

#[pymodule]
fn jamshield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(path_loss, m)?)?;
    m.add_function(wrap_pyfunction!(steering_vector, m)?)?;
    m.add_function(wrap_pyfunction!(array_gain, m)?)?;
    m.add_function(wrap_pyfunction!(effective_sinr, m)?)?;
    m.add_function(wrap_pyfunction!(sinr_to_bler, m)?)?;
    m.add_function(wrap_pyfunction!(per_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(compute_gae, m)?)?;
    m.add_function(wrap_pyfunction!(ppo_clip_objective, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_entropy, m)?)?;
    m.add_class::<Env>()?;
    Ok(())
}
