//! Python bindings. Results are returned as plain dicts/lists mirroring
//! the JSON files written by the command-line tool.

use capmdp::analysis::{self, AnalysisOptions, Solver, Suite};
use capmdp::evaluate::{check_proposition1, check_proposition2};
use capmdp::model::{self, InstanceParams};
use capmdp::{Error, SearchLimits};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

create_exception!(capmdp_py, InfeasibleError, PyException);
create_exception!(capmdp_py, LimitExceededError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Infeasible => InfeasibleError::new_err(e.to_string()),
        Error::LimitExceeded(_) => LimitExceededError::new_err(e.to_string()),
        Error::DimensionMismatch(_)
        | Error::Validation(_)
        | Error::Io { .. }
        | Error::Schema(_)
        | Error::Csv(_)
        | Error::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        Error::RejectionLimitExceeded { .. } | Error::DivisionByZero(_) => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &value)
}

/// A validated problem instance.
#[pyclass(name = "Instance", module = "capmdp_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyInstance {
    inner: model::Instance,
}

#[pymethods]
impl PyInstance {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: model::instance_from_json(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyInstance { inner: model::load_instance(path).map_err(py_err)? })
    }

    /// Generated instance; `states` switches to an unrestricted random model.
    #[staticmethod]
    #[pyo3(signature = (n_scenarios, horizon, c, epsilon, seed=0, population=1000, mc_iterations=10_000, states=None))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        n_scenarios: usize,
        horizon: usize,
        c: f64,
        epsilon: f64,
        seed: u64,
        population: u64,
        mc_iterations: usize,
        states: Option<usize>,
    ) -> PyResult<Self> {
        let params = InstanceParams { n_scenarios, horizon, c, epsilon, seed, population };
        let inner = match states {
            Some(n) => capmdp::random_instance(n, &params),
            None => capmdp::chronic_care_instance(&params, mc_iterations),
        }
        .map_err(py_err)?;
        Ok(PyInstance { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        model::instance_to_json(&self.inner).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        model::save_instance(&self.inner, path).map_err(py_err)
    }

    fn single_scenario(&self, omega: usize) -> PyResult<Self> {
        if omega >= self.inner.num_scenarios() {
            return Err(PyValueError::new_err(format!("scenario {omega} out of range")));
        }
        Ok(PyInstance { inner: self.inner.single_scenario(omega) })
    }

    fn with_capacity_fraction(&self, c: f64) -> Self {
        PyInstance { inner: self.inner.with_capacity_fraction(c) }
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn num_scenarios(&self) -> usize {
        self.inner.num_scenarios()
    }

    #[getter]
    fn population(&self) -> u64 {
        self.inner.population
    }

    #[getter]
    fn capacities(&self) -> Vec<f64> {
        self.inner.capacities.clone()
    }

    #[getter]
    fn states(&self) -> Vec<String> {
        self.inner.states.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(states={}, T={}, scenarios={}, N={})",
            self.inner.num_states(),
            self.inner.horizon,
            self.inner.num_scenarios(),
            self.inner.population
        )
    }
}

/// Deterministic strategy: one 0/1 row per decision epoch.
#[pyclass(name = "Strategy", module = "capmdp_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyStrategy {
    inner: model::Strategy,
}

#[pymethods]
impl PyStrategy {
    #[new]
    fn new(rows: Vec<Vec<u8>>) -> PyResult<Self> {
        Ok(PyStrategy { inner: model::Strategy::from_rows(rows).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| py_err(e.into()))?;
        Ok(PyStrategy { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyStrategy { inner: model::load_strategy(path).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| py_err(e.into()))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        model::save_strategy(&self.inner, path).map_err(py_err)
    }

    fn rows(&self) -> Vec<Vec<u8>> {
        self.inner.rows()
    }

    fn hamming(&self, other: &PyStrategy) -> usize {
        self.inner.hamming(&other.inner)
    }

    fn is_stationary(&self) -> bool {
        self.inner.is_stationary()
    }

    fn __repr__(&self) -> String {
        format!("Strategy({:?})", self.inner.rows())
    }
}

fn strategy_obj(py: Python<'_>, s: Option<&model::Strategy>) -> PyResult<Py<PyAny>> {
    match s {
        Some(s) => Ok(Py::new(py, PyStrategy { inner: s.clone() })?.into_any()),
        None => Ok(py.None()),
    }
}

fn limits(max_nodes: Option<u64>, max_seconds: Option<f64>) -> SearchLimits {
    SearchLimits { max_nodes, max_seconds }
}

/// `U`, feasibility, first violation and identity diagnostics.
#[pyfunction]
#[pyo3(signature = (instance, strategy, trajectory=false))]
fn evaluate<'py>(py: Python<'py>, instance: &PyInstance, strategy: &PyStrategy, trajectory: bool) -> PyResult<Bound<'py, PyAny>> {
    let inst = &instance.inner;
    let res = py
        .detach(|| capmdp::evaluate_strategy(inst, &strategy.inner))
        .map_err(py_err)?;
    let mut v = res.to_json(trajectory);
    v["conservation_deviation"] = check_proposition1(inst, &res.trajectory).into();
    v["aggregated_capacity_slack"] = check_proposition2(inst, &res.trajectory).into();
    v["scenario_values"] = res.scenario_values.clone().into();
    to_py(py, &v)
}

/// Exact optimum; limit hits are reported through `status`.
#[pyfunction]
#[pyo3(signature = (instance, max_nodes=None, max_seconds=None, stationary=false))]
fn solve_exact<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    max_nodes: Option<u64>,
    max_seconds: Option<f64>,
    stationary: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let lim = limits(max_nodes, max_seconds);
    let res = py
        .detach(|| {
            if stationary {
                capmdp::solve_exact_stationary(inst, lim)
            } else {
                capmdp::solve_exact(inst, lim)
            }
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("status", json_to_py(py, &res.status)?)?;
    d.set_item("value", res.value)?;
    d.set_item("strategy", strategy_obj(py, res.strategy.as_ref())?)?;
    d.set_item("nodes_explored", res.nodes_explored)?;
    d.set_item("nodes_per_epoch", res.nodes_per_depth.clone())?;
    Ok(d)
}

#[pyfunction]
fn solve_padp<'py>(py: Python<'py>, instance: &PyInstance) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let res = py.detach(|| capmdp::solve_padp(inst)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("status", json_to_py(py, &res.status)?)?;
    d.set_item("value", res.value)?;
    d.set_item("strategy", strategy_obj(py, res.strategy().as_ref())?)?;
    d.set_item("alive_counts", res.alive_counts.clone())?;
    d.set_item("stage_seconds", res.stage_seconds.clone())?;
    Ok(d)
}

/// Nearest feasible strategy in Hamming distance.
#[pyfunction]
#[pyo3(signature = (instance, strategy, max_distance=analysis::DEFAULT_MAX_REPAIR_DISTANCE))]
fn repair<'py>(py: Python<'py>, instance: &PyInstance, strategy: &PyStrategy, max_distance: usize) -> PyResult<Bound<'py, PyDict>> {
    let inst = &instance.inner;
    let r = py
        .detach(|| analysis::repair_strategy(inst, &strategy.inner, max_distance))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("strategy", strategy_obj(py, Some(&r.strategy))?)?;
    d.set_item("distance", r.distance)?;
    d.set_item("value", r.value)?;
    d.set_item("fallback", r.fallback)?;
    Ok(d)
}

/// Analysis report as a dict (same keys as the JSON report).
#[pyfunction]
#[pyo3(signature = (instance, suite="all", solver="exact", grid="0.2:0.8:0.1", max_repair_distance=analysis::DEFAULT_MAX_REPAIR_DISTANCE))]
fn analyze<'py>(
    py: Python<'py>,
    instance: &PyInstance,
    suite: &str,
    solver: &str,
    grid: &str,
    max_repair_distance: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let suite: Suite = suite.parse().map_err(py_err)?;
    let solver: Solver = solver.parse().map_err(py_err)?;
    let grid = analysis::parse_grid(grid).map_err(py_err)?;
    let opts = AnalysisOptions { solver, max_repair_distance, ..AnalysisOptions::default() };
    let inst = &instance.inner;
    let report = py
        .detach(|| analysis::run_suite(inst, suite, &grid, &opts))
        .map_err(py_err)?;
    json_to_py(py, &report)
}

/// Empirical occupancy frequencies from a simulated cohort.
#[pyfunction]
#[pyo3(signature = (instance, strategy, samples, seed=0))]
fn simulate_cohort<'py>(py: Python<'py>, instance: &PyInstance, strategy: &PyStrategy, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let inst = &instance.inner;
    let traj = py
        .detach(|| capmdp::simulate_cohort(inst, &strategy.inner, samples, seed))
        .map_err(py_err)?;
    json_to_py(py, &traj)
}

#[pymodule]
fn capmdp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyStrategy>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(solve_exact, m)?)?;
    m.add_function(wrap_pyfunction!(solve_padp, m)?)?;
    m.add_function(wrap_pyfunction!(repair, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cohort, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    m.add("LimitExceededError", m.py().get_type::<LimitExceededError>())?;
    Ok(())
}
