//! Python bindings: parameter sets, the per-frame solvers and decision, and
//! the simulation drivers. Results come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList};
use serde::Serialize;
use swipt_core::allocator::{self, Allocation, Decision, StrategyResult};
use swipt_core::energy::EnergyBreakdown;
use swipt_core::oracle::{self, VerifyOptions};
use swipt_core::sim::{self, SweepAxis, SweepOptions};
use swipt_core::{channel, lambert, params, SystemParams};

fn err(e: swipt_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn toml_to_py<'py>(py: Python<'py>, v: &toml::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        toml::Value::Boolean(b) => PyBool::new(py, *b).to_owned().into_any(),
        toml::Value::Integer(i) => i.into_pyobject(py)?.into_any(),
        toml::Value::Float(f) => f.into_pyobject(py)?.into_any(),
        toml::Value::String(s) => s.into_pyobject(py)?.into_any(),
        toml::Value::Array(xs) => {
            let items = xs.iter().map(|x| toml_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        toml::Value::Table(t) => table_to_py(py, t)?.into_any(),
        toml::Value::Datetime(d) => d.to_string().into_pyobject(py)?.into_any(),
    })
}

fn table_to_py<'py>(py: Python<'py>, t: &toml::Table) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in t {
        d.set_item(k, toml_to_py(py, v)?)?;
    }
    Ok(d)
}

/// Flat struct to dict through its serde field names.
fn record<'py, T: Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyDict>> {
    let t = toml::Table::try_from(x).map_err(|e| PyValueError::new_err(e.to_string()))?;
    table_to_py(py, &t)
}

fn allocation_dict<'py>(py: Python<'py>, a: &Allocation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tau_e", a.tau_e)?;
    d.set_item("tau_d", a.tau_d)?;
    d.set_item("tau_c", a.tau_c)?;
    d.set_item("tau_o", a.tau_o)?;
    d.set_item("p_o", a.p_o)?;
    d.set_item("i_o", a.i_o)?;
    d.set_item("strategy", a.strategy.to_string())?;
    Ok(d)
}

fn breakdown_into(d: &Bound<'_, PyDict>, b: &EnergyBreakdown) -> PyResult<()> {
    d.set_item("e_decode", b.e_decode)?;
    d.set_item("e_compute", b.e_compute)?;
    d.set_item("e_offload", b.e_offload)?;
    d.set_item("e_harvest", b.e_harvest)?;
    d.set_item("cost", b.cost)
}

fn strategy_dict<'py>(py: Python<'py>, r: &StrategyResult) -> PyResult<Bound<'py, PyDict>> {
    match r {
        StrategyResult::Feasible { allocation, breakdown } => {
            let d = allocation_dict(py, allocation)?;
            d.set_item("feasible", true)?;
            breakdown_into(&d, breakdown)?;
            Ok(d)
        }
        StrategyResult::Infeasible(why) => {
            let d = PyDict::new(py);
            d.set_item("feasible", false)?;
            d.set_item("reason", why.to_string())?;
            Ok(d)
        }
    }
}

fn decision_dict<'py>(py: Python<'py>, dec: &Decision) -> PyResult<Bound<'py, PyDict>> {
    let d = allocation_dict(py, &dec.allocation)?;
    breakdown_into(&d, &dec.breakdown)?;
    d.set_item("local", strategy_dict(py, &dec.local)?)?;
    d.set_item("offload", strategy_dict(py, &dec.offload)?)?;
    d.set_item("preferred", dec.preferred().map(|s| s.to_string()))?;
    d.set_item("sides_agree", dec.sides_agree)?;
    Ok(d)
}

/// System parameters. Keyword arguments override the defaults and are
/// validated; unknown names raise `ValueError`.
#[pyclass(name = "Params", module = "swipt", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: SystemParams,
}

fn toml_literal(v: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(b) = v.cast::<PyBool>() {
        return Ok(b.is_true().to_string());
    }
    if let Ok(i) = v.extract::<i64>() {
        return Ok(i.to_string());
    }
    let f: f64 = v.extract()?;
    Ok(if f.is_nan() {
        "nan".into()
    } else if f.is_infinite() {
        if f > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{f:?}")
    })
}

fn overrides(base: &str, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<String> {
    let mut keys = Vec::new();
    let mut tail = String::new();
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            let k: String = k.extract()?;
            tail.push_str(&format!("\n{k} = {}", toml_literal(&v)?));
            keys.push(k);
        }
    }
    // drop base lines for overridden keys so the document has no duplicates
    let mut src: String = base
        .lines()
        .filter(|line| !keys.iter().any(|k| line.split('=').next().is_some_and(|lhs| lhs.trim() == k)))
        .flat_map(|line| [line, "\n"])
        .collect();
    src.push_str(&tail);
    Ok(src)
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = params::load_params(&overrides("", kwargs)?).map_err(err)?;
        Ok(Self { inner })
    }

    /// Parses a TOML parameter file body.
    #[staticmethod]
    fn from_toml(source: &str) -> PyResult<Self> {
        Ok(Self {
            inner: params::load_params(source).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_config_string()
    }

    /// Copy with the given keys changed.
    #[pyo3(signature = (**kwargs))]
    fn replace(&self, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = params::load_params(&overrides(&self.inner.to_config_string(), kwargs)?).map_err(err)?;
        Ok(Self { inner })
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        record(py, &self.inner)
    }

    fn __getattr__<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        match self.as_dict(py)?.get_item(name)? {
            Some(v) => Ok(v),
            None => Err(pyo3::exceptions::PyAttributeError::new_err(name.to_string())),
        }
    }

    #[getter]
    fn bits_per_frame(&self) -> f64 {
        self.inner.bits_per_frame()
    }

    #[getter]
    fn energy_per_op(&self) -> f64 {
        self.inner.energy_per_op()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Params({:?})", self.inner)
    }
}

#[pyfunction]
fn lambert_w0(x: f64) -> PyResult<f64> {
    lambert::lambert_w0(x).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (d, f_c_mhz = 2400.0, n_coeff = 22.0))]
fn pathloss_db(d: f64, f_c_mhz: f64, n_coeff: f64) -> PyResult<f64> {
    channel::pathloss_db(d, f_c_mhz, n_coeff).map_err(err)
}

#[pyfunction]
fn db_to_linear(x: f64) -> f64 {
    params::db_to_linear(x)
}

/// One channel draw for trial `trial` of master seed `seed`.
#[pyfunction]
#[pyo3(signature = (params, seed, trial = 0))]
fn draw_channel<'py>(py: Python<'py>, params: &PyParams, seed: u64, trial: u64) -> PyResult<Bound<'py, PyDict>> {
    let ch = channel::realize_channels(&params.inner, &mut channel::trial_rng(seed, trial)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("eff_gain_down", ch.eff_gain_down)?;
    d.set_item("gain_offload", ch.gain_offload)?;
    d.set_item("h", ch.h.iter().map(|x| (x.re, x.im)).collect::<Vec<_>>())?;
    d.set_item("g", (ch.g.re, ch.g.im))?;
    Ok(d)
}

#[pyfunction]
fn solve_local<'py>(py: Python<'py>, params: &PyParams, gain_down: f64) -> PyResult<Bound<'py, PyDict>> {
    strategy_dict(py, &allocator::solve_local(&params.inner, gain_down))
}

#[pyfunction]
fn solve_offload<'py>(py: Python<'py>, params: &PyParams, gain_down: f64, gain_offload: f64) -> PyResult<Bound<'py, PyDict>> {
    strategy_dict(py, &allocator::solve_offload(&params.inner, gain_down, gain_offload))
}

/// Cheaper feasible strategy if `stored` covers its cost, else harvest only.
#[pyfunction]
#[pyo3(signature = (params, gain_down, gain_offload, stored = f64::INFINITY))]
fn decide<'py>(py: Python<'py>, params: &PyParams, gain_down: f64, gain_offload: f64, stored: f64) -> PyResult<Bound<'py, PyDict>> {
    decision_dict(py, &allocator::decide(&params.inner, gain_down, gain_offload, stored))
}

#[pyfunction]
fn run_trace<'py>(py: Python<'py>, params: &PyParams, frames: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let trace = py.detach(|| sim::run_trace(&params.inner, frames, seed)).map_err(err)?;
    let rows = PyList::empty(py);
    for f in &trace.frames {
        let d = allocation_dict(py, &f.allocation)?;
        d.set_item("frame", f.frame_index)?;
        d.set_item("e_stored_begin", f.e_stored_begin)?;
        d.set_item("e_stored_end", f.e_stored_end())?;
        d.set_item("i_s", f.i_s)?;
        d.set_item("cost", f.cost)?;
        d.set_item("e_harvest", f.e_harvest)?;
        d.set_item("e_harvest_full", f.e_harvest_full)?;
        rows.append(d)?;
    }
    let out = PyDict::new(py);
    out.set_item("frames", rows)?;
    out.set_item("summary", record(py, &trace.summary)?)?;
    out.set_item("audit_ok", trace.audit().is_ok())?;
    Ok(out)
}

#[pyfunction]
fn monte_carlo<'py>(py: Python<'py>, params: &PyParams, frames: usize, trials: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let mc = py.detach(|| sim::monte_carlo(&params.inner, frames, trials, seed)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("n_trials", mc.n_trials)?;
    out.set_item("n_frames", mc.n_frames)?;
    out.set_item("outage_probability", mc.outage_probability)?;
    out.set_item("outage_half_width", mc.outage_half_width)?;
    out.set_item("mean_net_cost", mc.mean_net_cost)?;
    out.set_item("mean_harvested", mc.mean_harvested)?;
    let per_frame = mc.per_frame.iter().map(|f| record(py, f)).collect::<PyResult<Vec<_>>>()?;
    out.set_item("per_frame", per_frame)?;
    Ok(out)
}

/// One dict per value. `axis` is `K`, `dt`, `ds` or the parameter name.
#[pyfunction]
#[pyo3(signature = (params, axis, values, trials = 1000, frames = 0, seed = 0))]
fn sweep<'py>(
    py: Python<'py>,
    params: &PyParams,
    axis: &str,
    values: Vec<f64>,
    trials: usize,
    frames: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let axis: SweepAxis = axis.parse().map_err(err)?;
    let opts = SweepOptions {
        draws: trials,
        outage_trials: if frames > 0 { trials } else { 0 },
        frames,
    };
    let rows = py.detach(|| sim::sweep(&params.inner, axis, &values, &opts, seed)).map_err(err)?;
    rows.iter().map(|r| record(py, r)).collect()
}

/// Closed forms against the brute-force oracle; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (params, instances = 100, seed = 0, lambert_points = 1000))]
fn verify<'py>(py: Python<'py>, params: &PyParams, instances: usize, seed: u64, lambert_points: usize) -> PyResult<Bound<'py, PyDict>> {
    let opts = VerifyOptions {
        instances,
        lambert_points,
        seed,
        tau_o_scale: 1.0,
    };
    let report = py.detach(|| oracle::verify(&params.inner, &opts));
    let out = PyDict::new(py);
    out.set_item("all_pass", report.all_pass())?;
    out.set_item("summary", report.summary())?;
    out.set_item("rows", report.rows.len())?;
    let failures = report.failures().map(|r| record(py, r)).collect::<PyResult<Vec<_>>>()?;
    out.set_item("failures", failures)?;
    Ok(out)
}

#[pymodule]
fn swipt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(lambert_w0, m)?)?;
    m.add_function(wrap_pyfunction!(pathloss_db, m)?)?;
    m.add_function(wrap_pyfunction!(db_to_linear, m)?)?;
    m.add_function(wrap_pyfunction!(draw_channel, m)?)?;
    m.add_function(wrap_pyfunction!(solve_local, m)?)?;
    m.add_function(wrap_pyfunction!(solve_offload, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(run_trace, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
