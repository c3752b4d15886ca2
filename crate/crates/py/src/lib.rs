//! Python bindings: scenarios, the analytic model, the simulator, sweeps and
//! the layer-transfer planner.

use std::collections::BTreeSet;

use edgeswarm::cli::{self, ScenarioFile};
use edgeswarm::model::{self, ContainerImage, Layer, LayerId, SplitPolicy};
use edgeswarm::swarmproto;
use edgeswarm::{latency, sim, SimMode};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<SimMode> {
    match mode {
        "strict_barrier" => Ok(SimMode::StrictBarrier),
        "per_node_overlap" => Ok(SimMode::PerNodeOverlap),
        other => Err(value_err(format!("unknown mode {other:?}; use strict_barrier or per_node_overlap"))),
    }
}

/// Seconds spent establishing containers, delivering chunks, computing and
/// returning results.
#[pyclass(name = "DelayBreakdown", frozen, get_all, from_py_object)]
#[derive(Clone)]
struct PyDelayBreakdown {
    t_ce_s: f64,
    t_d_s: f64,
    t_c_s: f64,
    t_r_s: f64,
    t_total_s: f64,
}

impl From<latency::DelayBreakdown> for PyDelayBreakdown {
    fn from(b: latency::DelayBreakdown) -> Self {
        Self {
            t_ce_s: b.t_ce_s,
            t_d_s: b.t_d_s,
            t_c_s: b.t_c_s,
            t_r_s: b.t_r_s,
            t_total_s: b.t_total_s,
        }
    }
}

#[pymethods]
impl PyDelayBreakdown {
    #[new]
    fn new(t_ce_s: f64, t_d_s: f64, t_c_s: f64, t_r_s: f64) -> PyResult<Self> {
        latency::DelayBreakdown::new(t_ce_s, t_d_s, t_c_s, t_r_s)
            .map(Into::into)
            .map_err(value_err)
    }

    fn components(&self) -> (f64, f64, f64, f64) {
        (self.t_ce_s, self.t_d_s, self.t_c_s, self.t_r_s)
    }

    fn __repr__(&self) -> String {
        format!(
            "DelayBreakdown(t_ce_s={}, t_d_s={}, t_c_s={}, t_r_s={}, t_total_s={})",
            self.t_ce_s, self.t_d_s, self.t_c_s, self.t_r_s, self.t_total_s
        )
    }
}

#[pyclass(name = "RunReport", frozen, get_all)]
struct PyRunReport {
    mode: String,
    breakdown: PyDelayBreakdown,
    success: bool,
    deadline_expired: bool,
    /// Tab-separated event lines.
    trace: Vec<String>,
}

#[pymethods]
impl PyRunReport {
    fn summary(&self) -> String {
        let b = &self.breakdown;
        let d = latency::DelayBreakdown::new(b.t_ce_s, b.t_d_s, b.t_c_s, b.t_r_s).expect("components came from a run");
        cli::summary_line(&d, self.success)
    }
}

#[pyclass(name = "SweepRow", frozen, get_all)]
struct PySweepRow {
    capacity_kbps: f64,
    baseline: PyDelayBreakdown,
    cooperative: PyDelayBreakdown,
    savings_fraction: f64,
}

impl From<cli::SweepRow> for PySweepRow {
    fn from(r: cli::SweepRow) -> Self {
        Self {
            capacity_kbps: r.capacity_kbps,
            baseline: r.baseline.into(),
            cooperative: r.cooperative.into(),
            savings_fraction: r.savings_fraction,
        }
    }
}

#[pymethods]
impl PySweepRow {
    fn __repr__(&self) -> String {
        format!(
            "SweepRow(capacity_kbps={}, base_total={}, coop_total={}, savings={})",
            self.capacity_kbps, self.baseline.t_total_s, self.cooperative.t_total_s, self.savings_fraction
        )
    }
}

/// A resolved offloading experiment.
#[pyclass(name = "Scenario")]
struct PyScenario {
    inner: edgeswarm::Scenario,
}

#[pymethods]
impl PyScenario {
    /// The packaged two-node experiment.
    #[staticmethod]
    fn fig5() -> Self {
        Self { inner: cli::fig5_scenario() }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = ScenarioFile::parse(text)
            .and_then(|f| f.into_scenario())
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        match cli::load_scenario(path.as_ref()) {
            Ok(inner) => Ok(Self { inner }),
            Err(e @ cli::LoadError::Io { .. }) => Err(PyOSError::new_err(e.to_string())),
            Err(e) => Err(value_err(e)),
        }
    }

    #[getter]
    fn deadline_s(&self) -> f64 {
        self.inner.task.deadline_s
    }

    #[setter]
    fn set_deadline_s(&mut self, v: f64) {
        self.inner.task.deadline_s = v;
    }

    #[getter]
    fn frame_count(&self) -> u64 {
        self.inner.task.frame_count()
    }

    #[getter]
    fn node_ids(&self) -> Vec<String> {
        self.inner.nodes.iter().map(|n| n.node_id.to_string()).collect()
    }

    /// Every violation found, as `subject: field: message` strings.
    fn validate(&self) -> Vec<String> {
        match self.inner.validate() {
            Ok(()) => Vec::new(),
            Err(v) => v.iter().map(ToString::to_string).collect(),
        }
    }

    fn analytic(&self) -> PyResult<PyDelayBreakdown> {
        latency::analytic_scenario(&self.inner).map(Into::into).map_err(value_err)
    }

    #[pyo3(signature = (mode = "strict_barrier"))]
    fn run(&self, mode: &str) -> PyResult<PyRunReport> {
        let r = sim::run(&self.inner, parse_mode(mode)?).map_err(value_err)?;
        Ok(PyRunReport {
            mode: r.mode.to_string(),
            breakdown: r.breakdown.into(),
            success: r.success,
            deadline_expired: r.deadline_expired(),
            trace: r.trace.iter().map(ToString::to_string).collect(),
        })
    }

    /// Cooperative versus leader-only runs at each per-link capacity (kb/s).
    fn sweep(&self, capacities_kbps: Vec<f64>) -> PyResult<Vec<PySweepRow>> {
        cli::sweep_rows(&self.inner, &capacities_kbps)
            .map(|rows| rows.into_iter().map(Into::into).collect())
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(task={}, frames={}, nodes={:?})",
            self.inner.task.id,
            self.inner.task.frame_count(),
            self.node_ids()
        )
    }
}

/// The packaged sweep as CSV text.
#[pyfunction]
fn fig5_csv() -> PyResult<String> {
    let rows = cli::sweep_rows(&cli::fig5_scenario(), &cli::FIG5_CAPACITIES_KBPS).map_err(value_err)?;
    let mut buf = Vec::new();
    cli::write_sweep_csv(&rows, &mut buf).map_err(value_err)?;
    String::from_utf8(buf).map_err(value_err)
}

/// Splits a clip into `n` chunks; returns `(first_frame, end_frame, size_bits)`
/// per chunk, end exclusive.
#[pyfunction]
#[pyo3(signature = (duration_s, fps, size_mb, n, weights = None))]
fn split_task(duration_s: f64, fps: f64, size_mb: f64, n: usize, weights: Option<Vec<f64>>) -> PyResult<Vec<(u64, u64, f64)>> {
    let task = model::make_task(duration_s, fps, 0, 0, size_mb * model::BITS_PER_MB, f64::INFINITY, "f".into())
        .map_err(value_err)?;
    let policy = weights.map_or(SplitPolicy::Equal, SplitPolicy::Weighted);
    let chunks = model::split_task(&task, n, &policy).map_err(value_err)?;
    Ok(chunks
        .iter()
        .map(|c| (c.frame_range.first, c.frame_range.last, c.size_bits))
        .collect())
}

/// Layers a worker must receive, and their total size in bits.
///
/// `layers` lists the image's read-only layers as `(id, size_bits)`; `rw` is
/// the read-write layer.
#[pyfunction]
fn plan_layer_transfer(
    leader_layers: Vec<String>,
    worker_layers: Vec<String>,
    layers: Vec<(String, u64)>,
    rw: (String, u64),
) -> PyResult<(Vec<String>, u64)> {
    let image = ContainerImage::new(
        "image",
        layers.into_iter().map(|(id, bits)| Layer::read_only(id, bits)).collect(),
        Layer::read_write(rw.0, rw.1),
    )
    .map_err(value_err)?;
    let set = |v: Vec<String>| v.into_iter().map(LayerId::new).collect::<BTreeSet<_>>();
    let plan = swarmproto::plan_layer_transfer(&set(leader_layers), &set(worker_layers), &image).map_err(value_err)?;
    Ok((plan.layer_ids.iter().map(ToString::to_string).collect(), plan.total_bits))
}

/// Join token derived from `seed`.
#[pyfunction]
fn generate_token(seed: u64) -> String {
    swarmproto::generate_token(seed)
}

#[pymodule]
fn edgeswarm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyDelayBreakdown>()?;
    m.add_class::<PyRunReport>()?;
    m.add_class::<PySweepRow>()?;
    m.add_function(wrap_pyfunction!(fig5_csv, m)?)?;
    m.add_function(wrap_pyfunction!(split_task, m)?)?;
    m.add_function(wrap_pyfunction!(plan_layer_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(generate_token, m)?)?;
    m.add("SWEEP_HEADER", cli::SWEEP_HEADER)?;
    Ok(())
}
