//! Python bindings. Documents cross the boundary as plain dicts and lists
//! shaped like the HTTP API's JSON.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use darkit_core::extract::{extract_static, get_code, to_display_tree};
use darkit_core::flow::FlowGraph;
use darkit_core::forge::{CommandRequest, SearchSpace};
use darkit_core::patch::{validate_patch, CodePatch};
use darkit_core::registry::EntryKind;
use darkit_core::spikedef::parse_str;
use darkit_core::tracker::{ExportFormat, RunFilter, SynthSpec, DEFAULT_MAX_POINTS};
use darkit_core::workbench::{self, PatchRequest, WorkbenchError};

create_exception!(darkit, DarkitError, PyException, "A domain error, formatted as `[CODE] message`.");

fn fail(e: impl Into<WorkbenchError>) -> PyErr {
    let e = e.into();
    DarkitError::new_err(format!("[{}] {}", e.code(), e.detailed_message()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DarkitError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| DarkitError::new_err(format!("[INVALID] {e}")))
}

/// Display tree of a SpikeDef source.
#[pyfunction]
#[pyo3(signature = (source, root=None))]
fn extract<'py>(py: Python<'py>, source: &str, root: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let index = parse_str(source).map_err(fail)?;
    let tree = extract_static(&index, root).map_err(fail)?;
    to_py(py, &to_display_tree(&tree))
}

/// Source text of one module.
#[pyfunction]
#[pyo3(signature = (source, module_id, root=None))]
fn module_code(source: &str, module_id: &str, root: Option<&str>) -> PyResult<String> {
    let tree = extract_static(&parse_str(source).map_err(fail)?, root).map_err(fail)?;
    Ok(get_code(&tree, module_id).map_err(fail)?.text)
}

/// Validation report for replacing `module_id`'s code with `new_text`.
#[pyfunction]
#[pyo3(signature = (source, module_id, new_text, root=None))]
fn check_patch<'py>(
    py: Python<'py>,
    source: &str,
    module_id: &str,
    new_text: &str,
    root: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let tree = extract_static(&parse_str(source).map_err(fail)?, root).map_err(fail)?;
    let patch = CodePatch::new(&tree.model_name, module_id, new_text, "", "").map_err(fail)?;
    to_py(py, &validate_patch(&tree, &patch).map_err(fail)?)
}

/// SpikeDef source for a flow graph document.
#[pyfunction]
fn compile_flow(graph: &Bound<'_, PyAny>) -> PyResult<String> {
    let graph: FlowGraph = from_py(graph)?;
    Ok(workbench::flow_compile(&graph).map_err(fail)?.source)
}

/// A data directory: registry, patchable models and run tracker.
#[pyclass(frozen)]
struct Workbench {
    inner: workbench::Workbench,
}

#[pymethods]
impl Workbench {
    #[new]
    fn new(data_dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: workbench::Workbench::open(data_dir).map_err(fail)?,
        })
    }

    fn model_tree<'py>(&self, py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.model_tree(name).map_err(fail)?)
    }

    fn module_code(&self, name: &str, module_id: &str) -> PyResult<String> {
        Ok(self.inner.module_code(name, module_id).map_err(fail)?.text)
    }

    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (name, module_id, new_text, author=String::new(), note=String::new(), base_version=None))]
    fn apply_patch<'py>(
        &self,
        py: Python<'py>,
        name: &str,
        module_id: &str,
        new_text: String,
        author: String,
        note: String,
        base_version: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let req = PatchRequest {
            module_id: None,
            new_text,
            author,
            note,
            base_version,
        };
        to_py(py, &self.inner.apply_patch(name, module_id, &req).map_err(fail)?)
    }

    fn render_command(&self, request: &Bound<'_, PyAny>) -> PyResult<String> {
        let req: CommandRequest = from_py(request)?;
        Ok(self.inner.render_command(&req).map_err(fail)?.command)
    }

    fn expand_grid(&self, space: &Bound<'_, PyAny>) -> PyResult<Vec<String>> {
        let space: SearchSpace = from_py(space)?;
        Ok(self.inner.expand_grid(&space).map_err(fail)?.commands)
    }

    /// Records a synthetic run and returns its id.
    #[pyo3(signature = (model, steps, seed=0, noise=0.0))]
    fn simulate(&self, py: Python<'_>, model: String, steps: u64, seed: u64, noise: f64) -> PyResult<String> {
        let spec = SynthSpec {
            model,
            steps,
            seed,
            noise,
            config: Default::default(),
        };
        let record = py.detach(|| self.inner.tracker().synth_run(&spec)).map_err(fail)?;
        Ok(record.run_id)
    }

    /// Appends NDJSON events; returns the ingest report.
    fn ingest<'py>(&self, py: Python<'py>, run_id: &str, ndjson: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.tracker().ingest_events(run_id, ndjson).map_err(fail)?)
    }

    #[pyo3(signature = (model=None))]
    fn runs<'py>(&self, py: Python<'py>, model: Option<String>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.tracker().list_runs(&RunFilter { model, status: None }))
    }

    /// `(step, value)` pairs of one metric.
    #[pyo3(signature = (run_id, metric, max_points=DEFAULT_MAX_POINTS))]
    fn series(&self, run_id: &str, metric: &str, max_points: usize) -> PyResult<Vec<(u64, f64)>> {
        let series = self.inner.tracker().get_series(run_id, metric, max_points).map_err(fail)?;
        Ok(series.points.iter().map(|p| (p.step, p.value)).collect())
    }

    #[pyo3(signature = (run_ids, metric, max_points=DEFAULT_MAX_POINTS))]
    fn compare<'py>(&self, py: Python<'py>, run_ids: Vec<String>, metric: &str, max_points: usize) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.tracker().compare_runs(&run_ids, metric, max_points).map_err(fail)?)
    }

    #[pyo3(signature = (run_id, format="json"))]
    fn export(&self, run_id: &str, format: &str) -> PyResult<String> {
        let format: ExportFormat = format.parse().map_err(fail)?;
        self.inner.tracker().export_run(run_id, format).map_err(fail)
    }

    #[pyo3(signature = (kind=None))]
    fn registry<'py>(&self, py: Python<'py>, kind: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        let kind = match kind {
            None => None,
            Some(k) => Some(k.parse::<EntryKind>().map_err(fail)?),
        };
        to_py(py, &self.inner.registry().list_entries(kind))
    }
}

#[pymodule]
fn darkit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DarkitError", m.py().get_type::<DarkitError>())?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(module_code, m)?)?;
    m.add_function(wrap_pyfunction!(check_patch, m)?)?;
    m.add_function(wrap_pyfunction!(compile_flow, m)?)?;
    m.add_class::<Workbench>()?;
    Ok(())
}
