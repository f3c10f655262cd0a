//! Python bindings: an `Engine` over a snapshot or CSV inputs, plus the
//! cleaning, scaling and projection primitives.
//!
//! Query methods go through the same request handler as the HTTP service,
//! so results equal the corresponding `/api/*` JSON bodies.

use std::path::PathBuf;

use geocircle_core::api::{self, ApiDefaults, ApiError, Endpoint, Format};
use geocircle_core::ingest::{self, IngestReport};
use geocircle_core::model::{ScaleMethod, ScalingSpec};
use geocircle_core::query::{window_value, Aggregation};
use geocircle_core::{scaling, snapshot, spatial, IngestPaths, RegionId, TimeWindow, VariableKind};
use pyo3::exceptions::{PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyTuple};

fn api_err(e: ApiError) -> PyErr {
    match e.status {
        404 => PyKeyError::new_err(e.message),
        _ => PyValueError::new_err(e.message),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, body: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    let text = std::str::from_utf8(body).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Renders a keyword value the way a query string would carry it.
fn param_text(v: &Bound<'_, PyAny>) -> PyResult<String> {
    if v.is_instance_of::<PyBool>() {
        return Ok(if v.extract::<bool>()? { "true" } else { "false" }.to_string());
    }
    if v.is_instance_of::<PyList>() || v.is_instance_of::<PyTuple>() {
        let parts: Vec<String> = v.try_iter()?.map(|item| param_text(&item?)).collect::<PyResult<_>>()?;
        return Ok(parts.join(","));
    }
    Ok(v.str()?.to_string())
}

fn params_of(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            if v.is_none() {
                continue;
            }
            out.push((k.extract::<String>()?, param_text(&v)?));
        }
    }
    Ok(out)
}

fn parse_agg(s: &str) -> PyResult<Aggregation> {
    match s {
        "cumulative" => Ok(Aggregation::Cumulative),
        "daily_avg" | "daily_average" => Ok(Aggregation::DailyAverage),
        other => Err(PyValueError::new_err(format!("unknown aggregation {other:?}"))),
    }
}

#[pyclass(name = "Engine", module = "geocircle", frozen)]
struct PyEngine {
    engine: geocircle_core::Engine,
    report: Option<IngestReport>,
}

#[pymethods]
impl PyEngine {
    /// Loads the snapshot written by `geocircle ingest --out DIR`.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let engine = geocircle_core::Engine::load_dir(&dir).map_err(|e| PyOSError::new_err(e.to_string()))?;
        Ok(PyEngine { engine, report: None })
    }

    /// Ingests JHU-layout CSVs directly.
    #[staticmethod]
    #[pyo3(signature = (*, confirmed=None, deaths=None, recovered=None, vaccinations=None, population=None, boundaries=None))]
    fn from_csv(
        confirmed: Option<PathBuf>,
        deaths: Option<PathBuf>,
        recovered: Option<PathBuf>,
        vaccinations: Option<PathBuf>,
        population: Option<PathBuf>,
        boundaries: Option<PathBuf>,
    ) -> PyResult<Self> {
        let paths = IngestPaths {
            confirmed,
            deaths,
            recovered,
            vaccinations,
            population,
            boundaries,
        };
        let (dataset, report) = geocircle_core::ingest_files(&paths).map_err(value_err)?;
        Ok(PyEngine {
            engine: geocircle_core::Engine::new(dataset),
            report: Some(report),
        })
    }

    /// Writes the snapshot and ingest report into `dir`.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        let report = self.report.as_ref().ok_or_else(|| PyValueError::new_err("engine was loaded from a snapshot; nothing to save"))?;
        snapshot::write_dir(&dir, self.engine.dataset(), report).map_err(|e| PyOSError::new_err(e.to_string()))
    }

    #[getter]
    fn version(&self) -> &str {
        self.engine.version()
    }

    /// Ingest report as a dict, or `None` for snapshot-loaded engines.
    #[getter]
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyAny>>> {
        match &self.report {
            Some(r) => Ok(Some(from_json(py, &serde_json::to_vec(r).map_err(value_err)?)?)),
            None => Ok(None),
        }
    }

    /// Raw request against any endpoint; returns `str` (CSV) or parsed JSON.
    #[pyo3(signature = (endpoint, format="json", **kwargs))]
    fn request<'py>(&self, py: Python<'py>, endpoint: &str, format: &str, kwargs: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyAny>> {
        let endpoint: Endpoint = endpoint.parse().map_err(api_err)?;
        let format: Format = format.parse().map_err(api_err)?;
        let params = params_of(kwargs)?;
        let body = py
            .detach(|| api::handle(&self.engine, &ApiDefaults::default(), endpoint, &params, format))
            .map_err(api_err)?;
        match format {
            Format::Json => from_json(py, &body),
            Format::Csv => Ok(String::from_utf8(body).map_err(value_err)?.into_pyobject(py)?.into_any()),
        }
    }

    fn meta<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        self.request(py, "meta", "json", None)
    }

    #[pyo3(signature = (**kwargs))]
    fn regions<'py>(&self, py: Python<'py>, kwargs: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyAny>> {
        self.request(py, "regions", "json", kwargs)
    }

    #[pyo3(signature = (**kwargs))]
    fn frame<'py>(&self, py: Python<'py>, kwargs: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyAny>> {
        self.request(py, "frame", "json", kwargs)
    }

    #[pyo3(signature = (focus, baseline=None, **kwargs))]
    fn series<'py>(
        &self,
        py: Python<'py>,
        focus: &str,
        baseline: Option<&str>,
        kwargs: Option<&Bound<'py, PyDict>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kw = kwargs.cloned().unwrap_or_else(|| PyDict::new(py));
        kw.set_item("focus", focus)?;
        kw.set_item("baseline", baseline)?;
        self.request(py, "series", "json", Some(&kw))
    }

    #[pyo3(signature = (lat, lon, **kwargs))]
    fn pick<'py>(&self, py: Python<'py>, lat: f64, lon: f64, kwargs: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyAny>> {
        let kw = kwargs.cloned().unwrap_or_else(|| PyDict::new(py));
        kw.set_item("lat", lat)?;
        kw.set_item("lon", lon)?;
        self.request(py, "pick", "json", Some(&kw))
    }

    #[pyo3(signature = (metric, value, op="ge", **kwargs))]
    fn threshold<'py>(
        &self,
        py: Python<'py>,
        metric: &str,
        value: f64,
        op: &str,
        kwargs: Option<&Bound<'py, PyDict>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let kw = kwargs.cloned().unwrap_or_else(|| PyDict::new(py));
        kw.set_item("metric", metric)?;
        kw.set_item("value", value)?;
        kw.set_item("op", op)?;
        self.request(py, "threshold", "json", Some(&kw))
    }

    /// Window value of one series between two ISO dates, inclusive.
    #[pyo3(signature = (region, variable, start, end, agg="cumulative"))]
    fn window_value(&self, region: &str, variable: &str, start: &str, end: &str, agg: &str) -> PyResult<f64> {
        let ds = self.engine.dataset();
        let cal = ds.calendar();
        let day = |s: &str| -> PyResult<u32> { cal.day_index(s.parse().map_err(value_err)?).map_err(value_err) };
        let window = TimeWindow::new(day(start)?, day(end)?, cal.n_days).map_err(value_err)?;
        let region: RegionId = region.parse().map_err(value_err)?;
        let variable: VariableKind = variable.parse().map_err(value_err)?;
        window_value(ds, &region, variable, window, parse_agg(agg)?).map_err(value_err)
    }
}

/// Backward minimum envelope of a raw cumulative series. Returns the
/// cleaned values and the number of adjusted cells.
#[pyfunction]
fn clean_series(raw: Vec<i64>) -> (Vec<u64>, usize) {
    let cleaned = ingest::clean_series(&raw);
    (cleaned.values, cleaned.adjusted)
}

/// Clamped pixel radius for `value`.
#[pyfunction]
#[pyo3(signature = (value, reference=1.0, method="flannery", factor=1.0, base_px=40.0, r_min_px=2.0, r_max_px=120.0))]
fn radius(value: f64, reference: f64, method: &str, factor: f64, base_px: f64, r_min_px: f64, r_max_px: f64) -> PyResult<f64> {
    let spec = ScalingSpec {
        method: method.parse::<ScaleMethod>().map_err(value_err)?,
        base_radius_px: base_px,
        reference_value: reference,
        user_factor: factor,
        r_min_px,
        r_max_px,
    };
    scaling::radius(value, &spec).map_err(value_err)
}

/// Web-Mercator pixel coordinates of a point at a zoom level.
#[pyfunction]
fn project(lat: f64, lon: f64, zoom: f64) -> PyResult<(f64, f64)> {
    spatial::project(lat, lon, zoom).map_err(value_err)
}

/// Great-circle distance in kilometres.
#[pyfunction]
fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    spatial::haversine_km(lat1, lon1, lat2, lon2)
}

#[pymodule]
fn geocircle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEngine>()?;
    m.add_function(wrap_pyfunction!(clean_series, m)?)?;
    m.add_function(wrap_pyfunction!(radius, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(haversine_km, m)?)?;
    Ok(())
}
