//! Python bindings for the news-flow gravity model.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use chrono::NaiveDate;
use newsgravity::analyze::{pca as run_pca, ward_cluster};
use newsgravity::countglm::{self, Family};
use newsgravity::covariates::{
    build_design, build_design_with_offsets, read_countries_csv, read_dyads_csv, read_media_csv, ModelSpec, OffsetMode,
    OffsetSource, Term,
};
use newsgravity::estimate::{self, SimOffsets, SimParams};
use newsgravity::newscube::{self, read_items_csv, read_items_jsonl, UnknownCountryPolicy};
use newsgravity::{DesignMatrix, Layer, WeekCalendar};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn open(path: &PathBuf) -> PyResult<File> {
    File::open(path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))
}

fn calendar(start: &str, weeks: usize) -> PyResult<WeekCalendar> {
    let date = NaiveDate::parse_from_str(start, "%Y-%m-%d").map_err(err)?;
    WeekCalendar::new(date, weeks).map_err(err)
}

/// Country attributes, dyads and media outlets.
#[pyclass(name = "Covariates", module = "newsgravity", skip_from_py_object)]
#[derive(Clone)]
struct PyCovariates {
    inner: newsgravity::covariates::Covariates,
}

#[pymethods]
impl PyCovariates {
    #[staticmethod]
    fn from_csv(countries: PathBuf, dyads: PathBuf, media: PathBuf) -> PyResult<Self> {
        let c = read_countries_csv(open(&countries)?).map_err(err)?;
        let d = read_dyads_csv(open(&dyads)?, &c).map_err(err)?;
        let m = read_media_csv(open(&media)?).map_err(err)?;
        Ok(Self {
            inner: newsgravity::covariates::Covariates {
                countries: c,
                dyads: d,
                media: m,
            },
        })
    }

    /// A random world, deterministic in `seed`.
    #[staticmethod]
    #[pyo3(signature = (n_countries, n_media, seed=0))]
    fn synthetic(n_countries: usize, n_media: usize, seed: u64) -> PyResult<Self> {
        let w = estimate::synthetic_world(n_countries, n_media, seed).map_err(err)?;
        Ok(Self { inner: w.covariates })
    }

    #[getter]
    fn countries(&self) -> Vec<String> {
        self.inner.countries.codes()
    }

    #[getter]
    fn media(&self) -> Vec<String> {
        self.inner.media.iter().map(|m| m.media_code.clone()).collect()
    }
}

/// Media × week × country story counts.
#[pyclass(name = "NewsCube", module = "newsgravity", skip_from_py_object)]
#[derive(Clone)]
struct PyCube {
    inner: newscube::NewsCube,
}

#[pymethods]
impl PyCube {
    /// Builds the cube from a JSONL or CSV file of tagged items.
    #[staticmethod]
    #[pyo3(signature = (items, covariates, start="2015-01-05", weeks=52))]
    fn from_items(items: PathBuf, covariates: &PyCovariates, start: &str, weeks: usize) -> PyResult<Self> {
        let raw = match items.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json" | "ndjson") => read_items_jsonl(BufReader::new(open(&items)?)),
            _ => read_items_csv(open(&items)?),
        }
        .map_err(err)?;
        let media = covariates.inner.media.iter().map(|m| m.media_code.clone()).collect();
        let (cube, _) = newscube::build_cube_parallel(
            &raw,
            calendar(start, weeks)?,
            media,
            covariates.inner.countries.codes(),
            UnknownCountryPolicy::Reject,
        )
        .map_err(err)?;
        Ok(Self {
            inner: cube.weighted_cube().0,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.n_media(), self.inner.n_weeks(), self.inner.n_countries())
    }

    #[getter]
    fn media(&self) -> Vec<String> {
        self.inner.media().to_vec()
    }

    #[getter]
    fn countries(&self) -> Vec<String> {
        self.inner.countries().to_vec()
    }

    #[pyo3(signature = (media, week, country, layer="raw"))]
    fn get(&self, media: &str, week: usize, country: &str, layer: &str) -> PyResult<f64> {
        let m = self.inner.media_index(media).ok_or_else(|| err(format!("unknown media {media}")))?;
        let p = self.inner.country_index(country).ok_or_else(|| err(format!("unknown country {country}")))?;
        self.inner.get(layer.parse().map_err(err)?, m, week, p).map_err(err)
    }

    /// Flat cell values in media, week, country order.
    #[pyo3(signature = (layer="raw"))]
    fn values(&self, layer: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.layer(layer.parse().map_err(err)?).map_err(err)?.to_vec())
    }

    #[pyo3(signature = (layer="raw"))]
    fn grand_total(&self, layer: &str) -> PyResult<f64> {
        self.inner.grand_total(layer.parse().map_err(err)?).map_err(err)
    }
}

/// A fitted count regression.
#[pyclass(name = "FitResult", module = "newsgravity")]
struct PyFit {
    inner: countglm::FitResult,
}

#[pymethods]
impl PyFit {
    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.as_str()
    }
    #[getter]
    fn terms(&self) -> Vec<String> {
        self.inner.terms.clone()
    }
    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients.clone()
    }
    #[getter]
    fn std_errors(&self) -> Vec<f64> {
        self.inner.std_errors.clone()
    }
    #[getter]
    fn z_values(&self) -> Vec<f64> {
        self.inner.z_values.clone()
    }
    #[getter]
    fn p_values(&self) -> Vec<f64> {
        self.inner.p_values.clone()
    }
    #[getter]
    fn theta(&self) -> Option<f64> {
        self.inner.theta
    }
    #[getter]
    fn log_likelihood(&self) -> f64 {
        self.inner.log_likelihood
    }
    #[getter]
    fn aic(&self) -> f64 {
        self.inner.aic
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn coefficient(&self, term: &str) -> Option<f64> {
        self.inner.coefficient(term)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(family={}, terms={}, aic={:.3}, converged={})",
            self.inner.family,
            self.inner.terms.len(),
            self.inner.aic,
            self.inner.converged
        )
    }
}

fn spec(family: &str, layer: &str, include_home: bool, kickoff: bool, estimate_offset: bool) -> PyResult<ModelSpec> {
    let mut s = ModelSpec {
        family: family.parse().map_err(err)?,
        response_layer: layer.parse().map_err(err)?,
        include_home,
        offset_mode: if estimate_offset { OffsetMode::Estimated } else { OffsetMode::Fixed },
        ..Default::default()
    };
    if !kickoff {
        s = s.without(Term::Kickoff);
    }
    Ok(s)
}

fn design(cube: &PyCube, cov: &PyCovariates, spec: &ModelSpec, offsets: Option<Vec<f64>>) -> PyResult<DesignMatrix> {
    match offsets {
        Some(o) => build_design_with_offsets(&cube.inner, &cov.inner, spec, &OffsetSource::Supplied(o)),
        None => build_design(&cube.inner, &cov.inner, spec),
    }
    .map_err(err)
}

/// Global fit of the gravity model.
#[pyfunction]
#[pyo3(signature = (cube, covariates, family="negbin", layer="weighted", include_home=false, kickoff=true, estimate_offset=false, offsets=None))]
#[allow(clippy::too_many_arguments)]
fn fit(
    py: Python<'_>,
    cube: &PyCube,
    covariates: &PyCovariates,
    family: &str,
    layer: &str,
    include_home: bool,
    kickoff: bool,
    estimate_offset: bool,
    offsets: Option<Vec<f64>>,
) -> PyResult<PyFit> {
    let s = spec(family, layer, include_home, kickoff, estimate_offset)?;
    let d = design(cube, covariates, &s, offsets)?;
    let r = py.detach(|| countglm::fit(&d, s.family));
    r.map(|inner| PyFit { inner }).map_err(err)
}

/// Fits a count model to an explicit design: `x` holds one row per observation.
#[pyfunction]
#[pyo3(signature = (x, y, columns, family="poisson", offset=None))]
fn fit_matrix(x: Vec<Vec<f64>>, y: Vec<f64>, columns: Vec<String>, family: &str, offset: Option<Vec<f64>>) -> PyResult<PyFit> {
    let family: Family = family.parse().map_err(err)?;
    let d = DesignMatrix::from_parts(columns, x.into_iter().flatten().collect(), y, offset, None).map_err(err)?;
    countglm::fit(&d, family).map(|inner| PyFit { inner }).map_err(err)
}

/// Draws a cube from known parameters; returns the cube and the log offsets
/// (one per media-week) to refit it with.
#[pyfunction]
#[pyo3(signature = (covariates, coefficients=None, theta=Some(0.3), weeks=52, row_total=200.0, seed=0))]
fn simulate(
    covariates: &PyCovariates,
    coefficients: Option<std::collections::BTreeMap<String, f64>>,
    theta: Option<f64>,
    weeks: usize,
    row_total: f64,
    seed: u64,
) -> PyResult<(PyCube, Vec<f64>)> {
    let mut params = SimParams::table5(theta);
    if let Some(c) = coefficients {
        params.coefficients = c;
    }
    let media: Vec<String> = covariates.inner.media.iter().map(|m| m.media_code.clone()).collect();
    let sim = estimate::simulate_cube(
        &params,
        &covariates.inner,
        &calendar("2015-01-05", weeks)?,
        &media,
        &SimOffsets::TargetRowTotal(row_total),
        false,
        seed,
    )
    .map_err(err)?;
    Ok((PyCube { inner: sim.cube }, sim.offsets))
}

/// The six family × layer fits, as dictionaries sorted by AIC.
#[pyfunction]
fn model_selection<'py>(py: Python<'py>, cube: &PyCube, covariates: &PyCovariates) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let rows = py
        .detach(|| estimate::model_selection(&cube.inner, &covariates.inner, &ModelSpec::default()))
        .map_err(err)?;
    rows.into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("family", r.family.as_str())?;
            d.set_item("layer", r.layer.as_str())?;
            d.set_item("df", r.df)?;
            d.set_item("aic", r.aic)?;
            d.set_item("log_likelihood", r.log_likelihood)?;
            d.set_item("theta", r.theta)?;
            d.set_item("converged", r.converged)?;
            d.set_item("error", r.error)?;
            Ok(d)
        })
        .collect()
}

/// Choice probabilities of a global fit as (media, week, country, probability).
#[pyfunction]
#[pyo3(signature = (fit, cube, covariates, layer="weighted", kickoff=true))]
fn choice_probabilities(
    fit: &PyFit,
    cube: &PyCube,
    covariates: &PyCovariates,
    layer: &str,
    kickoff: bool,
) -> PyResult<Vec<(String, usize, String, f64)>> {
    let s = spec(fit.inner.family.as_str(), layer, false, kickoff, false)?;
    let d = design(cube, covariates, &s, None)?;
    let rows = estimate::choice_table(&fit.inner, &d).map_err(err)?;
    Ok(rows.into_iter().map(|r| (r.media, r.week, r.country, r.probability)).collect())
}

fn param_matrix(rows: Vec<Vec<f64>>) -> PyResult<newsgravity::ParamMatrix> {
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(err("rows must have equal length"));
    }
    Ok(newsgravity::ParamMatrix {
        media: (0..rows.len()).map(|i| i.to_string()).collect(),
        terms: (0..p).map(|j| format!("x{j}")).collect(),
        z_values: vec![0.0; rows.len() * p],
        values: rows.into_iter().flatten().collect(),
        excluded: Vec::new(),
    })
}

/// Principal components of a row matrix: (eigenvalues, loadings by term, scores by row).
#[pyfunction]
#[pyo3(signature = (rows, standardize=true))]
#[allow(clippy::type_complexity)]
fn pca(rows: Vec<Vec<f64>>, standardize: bool) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let m = param_matrix(rows)?;
    let r = run_pca(&m, standardize).map_err(err)?;
    let k = r.eigenvalues.len();
    let loadings = (0..m.n_cols()).map(|j| (0..k).map(|c| r.loading(j, c)).collect()).collect();
    let scores = (0..m.n_rows()).map(|i| (0..k).map(|c| r.score(i, c)).collect()).collect();
    Ok((r.eigenvalues.clone(), loadings, scores))
}

/// Ward clustering: (1-based cluster of each row, merge costs).
#[pyfunction]
#[pyo3(signature = (rows, k, standardize=true))]
fn ward(rows: Vec<Vec<f64>>, k: usize, standardize: bool) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let r = ward_cluster(&param_matrix(rows)?, k, standardize).map_err(err)?;
    Ok((r.assignments.iter().map(|a| a + 1).collect(), r.merges.iter().map(|m| m.cost).collect()))
}

#[pymodule]
#[pyo3(name = "newsgravity")]
fn newsgravity_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCovariates>()?;
    m.add_class::<PyCube>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(model_selection, m)?)?;
    m.add_function(wrap_pyfunction!(choice_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(ward, m)?)?;
    m.add("LAYERS", [Layer::Raw.as_str(), Layer::Weighted.as_str()])?;
    Ok(())
}
