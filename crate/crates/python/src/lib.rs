//! Python bindings. Matrices cross the boundary as lists of rows and
//! structured reports as dictionaries.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

use attnspec_core::{diagnostics, experiments, freeprob, models, spectra, verify, Error, MasterSeed};

fn to_py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::InvalidDimension(_)
        | Error::InvalidParameter { .. }
        | Error::DimensionMismatch(_)
        | Error::NonFinite(_)
        | Error::EmptyDistribution
        | Error::TopKTooLarge { .. }
        | Error::UnknownModel(_)
        | Error::Format(_) => PyValueError::new_err(msg),
        Error::Overflow { .. } | Error::Underflow(_) => PyArithmeticError::new_err(msg),
        Error::Io(_) => PyIOError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for attnspec_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (_, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_dict<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have unequal lengths"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / cols, cols, &flat))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn model_kind(name: &str) -> PyResult<models::ModelKind> {
    name.parse().py()
}

/// Dimensions, inverse temperature and Taylor constants of one model.
#[pyclass(module = "attnspec", from_py_object)]
#[derive(Clone)]
struct ModelConfig {
    inner: models::ModelConfig,
}

#[pymethods]
impl ModelConfig {
    #[new]
    #[pyo3(signature = (d, beta = 1.0, ell = None, d_qk = None, c = 2.0, delta = 0.2, taylor_degree = None))]
    fn new(
        d: usize,
        beta: f64,
        ell: Option<usize>,
        d_qk: Option<usize>,
        c: f64,
        delta: f64,
        taylor_degree: Option<usize>,
    ) -> PyResult<Self> {
        let inner = models::ModelConfig {
            d,
            ell: ell.unwrap_or(d),
            d_qk: d_qk.unwrap_or(d),
            beta,
            c,
            delta,
            taylor_degree,
        };
        inner.validate().py()?;
        Ok(Self { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn ell(&self) -> usize {
        self.inner.ell
    }

    #[getter]
    fn d_qk(&self) -> usize {
        self.inner.d_qk
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    /// Taylor degree used by the polynomial models.
    fn degree(&self) -> PyResult<usize> {
        self.inner.degree().py()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!("ModelConfig(d={}, beta={}, ell={}, d_qk={})", c.d, c.beta, c.ell, c.d_qk)
    }
}

/// One draw of the weights with its score and attention matrices.
#[pyclass(module = "attnspec")]
struct MatrixSample {
    inner: models::MatrixSample,
}

#[pymethods]
impl MatrixSample {
    #[new]
    #[pyo3(signature = (config, master_seed = 0, sample_index = 0))]
    fn new(py: Python<'_>, config: &ModelConfig, master_seed: u64, sample_index: u64) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let inner = py
            .detach(|| models::MatrixSample::draw(&cfg, MasterSeed(master_seed), sample_index))
            .py()?;
        Ok(Self { inner })
    }

    /// Score matrix `S` as a list of rows.
    fn scores(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.s)
    }

    /// Unscaled row-stochastic attention matrix.
    fn attention(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.a())
    }

    /// Row normalizers `Z_i`.
    fn normalizers(&self) -> Vec<f64> {
        self.inner.z()
    }

    /// Normalized model matrix: A, Aperp, Y, Yf, YQ, YQlin or Yflin.
    fn model(&self, py: Python<'_>, name: &str) -> PyResult<Vec<Vec<f64>>> {
        let kind = model_kind(name)?;
        let m = py.detach(|| self.inner.model(kind)).py()?;
        Ok(matrix_to_rows(&m))
    }

    /// Squared singular values of a model matrix, descending.
    fn spectrum(&self, py: Python<'_>, name: &str) -> PyResult<Vec<f64>> {
        let kind = model_kind(name)?;
        py.detach(|| {
            let m = self.inner.model(kind)?;
            spectra::squared_singular_values(&m).map(|s| s.values)
        })
        .py()
    }
}

/// Limiting bulk law with parameters `a`, `b`.
#[pyclass(module = "attnspec")]
struct BulkLaw {
    inner: freeprob::BulkLaw,
}

#[pymethods]
impl BulkLaw {
    #[new]
    fn new(a: f64, b: f64) -> PyResult<Self> {
        Ok(Self {
            inner: freeprob::BulkLaw::new(a, b).py()?,
        })
    }

    #[staticmethod]
    fn for_beta(beta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: freeprob::BulkLaw::from_coefficients(&models::theta_coefficients(beta)).py()?,
        })
    }

    /// Right edge of the squared singular value support.
    #[getter]
    fn edge_squared(&self) -> f64 {
        self.inner.edge().edge_squared
    }

    fn edge<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, self.inner.edge())
    }

    fn symmetric_density(&self, x: f64) -> PyResult<f64> {
        self.inner.symmetric_density(x).py()
    }

    fn squared_density(&self, t: f64) -> PyResult<f64> {
        self.inner.squared_density(t).py()
    }

    fn squared_cdf(&self, t: f64) -> PyResult<f64> {
        self.inner.squared_cdf(t).py()
    }

    fn support_edge(&self) -> PyResult<f64> {
        self.inner.support_edge().py()
    }

    fn mass(&self) -> PyResult<f64> {
        self.inner.mass().py()
    }

    /// Moment of the squared law by quadrature.
    fn moment(&self, q: u32) -> PyResult<f64> {
        self.inner.moment_by_quadrature(q).py()
    }
}

/// `(theta1, theta2)` of the exponential kernel at inverse temperature `beta`.
#[pyfunction]
fn theta_coefficients(beta: f64) -> (f64, f64) {
    let c = models::theta_coefficients(beta);
    (c.theta1, c.theta2)
}

#[pyfunction]
fn taylor_degree(c: f64, d: usize) -> PyResult<usize> {
    models::taylor_degree(c, d).py()
}

#[pyfunction]
fn solve_edge<'py>(py: Python<'py>, a: f64, b: f64) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &freeprob::solve_edge(a, b).py()?)
}

/// Tabulated density `p(t)` of the squared law as `(t, density)`.
#[pyfunction]
#[pyo3(signature = (a, b, points = 400, t_max = None))]
fn bulk_density(py: Python<'_>, a: f64, b: f64, points: usize, t_max: Option<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let grid = freeprob::GridSpec { points, t_max };
    let curve = py.detach(|| freeprob::bulk_density(a, b, &grid)).py()?;
    Ok((curve.t, curve.density))
}

#[pyfunction]
fn limit_moment(a: f64, b: f64, q: u32) -> PyResult<f64> {
    freeprob::limit_moments(a, b, q).py()
}

/// Squared singular values of a matrix given as rows, descending.
#[pyfunction]
fn squared_singular_values(py: Python<'_>, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = matrix_from_rows(rows)?;
    py.detach(|| spectra::squared_singular_values(&m)).py().map(|s| s.values)
}

#[pyfunction]
fn check_interlacing<'py>(py: Python<'py>, spec_y: Vec<f64>, spec_yf: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    let y = spectra::SpectrumSample::from_values(spec_y, "Y").py()?;
    let yf = spectra::SpectrumSample::from_values(spec_yf, "Yf").py()?;
    to_dict(py, &spectra::check_interlacing(&y, &yf).py()?)
}

/// Two-sample Kolmogorov-Smirnov distance.
#[pyfunction]
fn ks_distance(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    let p = spectra::EmpiricalDistribution::new(x).py()?;
    let q = spectra::EmpiricalDistribution::new(y).py()?;
    Ok(spectra::ks_distance(&p, &q))
}

/// Kolmogorov-Smirnov distance of a sample to `Poisson(lam)` at the atoms.
#[pyfunction]
#[pyo3(signature = (x, lam = 1.0))]
fn ks_poisson(x: Vec<f64>, lam: f64) -> PyResult<f64> {
    let p = spectra::EmpiricalDistribution::new(x).py()?;
    Ok(spectra::ks_at_atoms(&p, &freeprob::PoissonLaw::new(lam).py()?))
}

#[pyfunction]
fn perron_structure<'py>(py: Python<'py>, rows: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyAny>> {
    let m = matrix_from_rows(rows)?;
    to_dict(py, &py.detach(|| spectra::perron_structure(&m)))
}

#[pyfunction]
#[pyo3(signature = (d, beta = 1.0, master_seed = 0, seeds = 10))]
fn normalizer_concentration<'py>(
    py: Python<'py>,
    d: usize,
    beta: f64,
    master_seed: u64,
    seeds: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = models::ModelConfig::square(d, beta);
    let r = py
        .detach(|| diagnostics::normalizer_concentration(&cfg, MasterSeed(master_seed), seeds))
        .py()?;
    to_dict(py, &r)
}

#[pyfunction]
fn approximation_bound<'py>(py: Python<'py>, beta: f64, k: f64, n: usize) -> PyResult<Bound<'py, PyAny>> {
    to_dict(py, &diagnostics::approximation_bound(beta, k, n).py()?)
}

#[pyfunction]
fn signal_noise_crossover() -> f64 {
    diagnostics::signal_noise_crossover()
}

#[pyfunction]
#[pyo3(signature = (d, draws, master_seed = 0))]
fn covariance_witness<'py>(py: Python<'py>, d: usize, draws: usize, master_seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let w = py
        .detach(|| diagnostics::covariance_witness(d, draws, MasterSeed(master_seed)))
        .py()?;
    to_dict(py, &w)
}

/// Runs a check suite and returns its report.
#[pyfunction]
#[pyo3(signature = (suite = "all", master_seed = 0))]
fn run_verify<'py>(py: Python<'py>, suite: &str, master_seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let suite: verify::Suite = suite.parse().py()?;
    let r = py.detach(|| verify::run_suite(suite, MasterSeed(master_seed))).py()?;
    to_dict(py, &r)
}

fn settings(config: &ModelConfig, master_seed: u64, seeds: usize, top_k: usize) -> experiments::RunSettings {
    experiments::RunSettings {
        config: config.inner.clone(),
        master_seed,
        seeds,
        top_k,
        ..experiments::RunSettings::default()
    }
}

/// Writes the spectrum files of one model into `out_dir`; returns the manifest.
#[pyfunction]
#[pyo3(signature = (model, config, out_dir, master_seed = 0, seeds = 10, top_k = 3, raw = false))]
#[allow(clippy::too_many_arguments)]
fn run_spectrum<'py>(
    py: Python<'py>,
    model: &str,
    config: &ModelConfig,
    out_dir: PathBuf,
    master_seed: u64,
    seeds: usize,
    top_k: usize,
    raw: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let command = experiments::Command::Spectrum {
        model: model_kind(model)?,
        raw,
    };
    let s = settings(config, master_seed, seeds, top_k);
    let m = py.detach(|| experiments::run(&command, &s, &out_dir)).py()?;
    to_dict(py, &m)
}

/// Writes the data of a figure preset into `out_dir`; returns the manifest.
#[pyfunction]
#[pyo3(signature = (figure, config, out_dir, master_seed = 0, seeds = 10, top_k = 3))]
fn run_figure<'py>(
    py: Python<'py>,
    figure: &str,
    config: &ModelConfig,
    out_dir: PathBuf,
    master_seed: u64,
    seeds: usize,
    top_k: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let command = experiments::Command::Figures {
        figure: figure.parse().py()?,
    };
    let s = settings(config, master_seed, seeds, top_k);
    let m = py.detach(|| experiments::run(&command, &s, &out_dir)).py()?;
    to_dict(py, &m)
}

#[pymodule]
fn attnspec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ModelConfig>()?;
    m.add_class::<MatrixSample>()?;
    m.add_class::<BulkLaw>()?;
    m.add("MODELS", models::ModelKind::ALL.map(|k| k.name()).to_vec())?;
    m.add_function(wrap_pyfunction!(theta_coefficients, m)?)?;
    m.add_function(wrap_pyfunction!(taylor_degree, m)?)?;
    m.add_function(wrap_pyfunction!(solve_edge, m)?)?;
    m.add_function(wrap_pyfunction!(bulk_density, m)?)?;
    m.add_function(wrap_pyfunction!(limit_moment, m)?)?;
    m.add_function(wrap_pyfunction!(squared_singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(check_interlacing, m)?)?;
    m.add_function(wrap_pyfunction!(ks_distance, m)?)?;
    m.add_function(wrap_pyfunction!(ks_poisson, m)?)?;
    m.add_function(wrap_pyfunction!(perron_structure, m)?)?;
    m.add_function(wrap_pyfunction!(normalizer_concentration, m)?)?;
    m.add_function(wrap_pyfunction!(approximation_bound, m)?)?;
    m.add_function(wrap_pyfunction!(signal_noise_crossover, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_witness, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run_figure, m)?)?;
    Ok(())
}
