//! Python bindings. Data go in as row sequences (lists of lists or 2-D
//! numpy arrays), one observation per row.

use efa_lrt::lrt::{min_n_bartlett, min_n_chisq};
use efa_lrt::sim::{self, SimConfig, SimGridResult};
use efa_lrt::{
    Calibration, Correction, DataMatrix, MleOptions, RegimeThresholds, SelectOptions, TestOptions,
};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(efa_lrt_py, LrtError, PyValueError, "Raised for invalid input or failed computations.");

fn err(e: efa_lrt::Error) -> PyErr {
    LrtError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(LrtError::new_err(format!("row {i} has {} entries, expected {p}", rows[i].len())));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(n, p, &flat))
}

fn data(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    DataMatrix::new(matrix(rows)?).map_err(err)
}

fn options(correction: &str, calibration: &str, alpha: f64) -> PyResult<TestOptions> {
    let c: Correction = correction.parse().map_err(err)?;
    let cal: Calibration = calibration.parse().map_err(err)?;
    Ok(TestOptions::new(c, cal, alpha))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "RegimeReport", frozen, get_all)]
#[derive(Clone)]
struct PyRegimeReport {
    n_obs: usize,
    p: usize,
    epsilon: f64,
    ratio_sq: f64,
    ratio_cube: f64,
    chisq_valid: String,
    bartlett_valid: String,
}

impl From<&efa_lrt::RegimeReport> for PyRegimeReport {
    fn from(r: &efa_lrt::RegimeReport) -> Self {
        Self {
            n_obs: r.n_obs,
            p: r.p,
            epsilon: r.epsilon,
            ratio_sq: r.ratio_sq,
            ratio_cube: r.ratio_cube,
            chisq_valid: r.chisq_valid.to_string(),
            bartlett_valid: r.bartlett_valid.to_string(),
        }
    }
}

#[pymethods]
impl PyRegimeReport {
    fn __repr__(&self) -> String {
        format!(
            "RegimeReport(N={}, p={}, epsilon={:.4}, chisq={}, bartlett={})",
            self.n_obs, self.p, self.epsilon, self.chisq_valid, self.bartlett_valid
        )
    }
}

#[pyclass(name = "TestResult", frozen, get_all)]
#[derive(Clone)]
struct PyTestResult {
    kind: String,
    statistic: f64,
    corrected_statistic: f64,
    correction: String,
    calibration: String,
    df: f64,
    rho: f64,
    z_score: Option<f64>,
    p_value: f64,
    alpha: f64,
    rejected: bool,
    warnings: Vec<String>,
    regime: PyRegimeReport,
    /// `None` unless the statistic needed a factor model fit.
    converged: Option<bool>,
}

impl From<&efa_lrt::TestResult> for PyTestResult {
    fn from(r: &efa_lrt::TestResult) -> Self {
        Self {
            kind: r.kind.to_string(),
            statistic: r.statistic,
            corrected_statistic: r.corrected_statistic,
            correction: r.correction.to_string(),
            calibration: r.calibration.to_string(),
            df: r.df,
            rho: r.rho,
            z_score: r.z_score,
            p_value: r.p_value,
            alpha: r.alpha,
            rejected: r.rejected,
            warnings: r.warnings.iter().map(ToString::to_string).collect(),
            regime: (&r.regime).into(),
            converged: r.mle.as_ref().map(|m| m.converged),
        }
    }
}

#[pymethods]
impl PyTestResult {
    fn __repr__(&self) -> String {
        format!(
            "TestResult({}, statistic={:.4}, df={}, p_value={:.4e}, rejected={})",
            self.kind,
            self.statistic,
            self.df,
            self.p_value,
            if self.rejected { "True" } else { "False" }
        )
    }
}

#[pyclass(name = "Selection", frozen, get_all)]
struct PySelection {
    k_hat: usize,
    stopped_reason: String,
    alpha: f64,
    trail: Vec<PyTestResult>,
}

#[pymethods]
impl PySelection {
    fn __repr__(&self) -> String {
        format!("Selection(k_hat={}, stopped={}, trail={})", self.k_hat, self.stopped_reason, self.trail.len())
    }
}

#[pyclass(name = "FactorFit", frozen, get_all)]
struct PyFactorFit {
    k: usize,
    loadings: Vec<Vec<f64>>,
    uniquenesses: Vec<f64>,
    converged: bool,
    iterations: usize,
    objective: f64,
    heywood: Vec<usize>,
}

#[pyclass(name = "SimResult", frozen)]
struct PySimResult {
    inner: SimGridResult,
}

#[pymethods]
impl PySimResult {
    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Value of one metric at one cell, or `None` if absent.
    fn value(&self, n: usize, p: usize, mode: &str, correction: &str, metric: &str) -> Option<f64> {
        self.inner.value(n, p, mode, correction, metric)
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }
}

/// Tests that the variables share no common factor.
#[pyfunction]
#[pyo3(signature = (data, correction = "none", calibration = "chisq", alpha = 0.05))]
fn test_no_factor(py: Python<'_>, data: Vec<Vec<f64>>, correction: &str, calibration: &str, alpha: f64) -> PyResult<PyTestResult> {
    let (x, opts) = (self::data(data)?, options(correction, calibration, alpha)?);
    let r = py.detach(|| efa_lrt::test_no_factor(&x, &opts)).map_err(err)?;
    Ok((&r).into())
}

/// Tests that a `k`-factor model fits.
#[pyfunction]
#[pyo3(signature = (data, k, correction = "none", alpha = 0.05))]
fn test_k_factor(py: Python<'_>, data: Vec<Vec<f64>>, k: usize, correction: &str, alpha: f64) -> PyResult<PyTestResult> {
    let (x, opts) = (self::data(data)?, options(correction, "chisq", alpha)?);
    let r = py.detach(|| efa_lrt::test_k_factor(&x, k, &opts)).map_err(err)?;
    Ok((&r).into())
}

/// Tests that the covariance equals `sigma`.
#[pyfunction]
#[pyo3(signature = (data, sigma, correction = "none", calibration = "chisq", alpha = 0.05))]
fn test_given_sigma(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    correction: &str,
    calibration: &str,
    alpha: f64,
) -> PyResult<PyTestResult> {
    let (x, s, opts) = (self::data(data)?, matrix(sigma)?, options(correction, calibration, alpha)?);
    let r = py.detach(|| efa_lrt::test_given_sigma(&x, &s, &opts)).map_err(err)?;
    Ok((&r).into())
}

#[pyfunction]
#[pyo3(signature = (data, alpha = 0.05, correction = "bartlett", k_max = None))]
fn select_num_factors(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    alpha: f64,
    correction: &str,
    k_max: Option<usize>,
) -> PyResult<PySelection> {
    let x = self::data(data)?;
    let mut opts = SelectOptions::new(alpha, correction.parse().map_err(err)?);
    if let Some(k) = k_max {
        opts = opts.with_k_max(k);
    }
    let r = py.detach(|| efa_lrt::select_num_factors(&x, &opts)).map_err(err)?;
    Ok(PySelection {
        k_hat: r.k_hat,
        stopped_reason: format!("{:?}", r.stopped_reason),
        alpha: r.alpha,
        trail: r.trail.iter().map(|e| (&e.result).into()).collect(),
    })
}

/// Maximum likelihood fit of a `k`-factor model to the sample correlation matrix.
#[pyfunction]
fn fit_factor_model(py: Python<'_>, data: Vec<Vec<f64>>, k: usize) -> PyResult<PyFactorFit> {
    let x = self::data(data)?;
    let fit = py
        .detach(|| {
            let r = efa_lrt::sample_correlation(&x)?;
            let s = efa_lrt::CovMatrix { values: r.values, dof: x.n_obs() - 1 };
            efa_lrt::fit_factor_model(&s, k, &MleOptions::default())
        })
        .map_err(err)?;
    Ok(PyFactorFit {
        k,
        loadings: rows_of(fit.model.loadings()),
        uniquenesses: fit.model.uniquenesses().iter().copied().collect(),
        converged: fit.converged,
        iterations: fit.iterations,
        objective: fit.objective,
        heywood: fit.heywood,
    })
}

#[pyfunction]
fn regime_diagnostic(n_obs: usize, p: usize) -> PyRegimeReport {
    (&efa_lrt::regime_diagnostic(n_obs, p, RegimeThresholds::default())).into()
}

/// Smallest sample sizes at which the chi-square and Bartlett calibrations are safe.
#[pyfunction]
fn min_sample_sizes(p: usize) -> (u64, u64) {
    let t = RegimeThresholds::default().safe_below;
    (min_n_chisq(p, t), min_n_bartlett(p, t))
}

/// Centering `mu` and scale `sigma` of the normal calibration of `T0`.
#[pyfunction]
fn hd_calibration_t0(n_obs: usize, p: usize) -> PyResult<(f64, f64)> {
    let h = efa_lrt::hd_calibration_t0(n_obs, p).map_err(err)?;
    Ok((h.mu, h.sigma))
}

/// Runs a simulation described by config text (the same format as the CLI).
#[pyfunction]
#[pyo3(signature = (config, threads = None, seed = None, replications = None))]
fn simulate(
    py: Python<'_>,
    config: &str,
    threads: Option<usize>,
    seed: Option<u64>,
    replications: Option<usize>,
) -> PyResult<PySimResult> {
    let mut cfg: SimConfig = config.parse().map_err(err)?;
    if threads.is_some() {
        cfg.threads = threads;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replications {
        cfg.replications = r;
    }
    let inner = py.detach(|| sim::run(&cfg, &mut |_| {})).map_err(err)?;
    Ok(PySimResult { inner })
}

#[pymodule]
fn efa_lrt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LrtError", m.py().get_type::<LrtError>())?;
    m.add_class::<PyRegimeReport>()?;
    m.add_class::<PyTestResult>()?;
    m.add_class::<PySelection>()?;
    m.add_class::<PyFactorFit>()?;
    m.add_class::<PySimResult>()?;
    m.add_function(wrap_pyfunction!(test_no_factor, m)?)?;
    m.add_function(wrap_pyfunction!(test_k_factor, m)?)?;
    m.add_function(wrap_pyfunction!(test_given_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(select_num_factors, m)?)?;
    m.add_function(wrap_pyfunction!(fit_factor_model, m)?)?;
    m.add_function(wrap_pyfunction!(regime_diagnostic, m)?)?;
    m.add_function(wrap_pyfunction!(min_sample_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(hd_calibration_t0, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
