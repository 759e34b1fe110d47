//! Python bindings. Exposes the panel, model estimation, volatility and
//! inference routines; pipeline orchestration stays in the CLI.

use std::path::PathBuf;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pmvol::inference;
use pmvol::oos::{self, ForecastRecord, OosOptions};
use pmvol::portfolio;
use pmvol::regression::{self, CovarianceKind, ModelFit, ModelSpec, Regressor};
use pmvol::synthetic::{simulate_panel as simulate, SyntheticConfig};
use pmvol::volatility::{self, Annualization, GarchOptions};
use pmvol::AlignedPanel;

fn to_py(e: pmvol::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else if e.is_io() {
        PyOSError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for pmvol::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn covariance_kind(name: &str, lags: usize) -> PyResult<CovarianceKind> {
    match name.to_ascii_lowercase().as_str() {
        "nw" | "newey_west" | "hac" => Ok(CovarianceKind::NeweyWest { lags }),
        "hc3" => Ok(CovarianceKind::Hc3),
        "hc0" => Ok(CovarianceKind::Hc0),
        other => Err(PyValueError::new_err(format!("unknown covariance `{other}`; use nw, hc3 or hc0"))),
    }
}

fn spec(target: &str, regressors: &[(String, i64)], kind: CovarianceKind) -> ModelSpec {
    regressors
        .iter()
        .fold(ModelSpec::new(target), |s, (c, l)| s.with(Regressor::lagged(c.clone(), *l)))
        .covariance(kind)
}

fn design(x: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let k = x.first().map_or(0, Vec::len);
    if k == 0 || x.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("x must be a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(x.len(), k, |i, j| x[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Placeholder dates for core routines that carry a calendar the caller
/// did not supply.
fn ordinal_dates(n: usize) -> Vec<NaiveDate> {
    NaiveDate::from_ymd_opt(2000, 1, 1).unwrap().iter_days().take(n).collect()
}

/// Date-indexed table of float columns with missing cells as `None`.
#[pyclass(name = "Panel", module = "pmvol")]
struct PyPanel {
    inner: AlignedPanel,
}

#[pymethods]
impl PyPanel {
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self { inner: AlignedPanel::from_csv_str(text).py()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: AlignedPanel::load(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.persist(&path).py()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    /// ISO-formatted row dates.
    #[getter]
    fn dates(&self) -> Vec<String> {
        self.inner.dates().iter().map(ToString::to_string).collect()
    }

    fn column(&self, name: &str) -> PyResult<Vec<Option<f64>>> {
        Ok(self.inner.column(name).py()?.to_vec())
    }

    fn set_column(&mut self, name: &str, values: Vec<Option<f64>>) -> PyResult<()> {
        self.inner.set_column(name, values).py()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __contains__(&self, name: &str) -> bool {
        self.inner.has_column(name)
    }

    fn __repr__(&self) -> String {
        format!("Panel(rows={}, columns={})", self.inner.n_rows(), self.inner.names().len())
    }
}

#[pyclass(name = "ModelFit", module = "pmvol", frozen)]
struct PyModelFit {
    inner: ModelFit,
}

#[pymethods]
impl PyModelFit {
    #[getter]
    fn target(&self) -> &str {
        &self.inner.target
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names.clone()
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
    fn t_stats(&self) -> Vec<f64> {
        self.inner.t_stats.clone()
    }

    #[getter]
    fn p_values(&self) -> Vec<f64> {
        self.inner.p_values.clone()
    }

    #[getter]
    fn covariance(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.covariance)
    }

    #[getter]
    fn r2(&self) -> f64 {
        self.inner.r2
    }

    #[getter]
    fn adj_r2(&self) -> f64 {
        self.inner.adj_r2
    }

    #[getter]
    fn n_obs(&self) -> usize {
        self.inner.n_obs
    }

    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.inner.residuals.clone()
    }

    /// `(estimate, std_error, t_stat, p_value)` for one coefficient.
    fn term(&self, name: &str) -> PyResult<(f64, f64, f64, f64)> {
        let t = self.inner.term(name).ok_or_else(|| PyValueError::new_err(format!("no coefficient `{name}`")))?;
        Ok((t.estimate, t.std_error, t.t_stat, t.p_value))
    }

    fn __repr__(&self) -> String {
        format!("ModelFit(target={:?}, n_obs={}, adj_r2={:.4})", self.inner.target, self.inner.n_obs, self.inner.adj_r2)
    }
}

/// Simulated panel from a TOML config (defaults when omitted). Returns the
/// panel and the name of the planted signal column.
#[pyfunction]
#[pyo3(signature = (config=None, seed=None))]
fn simulate_panel(config: Option<&str>, seed: Option<u64>) -> PyResult<(PyPanel, String)> {
    let mut cfg = match config {
        Some(text) => SyntheticConfig::from_str_kv(text).py()?,
        None => SyntheticConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (panel, truth) = simulate(&cfg).py()?;
    Ok((PyPanel { inner: panel }, truth.signal_column))
}

/// OLS with robust covariance on panel columns. Each regressor is
/// `(column, lag)`; lag 0 is contemporaneous, positive lags look back.
#[pyfunction]
#[pyo3(signature = (panel, target, regressors, covariance="nw", lags=5))]
fn estimate(
    panel: &PyPanel,
    target: &str,
    regressors: Vec<(String, i64)>,
    covariance: &str,
    lags: usize,
) -> PyResult<PyModelFit> {
    let s = spec(target, &regressors, covariance_kind(covariance, lags)?);
    Ok(PyModelFit { inner: regression::estimate(&s, &panel.inner).py()? })
}

/// Least squares on an explicit design; `x` must include its own constant.
#[pyfunction]
fn ols<'py>(py: Python<'py>, x: Vec<Vec<f64>>, y: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = regression::ols_fit(&design(&x)?, &DVector::from_vec(y)).py()?;
    let d = PyDict::new(py);
    d.set_item("coefficients", fit.coefficients.as_slice())?;
    d.set_item("residuals", fit.residuals.as_slice())?;
    d.set_item("r2", fit.r2)?;
    d.set_item("adj_r2", fit.adj_r2)?;
    Ok(d)
}

/// Sandwich covariance of OLS coefficients given the design and residuals.
#[pyfunction]
#[pyo3(signature = (x, residuals, kind="nw", lags=5, corrected=true))]
fn covariance(x: Vec<Vec<f64>>, residuals: Vec<f64>, kind: &str, lags: usize, corrected: bool) -> PyResult<Vec<Vec<f64>>> {
    let x = design(&x)?;
    let e = DVector::from_vec(residuals);
    let v = match covariance_kind(kind, lags)? {
        CovarianceKind::NeweyWest { lags } => regression::newey_west(&x, &e, lags, corrected),
        CovarianceKind::Hc3 => regression::hc3_covariance(&x, &e),
        CovarianceKind::Hc0 => regression::hc0_covariance(&x, &e),
    }
    .py()?;
    Ok(rows_of(&v))
}

/// Forward `horizon`-day realized volatility for every row.
#[pyfunction]
#[pyo3(signature = (returns, horizon, periods=252.0))]
fn realized_vol(returns: Vec<Option<f64>>, horizon: usize, periods: f64) -> PyResult<Vec<Option<f64>>> {
    volatility::rvol_column(&returns, horizon, Annualization::periods(periods).py()?).py()
}

#[pyfunction]
fn garch11_fit<'py>(py: Python<'py>, returns: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = volatility::garch11_fit(&returns, &GarchOptions::default()).py()?;
    let d = PyDict::new(py);
    d.set_item("omega", fit.omega)?;
    d.set_item("alpha", fit.alpha)?;
    d.set_item("beta", fit.beta)?;
    d.set_item("mean", fit.mean)?;
    d.set_item("loglik", fit.loglik)?;
    d.set_item("persistence", fit.persistence())?;
    d.set_item("conditional_variance", fit.conditional_variance)?;
    Ok(d)
}

/// Returns `(adjusted_p_values, rejected)` in input order.
#[pyfunction]
#[pyo3(signature = (p_values, q=inference::DEFAULT_FDR_Q))]
fn benjamini_hochberg(p_values: Vec<f64>, q: f64) -> PyResult<(Vec<f64>, Vec<bool>)> {
    let out = inference::benjamini_hochberg(&p_values, q).py()?;
    Ok((out.adjusted, out.rejected))
}

#[pyfunction]
#[pyo3(signature = (p_values, q=inference::DEFAULT_FDR_Q))]
fn bonferroni(p_values: Vec<f64>, q: f64) -> PyResult<Vec<bool>> {
    inference::bonferroni(&p_values, q).py()
}

/// `min(sigma_bar / forecast, cap)` per forecast.
#[pyfunction]
#[pyo3(signature = (forecasts, sigma_bar, cap=portfolio::DEFAULT_WEIGHT_CAP))]
fn vol_managed_weights(forecasts: Vec<Option<f64>>, sigma_bar: f64, cap: f64) -> PyResult<Vec<Option<f64>>> {
    let dates = ordinal_dates(forecasts.len());
    Ok(portfolio::vol_managed_weights(&dates, &forecasts, sigma_bar, cap).py()?.weight)
}

/// One-sided Clark–West test of the augmented forecast against the nested
/// baseline. Returns `(mean, std_error, stat, p_value)`.
#[pyfunction]
fn clark_west(
    y: Vec<f64>,
    yhat_baseline: Vec<f64>,
    yhat_augmented: Vec<f64>,
    horizon: usize,
) -> PyResult<(f64, f64, f64, f64)> {
    if yhat_baseline.len() != y.len() || yhat_augmented.len() != y.len() {
        return Err(PyValueError::new_err("forecast and outcome lengths differ"));
    }
    let records: Vec<ForecastRecord> = ordinal_dates(y.len())
        .into_iter()
        .enumerate()
        .map(|(i, d)| ForecastRecord::new(d, i, y[i], yhat_baseline[i], yhat_augmented[i], 0.0))
        .collect();
    let cw = oos::clark_west(&records, horizon).py()?;
    Ok((cw.mean, cw.std_error, cw.stat, cw.p_value))
}

/// Expanding-window comparison of the baseline against the baseline plus
/// `extra` regressors.
#[pyfunction]
#[pyo3(signature = (panel, target, baseline, extra, initial=oos::DEFAULT_INITIAL_WINDOW, horizon=5))]
fn out_of_sample<'py>(
    py: Python<'py>,
    panel: &PyPanel,
    target: &str,
    baseline: Vec<(String, i64)>,
    extra: Vec<(String, i64)>,
    initial: usize,
    horizon: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = CovarianceKind::default();
    let base = spec(target, &baseline, kind);
    let aug = spec(target, &[baseline, extra].concat(), kind);
    let run = oos::run_oos(&base, &aug, &panel.inner, OosOptions { initial, horizon }).py()?;
    let d = PyDict::new(py);
    d.set_item("n_oos", run.n_oos)?;
    d.set_item("msfe_ratio", run.msfe_ratio)?;
    d.set_item("oos_r2", run.oos_r2)?;
    d.set_item("cw_stat", run.clark_west.map(|c| c.stat))?;
    d.set_item("cw_p", run.clark_west.map(|c| c.p_value))?;
    d.set_item("dates", run.records.iter().map(|r| r.date.to_string()).collect::<Vec<_>>())?;
    d.set_item("cssed", run.cssed)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "pmvol")]
fn pmvol_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyModelFit>()?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(ols, m)?)?;
    m.add_function(wrap_pyfunction!(covariance, m)?)?;
    m.add_function(wrap_pyfunction!(realized_vol, m)?)?;
    m.add_function(wrap_pyfunction!(garch11_fit, m)?)?;
    m.add_function(wrap_pyfunction!(benjamini_hochberg, m)?)?;
    m.add_function(wrap_pyfunction!(bonferroni, m)?)?;
    m.add_function(wrap_pyfunction!(vol_managed_weights, m)?)?;
    m.add_function(wrap_pyfunction!(clark_west, m)?)?;
    m.add_function(wrap_pyfunction!(out_of_sample, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
