//! Least-squares estimation of the HAR model ladder with robust covariance.
//!
//! A [`ModelSpec`] names a target column and lagged regressor columns of an
//! [`AlignedPanel`]. Row `t` of the estimation sample pairs the target at `t`
//! with each regressor at `t − lag`, so a signal stored at its observation
//! date enters with `lag = 1`. Rows with any missing value are dropped.

mod covariance;
mod ols;
mod table;

use std::collections::BTreeSet;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

pub use covariance::{hac_covariance, hc0_covariance, hc3_covariance, leverages, newey_west};
pub use ols::{ols_fit, xtx_inverse, OlsFit};
pub use table::coefficient_table_csv;

use crate::error::{Error, Result};
use crate::market_data::AlignedPanel;
use crate::stats;
use crate::volatility;

pub const CONSTANT: &str = "const";
pub const DEFAULT_HAC_LAGS: usize = 5;

/// Panel column entering a model at a fixed offset. Positive lags look back,
/// negative lags look forward (used only for placebo tests).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Regressor {
    pub column: String,
    pub lag: i64,
}

impl Regressor {
    pub fn current(column: impl Into<String>) -> Self {
        Self { column: column.into(), lag: 0 }
    }

    pub fn lagged(column: impl Into<String>, lag: i64) -> Self {
        Self { column: column.into(), lag }
    }

    /// `x`, `L1.x` or `F1.x`.
    pub fn name(&self) -> String {
        match self.lag {
            0 => self.column.clone(),
            l if l > 0 => format!("L{l}.{}", self.column),
            l => format!("F{}.{}", -l, self.column),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    /// Newey–West with Bartlett weights and the `n / (n − k)` correction.
    NeweyWest { lags: usize },
    Hc3,
    Hc0,
}

impl Default for CovarianceKind {
    fn default() -> Self {
        CovarianceKind::NeweyWest { lags: DEFAULT_HAC_LAGS }
    }
}

/// Row restrictions applied after listwise deletion.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleFilter {
    /// Drop rows where `column` is present and nonzero (e.g. a release-window
    /// dummy).
    ExcludeFlagged(String),
    /// Keep rows whose panel index is `offset` modulo `step`; with
    /// `step = h` the h-day target windows do not overlap.
    EveryNth { step: usize, offset: usize },
    /// Keep rows dated within `[start, end]`.
    DateRange { start: NaiveDate, end: NaiveDate },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub target: String,
    pub regressors: Vec<Regressor>,
    pub covariance: CovarianceKind,
    pub filters: Vec<SampleFilter>,
}

impl ModelSpec {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            regressors: Vec::new(),
            covariance: CovarianceKind::default(),
            filters: Vec::new(),
        }
    }

    pub fn with(mut self, regressor: Regressor) -> Self {
        self.regressors.push(regressor);
        self
    }

    pub fn with_current(self, column: impl Into<String>) -> Self {
        self.with(Regressor::current(column))
    }

    pub fn with_lagged(self, column: impl Into<String>, lag: i64) -> Self {
        self.with(Regressor::lagged(column, lag))
    }

    pub fn covariance(mut self, kind: CovarianceKind) -> Self {
        self.covariance = kind;
        self
    }

    pub fn filter(mut self, f: SampleFilter) -> Self {
        self.filters.push(f);
        self
    }

    /// Coefficient names, constant first.
    pub fn names(&self) -> Vec<String> {
        std::iter::once(CONSTANT.to_string()).chain(self.regressors.iter().map(Regressor::name)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.regressors {
            if !seen.insert(r.name()) {
                return Err(Error::InvalidInput(format!("regressor `{}` listed twice", r.name())));
            }
        }
        Ok(())
    }

    /// Every panel column the spec reads.
    pub fn columns(&self) -> Vec<&str> {
        let mut cols = vec![self.target.as_str()];
        cols.extend(self.regressors.iter().map(|r| r.column.as_str()));
        for f in &self.filters {
            if let SampleFilter::ExcludeFlagged(c) = f {
                cols.push(c);
            }
        }
        cols
    }

    fn check_columns(&self, panel: &AlignedPanel) -> Result<()> {
        self.validate()?;
        for c in self.columns() {
            panel.column(c)?;
        }
        Ok(())
    }

    /// Panel rows with the target and every (shifted) regressor present and
    /// passing the filters.
    pub fn usable_rows(&self, panel: &AlignedPanel) -> Result<Vec<usize>> {
        self.check_columns(panel)?;
        let n = panel.n_rows();
        let target = panel.column(&self.target)?;
        let regs: Vec<(&[Option<f64>], i64)> = self
            .regressors
            .iter()
            .map(|r| Ok((panel.column(&r.column)?, r.lag)))
            .collect::<Result<_>>()?;
        let rows = (0..n)
            .filter(|&t| target[t].is_some())
            .filter(|&t| {
                regs.iter().all(|(col, lag)| {
                    let src = t as i64 - lag;
                    src >= 0 && (src as usize) < n && col[src as usize].is_some()
                })
            })
            .filter(|&t| self.passes_filters(panel, t))
            .collect();
        Ok(rows)
    }

    fn passes_filters(&self, panel: &AlignedPanel, t: usize) -> bool {
        self.filters.iter().all(|f| match f {
            SampleFilter::ExcludeFlagged(c) => {
                let col = panel.column(c).expect("checked");
                !matches!(col[t], Some(v) if v != 0.0)
            }
            SampleFilter::EveryNth { step, offset } => *step > 0 && t % step == offset % step,
            SampleFilter::DateRange { start, end } => {
                let d = panel.dates()[t];
                *start <= d && d <= *end
            }
        })
    }

    /// Design matrix (constant first) and target vector on the given rows.
    /// Rows must come from [`ModelSpec::usable_rows`] or a subset of it.
    pub fn design_on_rows(&self, panel: &AlignedPanel, rows: &[usize]) -> Result<Design> {
        self.check_columns(panel)?;
        let target = panel.column(&self.target)?;
        let k = self.regressors.len() + 1;
        let mut x = DMatrix::zeros(rows.len(), k);
        let mut y = DVector::zeros(rows.len());
        for (i, &t) in rows.iter().enumerate() {
            y[i] = target[t].ok_or_else(|| Error::InvalidInput(format!("target missing at row {t}")))?;
            x[(i, 0)] = 1.0;
            for (j, r) in self.regressors.iter().enumerate() {
                let src = t as i64 - r.lag;
                let v = usize::try_from(src)
                    .ok()
                    .and_then(|s| panel.column(&r.column).ok()?.get(s).copied().flatten())
                    .ok_or_else(|| Error::InvalidInput(format!("`{}` missing for row {t}", r.name())))?;
                x[(i, j + 1)] = v;
            }
        }
        Ok(Design { rows: rows.to_vec(), names: self.names(), x, y })
    }

    pub fn design(&self, panel: &AlignedPanel) -> Result<Design> {
        let rows = self.usable_rows(panel)?;
        self.design_on_rows(panel, &rows)
    }
}

/// Estimation data extracted from a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub rows: Vec<usize>,
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub target: String,
    /// Coefficient names, constant first.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-sided, standard normal reference.
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub n_obs: usize,
    pub residuals: Vec<f64>,
    pub rows: Vec<usize>,
    pub covariance_kind: CovarianceKind,
}

/// One coefficient's inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

impl ModelFit {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn term(&self, name: &str) -> Option<Term> {
        let i = self.index(name)?;
        Some(Term {
            estimate: self.coefficients[i],
            std_error: self.std_errors[i],
            t_stat: self.t_stats[i],
            p_value: self.p_values[i],
        })
    }

    /// Symmetric confidence interval using the normal quantile `z`.
    pub fn confidence_interval(&self, name: &str, z: f64) -> Option<(f64, f64)> {
        let t = self.term(name)?;
        Some((t.estimate - z * t.std_error, t.estimate + z * t.std_error))
    }
}

/// Fits a design with the requested covariance.
pub fn fit_design(target: &str, design: &Design, kind: CovarianceKind) -> Result<ModelFit> {
    if design.rows.is_empty() {
        return Err(Error::InsufficientData(format!("empty estimation sample for `{target}`")));
    }
    let ols = ols_fit(&design.x, &design.y)?;
    let covariance = match kind {
        CovarianceKind::NeweyWest { lags } => newey_west(&design.x, &ols.residuals, lags, true)?,
        CovarianceKind::Hc3 => hc3_covariance(&design.x, &ols.residuals)?,
        CovarianceKind::Hc0 => hc0_covariance(&design.x, &ols.residuals)?,
    };
    let coefficients: Vec<f64> = ols.coefficients.iter().copied().collect();
    let std_errors: Vec<f64> = (0..coefficients.len()).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
    let t_stats: Vec<f64> = coefficients.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = t_stats.iter().map(|t| stats::two_sided_p(*t)).collect();
    Ok(ModelFit {
        target: target.to_string(),
        names: design.names.clone(),
        coefficients,
        covariance,
        std_errors,
        t_stats,
        p_values,
        r2: ols.r2,
        adj_r2: ols.adj_r2,
        n_obs: design.rows.len(),
        residuals: ols.residuals.iter().copied().collect(),
        rows: design.rows.clone(),
        covariance_kind: kind,
    })
}

pub fn estimate(spec: &ModelSpec, panel: &AlignedPanel) -> Result<ModelFit> {
    let design = spec.design(panel)?;
    fit_design(&spec.target, &design, spec.covariance)
}

pub fn estimate_on_rows(spec: &ModelSpec, panel: &AlignedPanel, rows: &[usize]) -> Result<ModelFit> {
    let design = spec.design_on_rows(panel, rows)?;
    fit_design(&spec.target, &design, spec.covariance)
}

/// Rows usable by every spec.
pub fn common_rows(specs: &[ModelSpec], panel: &AlignedPanel) -> Result<Vec<usize>> {
    let mut iter = specs.iter();
    let Some(first) = iter.next() else {
        return Ok(Vec::new());
    };
    let mut rows: BTreeSet<usize> = first.usable_rows(panel)?.into_iter().collect();
    for s in iter {
        let other: BTreeSet<usize> = s.usable_rows(panel)?.into_iter().collect();
        rows = rows.intersection(&other).copied().collect();
    }
    Ok(rows.into_iter().collect())
}

/// Estimates nested models on their common sample.
pub fn estimate_nested(specs: &[ModelSpec], panel: &AlignedPanel) -> Result<Vec<ModelFit>> {
    let rows = common_rows(specs, panel)?;
    specs.iter().map(|s| estimate_on_rows(s, panel, &rows)).collect()
}

/// Standard model ladder for one asset: HAR (M1), + controls (M2),
/// + lagged signal (M3).
#[derive(Debug, Clone, PartialEq)]
pub struct Ladder {
    pub har: ModelSpec,
    pub controls: ModelSpec,
    pub augmented: ModelSpec,
}

pub fn model_ladder(
    asset: &str,
    horizon: usize,
    controls: &[String],
    signal: &str,
    covariance: CovarianceKind,
) -> Ladder {
    let mut har = ModelSpec::new(volatility::target_column(asset, horizon)).covariance(covariance);
    for c in volatility::har_columns(asset) {
        har = har.with_current(c);
    }
    let mut ctrl = har.clone();
    for c in controls {
        ctrl = ctrl.with_current(c.clone());
    }
    let augmented = ctrl.clone().with_lagged(signal, 1);
    Ladder { har, controls: ctrl, augmented }
}

/// `coef × (q_hi − q_lo)` of the signal's in-sample distribution.
pub fn effect_size(fit: &ModelFit, coefficient: &str, q_lo: f64, q_hi: f64, sample: &[f64]) -> Result<f64> {
    let b = coefficient_of(fit, coefficient)?;
    Ok(b * (quantile_of(sample, q_hi)? - quantile_of(sample, q_lo)?))
}

/// `coef × quantile(q)`: the predicted shift when the signal moves from
/// zero to its `q`-th quantile.
pub fn effect_at_quantile(fit: &ModelFit, coefficient: &str, q: f64, sample: &[f64]) -> Result<f64> {
    Ok(coefficient_of(fit, coefficient)? * quantile_of(sample, q)?)
}

fn coefficient_of(fit: &ModelFit, name: &str) -> Result<f64> {
    fit.term(name)
        .map(|t| t.estimate)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn quantile_of(sample: &[f64], q: f64) -> Result<f64> {
    stats::quantile(sample, q)
        .ok_or_else(|| Error::InvalidInput(format!("cannot take quantile {q} of {} values", sample.len())))
}

/// In-sample values of a regressor over a fit's estimation rows.
pub fn regressor_sample(panel: &AlignedPanel, fit: &ModelFit, regressor: &Regressor) -> Result<Vec<f64>> {
    let col = panel.column(&regressor.column)?;
    Ok(fit
        .rows
        .iter()
        .filter_map(|&t| {
            let src = t as i64 - regressor.lag;
            usize::try_from(src).ok().and_then(|s| col.get(s).copied().flatten())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonFit {
    pub horizon: usize,
    pub fit: ModelFit,
}

/// Re-estimates `spec` with the target replaced by each horizon's target for
/// `asset` (`absret1` for one day, `rvol{h}` otherwise) and Newey–West lags
/// `min(h, 5)`.
pub fn horizon_sweep(
    spec: &ModelSpec,
    panel: &AlignedPanel,
    asset: &str,
    horizons: &[usize],
) -> Result<Vec<HorizonFit>> {
    horizons
        .iter()
        .map(|&h| {
            if h == 0 {
                return Err(Error::InvalidInput("horizon must be at least 1".into()));
            }
            let mut s = spec.clone();
            s.target = volatility::target_column(asset, h);
            s.covariance = CovarianceKind::NeweyWest { lags: h.min(DEFAULT_HAC_LAGS) };
            Ok(HorizonFit { horizon: h, fit: estimate(&s, panel)? })
        })
        .collect()
}
