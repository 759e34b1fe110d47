//! Expanding-window out-of-sample comparison of nested models.
//!
//! At each forecast origin `t` both models are refit on rows whose `h`-day
//! target window has closed by `t` (row `j` qualifies iff `j + h ≤ t`), then
//! forecast the target at `t`. The historical-mean benchmark uses the same
//! training rows.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::market_data::AlignedPanel;
use crate::regression::{common_rows, newey_west, ols_fit, ModelSpec};
use crate::stats;

pub const DEFAULT_INITIAL_WINDOW: usize = 120;
pub const MIN_CW_RECORDS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OosOptions {
    /// Number of usable rows before the first forecast origin.
    pub initial: usize,
    /// Target horizon in panel days; controls the training boundary and the
    /// Clark–West HAC lag (`h − 1`).
    pub horizon: usize,
}

impl Default for OosOptions {
    fn default() -> Self {
        Self { initial: DEFAULT_INITIAL_WINDOW, horizon: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub row: usize,
    pub y_true: f64,
    pub yhat_baseline: f64,
    pub yhat_augmented: f64,
    pub mean_benchmark: f64,
    pub e_b: f64,
    pub e_a: f64,
}

impl ForecastRecord {
    pub fn new(
        date: NaiveDate,
        row: usize,
        y_true: f64,
        yhat_baseline: f64,
        yhat_augmented: f64,
        mean_benchmark: f64,
    ) -> Self {
        Self {
            date,
            row,
            y_true,
            yhat_baseline,
            yhat_augmented,
            mean_benchmark,
            e_b: y_true - yhat_baseline,
            e_a: y_true - yhat_augmented,
        }
    }

    /// Same record with the two models' roles exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(self.date, self.row, self.y_true, self.yhat_augmented, self.yhat_baseline, self.mean_benchmark)
    }
}

fn forecast(x: &DMatrix<f64>, y: &DVector<f64>, train: usize, row: usize) -> Result<f64> {
    let fit = ols_fit(&x.rows(0, train).into_owned(), &y.rows(0, train).into_owned())?;
    Ok((x.row(row) * &fit.coefficients)[(0, 0)])
}

pub fn expanding_forecasts(
    baseline: &ModelSpec,
    augmented: &ModelSpec,
    panel: &AlignedPanel,
    opts: OosOptions,
) -> Result<Vec<ForecastRecord>> {
    if baseline.target != augmented.target {
        return Err(Error::InvalidInput(format!(
            "baseline targets `{}` but augmented targets `{}`",
            baseline.target, augmented.target
        )));
    }
    if opts.horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let rows = common_rows(&[baseline.clone(), augmented.clone()], panel)?;
    if rows.len() <= opts.initial {
        return Err(Error::InsufficientData(format!(
            "{} usable rows; the initial window needs more than {}",
            rows.len(),
            opts.initial
        )));
    }
    let base = baseline.design_on_rows(panel, &rows)?;
    let aug = augmented.design_on_rows(panel, &rows)?;
    let dates = panel.dates();

    let mut out = Vec::with_capacity(rows.len() - opts.initial);
    for k in opts.initial..rows.len() {
        let origin = rows[k];
        // Rows are sorted, so the realized training set is a prefix.
        let train = rows[..k].partition_point(|&j| j + opts.horizon <= origin);
        if train == 0 {
            return Err(Error::InsufficientData(format!("no realized training rows at {}", dates[origin])));
        }
        let yb = forecast(&base.x, &base.y, train, k)?;
        let ya = forecast(&aug.x, &aug.y, train, k)?;
        let mean = base.y.rows(0, train).mean();
        out.push(ForecastRecord::new(dates[origin], origin, base.y[k], yb, ya, mean));
    }
    Ok(out)
}

fn require_records(records: &[ForecastRecord]) -> Result<()> {
    if records.is_empty() {
        Err(Error::InsufficientData("no forecast records".into()))
    } else {
        Ok(())
    }
}

/// `Σ e_a² / Σ e_b²`.
pub fn msfe_ratio(records: &[ForecastRecord]) -> Result<f64> {
    require_records(records)?;
    let sa: f64 = records.iter().map(|r| r.e_a * r.e_a).sum();
    let sb: f64 = records.iter().map(|r| r.e_b * r.e_b).sum();
    if sb == 0.0 {
        return Err(Error::InvalidInput("baseline forecast errors are all zero".into()));
    }
    Ok(sa / sb)
}

/// `1 − Σ e_a² / Σ (y − mean benchmark)²`.
pub fn oos_r2(records: &[ForecastRecord]) -> Result<f64> {
    require_records(records)?;
    let sa: f64 = records.iter().map(|r| r.e_a * r.e_a).sum();
    let sm: f64 = records.iter().map(|r| (r.y_true - r.mean_benchmark).powi(2)).sum();
    if sm == 0.0 {
        return Err(Error::InvalidInput("benchmark forecast errors are all zero".into()));
    }
    Ok(1.0 - sa / sm)
}

/// Clark–West adjusted loss differential per record:
/// `e_b² − (e_a² − (ŷ_b − ŷ_a)²)`.
pub fn cw_adjusted_loss(records: &[ForecastRecord]) -> Vec<f64> {
    records
        .iter()
        .map(|r| {
            let d = r.yhat_baseline - r.yhat_augmented;
            r.e_b * r.e_b - (r.e_a * r.e_a - d * d)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClarkWest {
    pub mean: f64,
    pub std_error: f64,
    pub stat: f64,
    /// One-sided, upper tail.
    pub p_value: f64,
}

/// Mean of `series` divided by its Newey–West standard error (Bartlett lags
/// `lags`, small-sample corrected), obtained by regressing on a constant.
pub fn hac_mean_test(series: &[f64], lags: usize) -> Result<ClarkWest> {
    let n = series.len();
    if series.iter().all(|v| *v == 0.0) {
        return Ok(ClarkWest { mean: 0.0, std_error: 0.0, stat: 0.0, p_value: 0.5 });
    }
    let x = DMatrix::from_element(n, 1, 1.0);
    let y = DVector::from_column_slice(series);
    let fit = ols_fit(&x, &y)?;
    let cov = newey_west(&x, &fit.residuals, lags, true)?;
    let mean = fit.coefficients[0];
    let std_error = cov[(0, 0)].max(0.0).sqrt();
    let stat = if std_error > 0.0 {
        mean / std_error
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    };
    Ok(ClarkWest { mean, std_error, stat, p_value: stats::upper_tail_p(stat) })
}

pub fn clark_west(records: &[ForecastRecord], horizon: usize) -> Result<ClarkWest> {
    if records.len() < MIN_CW_RECORDS {
        return Err(Error::InsufficientData(format!(
            "Clark–West needs at least {MIN_CW_RECORDS} records, got {}",
            records.len()
        )));
    }
    hac_mean_test(&cw_adjusted_loss(records), horizon.saturating_sub(1))
}

/// Cumulative sum of `e_b² − e_a²`.
pub fn cssed(records: &[ForecastRecord]) -> Vec<f64> {
    records
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.e_b * r.e_b - r.e_a * r.e_a;
            Some(*acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OosRun {
    pub records: Vec<ForecastRecord>,
    pub n_oos: usize,
    pub msfe_ratio: f64,
    pub oos_r2: f64,
    /// Absent with fewer than [`MIN_CW_RECORDS`] records.
    pub clark_west: Option<ClarkWest>,
    pub cssed: Vec<f64>,
}

pub fn evaluate(records: Vec<ForecastRecord>, horizon: usize) -> Result<OosRun> {
    let msfe = msfe_ratio(&records)?;
    let r2 = oos_r2(&records)?;
    let cw = if records.len() >= MIN_CW_RECORDS { Some(clark_west(&records, horizon)?) } else { None };
    let path = cssed(&records);
    Ok(OosRun { n_oos: records.len(), msfe_ratio: msfe, oos_r2: r2, clark_west: cw, cssed: path, records })
}

pub fn run_oos(
    baseline: &ModelSpec,
    augmented: &ModelSpec,
    panel: &AlignedPanel,
    opts: OosOptions,
) -> Result<OosRun> {
    evaluate(expanding_forecasts(baseline, augmented, panel, opts)?, opts.horizon)
}

pub const SUMMARY_HEADER: &str = "asset,signal,n_oos,oos_r2,msfe_ratio,cw_stat,cw_p\n";

pub fn summary_row(asset: &str, signal: &str, run: &OosRun) -> String {
    let (stat, p) = run
        .clark_west
        .map(|c| (format!("{:.6}", c.stat), format!("{:.6}", c.p_value)))
        .unwrap_or_default();
    format!("{asset},{signal},{},{:.6},{:.6},{stat},{p}\n", run.n_oos, run.oos_r2, run.msfe_ratio)
}

pub fn cssed_csv(run: &OosRun) -> String {
    let mut out = String::from("date,e_b,e_a,cssed\n");
    for (r, c) in run.records.iter().zip(&run.cssed) {
        out.push_str(&format!("{},{:.10},{:.10},{:.10}\n", r.date, r.e_b, r.e_a, c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(i: usize) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Days::new(i as u64)
    }

    fn rec(i: usize, y: f64, b: f64, a: f64) -> ForecastRecord {
        ForecastRecord::new(day(i), i, y, b, a, 0.0)
    }

    #[test]
    fn msfe_examples() {
        let same: Vec<_> = (0..5).map(|i| rec(i, i as f64, 0.5, 0.5)).collect();
        assert_eq!(msfe_ratio(&same).unwrap(), 1.0);
        let perfect: Vec<_> = (0..5).map(|i| rec(i, 1.0 + i as f64, 0.0, 1.0 + i as f64)).collect();
        assert_eq!(msfe_ratio(&perfect).unwrap(), 0.0);
        assert_eq!(oos_r2(&perfect).unwrap(), 1.0);
        // e_b = (1, 2, 2), e_a = (1, 1, 2).
        let three = vec![rec(0, 1.0, 0.0, 0.0), rec(1, 2.0, 0.0, 1.0), rec(2, 2.0, 0.0, 0.0)];
        assert!((msfe_ratio(&three).unwrap() - 6.0 / 9.0).abs() < 1e-15);
        assert!(msfe_ratio(&[]).is_err());
        let flat = vec![ForecastRecord::new(day(0), 0, 1.0, 0.0, 0.0, 1.0)];
        assert!(oos_r2(&flat).is_err());
    }

    #[test]
    fn cssed_examples() {
        // e_b = (2, 1), e_a = (1, 2)
        let r = vec![rec(0, 2.0, 0.0, 1.0), rec(1, 1.0, 0.0, -1.0)];
        assert_eq!(cssed(&r), vec![3.0, 0.0]);
        let same: Vec<_> = (0..4).map(|i| rec(i, 1.0, 0.3, 0.3)).collect();
        assert!(cssed(&same).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identical_models_give_zero_loss() {
        let same: Vec<_> = (0..40).map(|i| rec(i, (i as f64).sin(), 0.2, 0.2)).collect();
        assert!(cw_adjusted_loss(&same).iter().all(|f| *f == 0.0));
        let cw = clark_west(&same, 5).unwrap();
        assert_eq!((cw.stat, cw.p_value), (0.0, 0.5));
    }

    #[test]
    fn clark_west_needs_records() {
        let few: Vec<_> = (0..29).map(|i| rec(i, 1.0, 0.0, 0.5)).collect();
        assert!(clark_west(&few, 1).is_err());
    }

    #[test]
    fn swapping_adds_twice_the_adjustment() {
        let r: Vec<_> = (0..40)
            .map(|i| rec(i, (i as f64 * 0.7).sin(), (i as f64 * 0.3).cos() * 0.5, (i as f64 * 1.1).sin() * 0.4))
            .collect();
        let sw: Vec<_> = r.iter().map(ForecastRecord::swapped).collect();
        for ((f, g), x) in cw_adjusted_loss(&r).iter().zip(cw_adjusted_loss(&sw)).zip(&r) {
            let d = x.yhat_baseline - x.yhat_augmented;
            assert!((f + g - 2.0 * d * d).abs() < 1e-12);
        }
        // The unadjusted loss differential is antisymmetric.
        let raw = |rs: &[ForecastRecord]| -> Vec<f64> { rs.iter().map(|x| x.e_b * x.e_b - x.e_a * x.e_a).collect() };
        let a = hac_mean_test(&raw(&r), 4).unwrap();
        let b = hac_mean_test(&raw(&sw), 4).unwrap();
        assert!((a.stat + b.stat).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn cssed_identities(
            data in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 1..60),
            shift in 0usize..1000,
        ) {
            let r: Vec<_> = data.iter().enumerate().map(|(i, (y, b, a))| rec(i, *y, *b, *a)).collect();
            let path = cssed(&r);
            for k in 0..r.len() {
                let prev = if k == 0 { 0.0 } else { path[k - 1] };
                let step = r[k].e_b * r[k].e_b - r[k].e_a * r[k].e_a;
                prop_assert!((path[k] - prev - step).abs() <= 1e-12 * (1.0 + path[k].abs()));
            }
            if let Ok(ratio) = msfe_ratio(&r) {
                let last = *path.last().unwrap();
                let sb: f64 = r.iter().map(|x| x.e_b * x.e_b).sum();
                // Avoid sign decisions inside rounding noise.
                if last.abs() > 1e-9 * sb {
                    prop_assert_eq!(last > 0.0, ratio < 1.0);
                }
            }
            let redated: Vec<_> = r.iter().enumerate()
                .map(|(i, x)| ForecastRecord { date: day(3 * i + shift), ..*x }).collect();
            if let (Ok(a), Ok(b)) = (oos_r2(&r), oos_r2(&redated)) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
