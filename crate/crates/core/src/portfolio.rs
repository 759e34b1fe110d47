//! Volatility-managed position sizing and forecast-gap arithmetic.

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub const DEFAULT_WEIGHT_CAP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSeries {
    pub dates: Vec<NaiveDate>,
    pub sigma_bar: f64,
    pub sigma_hat: Vec<Option<f64>>,
    pub weight: Vec<Option<f64>>,
}

/// `min(σ̄ / σ̂, cap)` per forecast. A missing forecast yields a missing
/// weight; a non-positive forecast yields the cap.
pub fn vol_managed_weights(
    dates: &[NaiveDate],
    forecasts: &[Option<f64>],
    sigma_bar: f64,
    cap: f64,
) -> Result<WeightSeries> {
    if !(sigma_bar > 0.0) {
        return Err(Error::InvalidInput(format!("volatility target must be positive, got {sigma_bar}")));
    }
    if !(cap > 0.0) {
        return Err(Error::InvalidInput(format!("weight cap must be positive, got {cap}")));
    }
    if dates.len() != forecasts.len() {
        return Err(Error::InvalidInput(format!("{} dates for {} forecasts", dates.len(), forecasts.len())));
    }
    let weight = forecasts
        .iter()
        .map(|f| f.map(|s| if s > 0.0 { (sigma_bar / s).min(cap) } else { cap }))
        .collect();
    Ok(WeightSeries { dates: dates.to_vec(), sigma_bar, sigma_hat: forecasts.to_vec(), weight })
}

/// Default volatility target: mean of the present realized-volatility values.
pub fn default_sigma_bar(realized: &[Option<f64>]) -> Result<f64> {
    let xs: Vec<f64> = realized.iter().flatten().copied().collect();
    crate::stats::mean(&xs).ok_or_else(|| Error::InsufficientData("no realized volatility to average".into()))
}

pub fn weights_csv(w: &WeightSeries) -> String {
    let mut out = String::from("date,sigma_hat,weight\n");
    for ((d, s), x) in w.dates.iter().zip(&w.sigma_hat).zip(&w.weight) {
        let f = |v: &Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        out.push_str(&format!("{d},{},{}\n", f(s), f(x)));
    }
    out
}

/// `(benchmark − model, (benchmark − model) / benchmark)`.
pub fn predicted_rv_gap(model: f64, benchmark: f64) -> Result<(f64, f64)> {
    if !(benchmark > 0.0) {
        return Err(Error::InvalidInput(format!("benchmark forecast must be positive, got {benchmark}")));
    }
    let gap = benchmark - model;
    Ok((gap, gap / benchmark))
}
