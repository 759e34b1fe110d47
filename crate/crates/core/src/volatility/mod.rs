//! Forecast targets and HAR regressors from daily log returns.
//!
//! Returns are indexed by panel row; `t` is the signal date. The forward
//! target at `t` uses `r(t+1) ..= r(t+h)`; HAR regressors at `t` use windows
//! ending at `t−1`.

mod garch;

pub use garch::{garch11_fit, garch11_loglik, garch11_variance, GarchFit, GarchOptions};

use crate::error::{Error, Result};
use crate::market_data::AlignedPanel;
use crate::stats;

/// Multiplier turning a daily standard deviation into an annualized one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annualization(f64);

impl Annualization {
    /// `√252`, trading-day convention.
    pub const TRADING_DAYS: Annualization = Annualization(15.874507866387544);

    pub fn calendar_days() -> Self {
        Annualization(365f64.sqrt())
    }

    pub fn periods(n: f64) -> Result<Self> {
        if n > 0.0 && n.is_finite() {
            Ok(Annualization(n.sqrt()))
        } else {
            Err(Error::InvalidInput(format!("annualization periods must be positive, got {n}")))
        }
    }

    pub fn factor(self) -> f64 {
        self.0
    }
}

impl Default for Annualization {
    fn default() -> Self {
        Annualization::TRADING_DAYS
    }
}

/// Annualized sample standard deviation of the `h` returns after `t`.
/// `Ok(None)` when the window runs off the end or contains a missing return.
pub fn realized_vol(returns: &[Option<f64>], t: usize, h: usize, ann: Annualization) -> Result<Option<f64>> {
    if h < 2 {
        return Err(Error::InvalidInput(format!(
            "realized volatility needs h >= 2 (got {h}); use abs_return_target for one day"
        )));
    }
    let Some(window) = returns.get(t + 1..t + 1 + h) else {
        return Ok(None);
    };
    let Some(xs) = window.iter().copied().collect::<Option<Vec<f64>>>() else {
        return Ok(None);
    };
    Ok(stats::sample_std(&xs).map(|s| ann.factor() * s))
}

pub fn rvol_column(returns: &[Option<f64>], h: usize, ann: Annualization) -> Result<Vec<Option<f64>>> {
    (0..returns.len()).map(|t| realized_vol(returns, t, h, ann)).collect()
}

/// `|r(t+1)|`.
pub fn abs_return_target(returns: &[Option<f64>], t: usize) -> Option<f64> {
    returns.get(t + 1).copied().flatten().map(f64::abs)
}

pub fn abs_return_column(returns: &[Option<f64>]) -> Vec<Option<f64>> {
    (0..returns.len()).map(|t| abs_return_target(returns, t)).collect()
}

pub const LOG_RVOL_EPSILON: f64 = 0.001;

/// `ln(value + epsilon)`; missing stays missing.
pub fn log_rvol(value: Option<f64>, epsilon: f64) -> Result<Option<f64>> {
    match value {
        None => Ok(None),
        Some(v) if v < 0.0 => Err(Error::InvalidInput(format!("negative volatility {v}"))),
        Some(v) => Ok(Some((v + epsilon).ln())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarRegressors {
    /// `|r(t−1)|`
    pub lag1: f64,
    /// Mean of `|r|` over `t−5 ..= t−1`.
    pub mean5: f64,
    /// Mean of `|r|` over `t−20 ..= t−1`.
    pub mean20: f64,
}

/// HAR regressors at `t`; `None` until 20 lagged returns are available.
pub fn har_regressors(returns: &[Option<f64>], t: usize) -> Option<HarRegressors> {
    if t < 20 || t > returns.len() {
        return None;
    }
    let window: Vec<f64> = returns[t - 20..t]
        .iter()
        .map(|r| r.map(f64::abs))
        .collect::<Option<Vec<f64>>>()?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    Some(HarRegressors {
        lag1: window[19],
        mean5: mean(&window[15..]),
        mean20: mean(&window),
    })
}

/// Column names used for an asset's derived series.
pub fn target_column(asset: &str, horizon: usize) -> String {
    if horizon == 1 {
        format!("{asset}.absret1")
    } else {
        format!("{asset}.rvol{horizon}")
    }
}

pub fn har_columns(asset: &str) -> [String; 3] {
    [format!("{asset}.har1"), format!("{asset}.har5"), format!("{asset}.har20")]
}

/// Adds the forward targets for each horizon, `{asset}.logrvol5` and the
/// three HAR columns for `asset`, reading returns from `{asset}.ret`.
/// Existing columns with the same names are replaced.
pub fn attach_asset_series(
    panel: &mut AlignedPanel,
    asset: &str,
    horizons: &[usize],
    ann: Annualization,
) -> Result<()> {
    let returns = panel.column(&format!("{asset}.ret"))?.to_vec();
    let mut hs: Vec<usize> = horizons.to_vec();
    if !hs.contains(&5) {
        hs.push(5);
    }
    hs.sort_unstable();
    hs.dedup();
    for &h in &hs {
        let col = if h == 1 { abs_return_column(&returns) } else { rvol_column(&returns, h, ann)? };
        panel.set_column(target_column(asset, h), col)?;
    }
    let rv5 = rvol_column(&returns, 5, ann)?;
    let log5 = rv5
        .iter()
        .map(|v| log_rvol(*v, LOG_RVOL_EPSILON))
        .collect::<Result<Vec<_>>>()?;
    panel.set_column(format!("{asset}.logrvol5"), log5)?;

    let har: Vec<Option<HarRegressors>> = (0..returns.len()).map(|t| har_regressors(&returns, t)).collect();
    let [c1, c5, c20] = har_columns(asset);
    panel.set_column(c1, har.iter().map(|h| h.map(|h| h.lag1)).collect())?;
    panel.set_column(c5, har.iter().map(|h| h.map(|h| h.mean5)).collect())?;
    panel.set_column(c20, har.iter().map(|h| h.map(|h| h.mean20)).collect())?;
    Ok(())
}

/// Adds `{asset}.garchvar`: the fitted GARCH(1,1) conditional variance for
/// the day after `t`. Gaps in the return column are skipped by the fit.
pub fn attach_garch_variance(panel: &mut AlignedPanel, asset: &str, opts: &GarchOptions) -> Result<GarchFit> {
    let returns = panel.column(&format!("{asset}.ret"))?;
    let rows: Vec<usize> = (0..returns.len()).filter(|&i| returns[i].is_some()).collect();
    let xs: Vec<f64> = rows.iter().map(|&i| returns[i].unwrap()).collect();
    let fit = garch11_fit(&xs, opts)?;
    let var = &fit.conditional_variance;
    let mut col = vec![None; panel.n_rows()];
    // Row rows[k] is the signal date for the observation rows[k + 1].
    for k in 0..rows.len().saturating_sub(1) {
        col[rows[k]] = Some(var[k + 1]);
    }
    panel.set_column(format!("{asset}.garchvar"), col)?;
    Ok(fit)
}
