use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::signals::{self, Orientation};

use super::{AlignedPanel, ContractQuote, ControlRecord, PriceBar, TradingCalendar};

/// Validated inputs to [`align_panel`].
#[derive(Debug, Clone, Default)]
pub struct MarketInputs {
    pub quotes: Vec<ContractQuote>,
    pub prices: Vec<PriceBar>,
    pub controls: Vec<ControlRecord>,
}

/// Control columns in panel order, with their accessors.
const CONTROL_COLUMNS: &[(&str, fn(&ControlRecord) -> Option<f64>)] = &[
    ("vix", |c| Some(c.vix_level)),
    ("dxy_ret", |c| Some(c.dxy_return)),
    ("spx_ret", |c| Some(c.spx_return)),
    ("ff_change", |c| c.ff_implied_change),
    ("ust10y_ret", |c| c.ust10y_return),
    ("dvol", |c| c.dvol_level),
];

/// Merges quotes, prices and controls onto the trading calendar.
///
/// The panel has one row per calendar date. Per asset it holds `{asset}.close`
/// and `{asset}.ret`, the log return between consecutive panel dates (so a
/// Friday→Monday return spans the weekend). Controls are joined by date as
/// `vix`, `dxy_ret`, `spx_ret` and, when any value is present, `ff_change`,
/// `ust10y_ret`, `dvol`. Signal columns for every quoted series follow (see
/// [`signals::attach_signal_columns`]); orientations default to raw.
///
/// Records dated outside the calendar are dropped. Nothing is imputed.
pub fn align_panel(
    inputs: &MarketInputs,
    calendar: &TradingCalendar,
    orientations: &BTreeMap<String, Orientation>,
) -> Result<AlignedPanel> {
    if calendar.is_empty() {
        return Err(Error::InvalidInput("trading calendar is empty".into()));
    }
    let dates = calendar.dates().to_vec();
    let on_calendar = |d: NaiveDate| calendar.contains(d);
    let overlap = inputs.prices.iter().any(|p| on_calendar(p.date))
        || inputs.controls.iter().any(|c| on_calendar(c.date))
        || inputs.quotes.iter().any(|q| on_calendar(q.date));
    if !overlap {
        return Err(Error::InsufficientData("no input record falls on a calendar date".into()));
    }

    let mut panel = AlignedPanel::new(dates.clone())?;

    let mut by_asset: BTreeMap<&str, HashMap<NaiveDate, f64>> = BTreeMap::new();
    for p in &inputs.prices {
        by_asset.entry(p.asset_id.as_str()).or_default().insert(p.date, p.close);
    }
    for (asset, closes) in &by_asset {
        let close: Vec<Option<f64>> = dates.iter().map(|d| closes.get(d).copied()).collect();
        let ret = log_returns(&close);
        panel.push_column(format!("{asset}.close"), close)?;
        panel.push_column(format!("{asset}.ret"), ret)?;
    }

    let controls: HashMap<NaiveDate, &ControlRecord> = inputs.controls.iter().map(|c| (c.date, c)).collect();
    for (i, (name, get)) in CONTROL_COLUMNS.iter().enumerate() {
        let col: Vec<Option<f64>> = dates.iter().map(|d| controls.get(d).and_then(|c| get(c))).collect();
        // The three core controls are always emitted so downstream specs can
        // reference them; optional ones only when observed.
        if i < 3 || col.iter().any(Option::is_some) {
            panel.push_column(*name, col)?;
        }
    }

    let series_ids: BTreeSet<&str> = inputs.quotes.iter().map(|q| q.series_id.as_str()).collect();
    let quotes: Vec<ContractQuote> = inputs.quotes.iter().filter(|q| on_calendar(q.date)).cloned().collect();
    let series: Vec<_> = series_ids
        .iter()
        .map(|id| {
            let o = orientations.get(*id).copied().unwrap_or_default();
            signals::build_signal_series(&quotes, id, &dates, o)
        })
        .collect();
    signals::attach_signal_columns(&mut panel, &series)?;
    Ok(panel)
}

/// `ln(P_t / P_{t−1})` between consecutive entries; missing when either
/// close is missing.
pub(crate) fn log_returns(close: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None; close.len()];
    for i in 1..close.len() {
        if let (Some(p0), Some(p1)) = (close[i - 1], close[i]) {
            out[i] = Some((p1 / p0).ln());
        }
    }
    out
}
