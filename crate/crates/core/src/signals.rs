//! Daily repricing signals built from contract quotes.
//!
//! For series `s` on panel date `t` the volume-weighted delta is
//!
//! ```text
//! Δvw(s, t) = Σ_j V(j, t) · (p(j, t) − p(j, t−1)) / Σ_j V(j, t)
//! ```
//!
//! over the active contracts `j`: those with a close on both `t−1` and `t`,
//! where `t−1` is the previous panel date. Days with no active contract or
//! zero total volume are missing, never zero.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};
use crate::market_data::{AlignedPanel, ContractQuote};

/// Default minimum number of usable observations for a series to be tested.
pub const DEFAULT_MIN_COVERAGE: usize = 50;
pub const DEFAULT_EMA_SPAN: usize = 5;

/// Sign convention for the directional variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    Raw,
    /// Negated: positive when the priced outcome becomes less likely
    /// (e.g. rate expectations shifting down for a rate-level series).
    Dovish,
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Orientation::Raw),
            "dovish" => Ok(Orientation::Dovish),
            other => Err(Error::InvalidInput(format!("unknown orientation `{other}`"))),
        }
    }
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Raw => "raw",
            Orientation::Dovish => "dovish",
        }
    }
}

pub fn directional_signal(vw_delta: f64, orientation: Orientation) -> f64 {
    match orientation {
        Orientation::Raw => vw_delta,
        Orientation::Dovish => -vw_delta,
    }
}

/// Signal variants as they appear in panel column names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Vw,
    Abs,
    Dir,
    Ema5,
    Composite,
}

impl Variant {
    pub fn suffix(self) -> &'static str {
        match self {
            Variant::Vw => "vw",
            Variant::Abs => "abs",
            Variant::Dir => "dir",
            Variant::Ema5 => "ema5",
            Variant::Composite => "composite",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "vw" => Variant::Vw,
            "abs" => Variant::Abs,
            "dir" => Variant::Dir,
            "ema5" => Variant::Ema5,
            "composite" => Variant::Composite,
            other => return Err(Error::InvalidInput(format!("unknown signal variant `{other}`"))),
        })
    }
}

/// Panel column name for a signal variant. The composite is cross-sectional
/// and lives under the pseudo-series `composite`.
pub fn column_name(series_id: &str, variant: Variant) -> String {
    match variant {
        Variant::Composite => "composite".to_string(),
        v => format!("{series_id}.{}", v.suffix()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    pub series_id: String,
    pub orientation: Orientation,
    pub dates: Vec<NaiveDate>,
    pub vw_delta: Vec<Option<f64>>,
    pub abs_delta: Vec<Option<f64>>,
    pub directional: Vec<Option<f64>>,
}

impl SignalSeries {
    pub fn present_count(&self) -> usize {
        self.vw_delta.iter().filter(|v| v.is_some()).count()
    }
}

fn quotes_on<'a>(
    quotes: &'a [ContractQuote],
    series_id: &'a str,
    date: NaiveDate,
) -> impl Iterator<Item = &'a ContractQuote> + 'a {
    quotes.iter().filter(move |q| q.series_id == series_id && q.date == date)
}

/// Contracts of `series_id` with a close on both `prev` and `date`.
pub fn active_set(
    quotes: &[ContractQuote],
    series_id: &str,
    prev: NaiveDate,
    date: NaiveDate,
) -> BTreeSet<String> {
    let before: BTreeSet<&str> = quotes_on(quotes, series_id, prev).map(|q| q.contract_id.as_str()).collect();
    quotes_on(quotes, series_id, date)
        .filter(|q| before.contains(q.contract_id.as_str()))
        .map(|q| q.contract_id.clone())
        .collect()
}

/// Weighted mean of `(volume, delta)` pairs; `None` when the total volume is
/// zero or there are no pairs.
fn weighted_delta(pairs: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let (num, den) = pairs
        .into_iter()
        .fold((0.0, 0.0), |(n, d), (v, dp)| (n + v * dp, d + v));
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

pub fn volume_weighted_delta(
    quotes: &[ContractQuote],
    series_id: &str,
    prev: NaiveDate,
    date: NaiveDate,
) -> Option<f64> {
    let before: HashMap<&str, f64> = quotes_on(quotes, series_id, prev)
        .map(|q| (q.contract_id.as_str(), q.close_prob))
        .collect();
    weighted_delta(quotes_on(quotes, series_id, date).filter_map(|q| {
        before
            .get(q.contract_id.as_str())
            .map(|p0| (q.dollar_volume, q.close_prob - p0))
    }))
}

/// Builds the signal series for one series over the given panel dates. The
/// quotes may contain other series; they are ignored.
pub fn build_signal_series(
    quotes: &[ContractQuote],
    series_id: &str,
    dates: &[NaiveDate],
    orientation: Orientation,
) -> SignalSeries {
    // date -> contract -> (close, volume)
    let mut book: BTreeMap<NaiveDate, HashMap<&str, (f64, f64)>> = BTreeMap::new();
    for q in quotes.iter().filter(|q| q.series_id == series_id) {
        book.entry(q.date)
            .or_default()
            .insert(q.contract_id.as_str(), (q.close_prob, q.dollar_volume));
    }
    let mut vw = vec![None; dates.len()];
    for i in 1..dates.len() {
        let (Some(prev), Some(cur)) = (book.get(&dates[i - 1]), book.get(&dates[i])) else {
            continue;
        };
        // Sorted for a deterministic summation order.
        let mut ids: Vec<&&str> = cur.keys().filter(|id| prev.contains_key(**id)).collect();
        ids.sort();
        vw[i] = weighted_delta(ids.into_iter().map(|id| {
            let (p1, v) = cur[*id];
            (v, p1 - prev[*id].0)
        }));
    }
    let abs = vw.iter().map(|v| v.map(f64::abs)).collect();
    let dir = vw.iter().map(|v| v.map(|x| directional_signal(x, orientation))).collect();
    SignalSeries {
        series_id: series_id.to_string(),
        orientation,
        dates: dates.to_vec(),
        vw_delta: vw,
        abs_delta: abs,
        directional: dir,
    }
}

/// Exponential moving average with smoothing `2 / (span + 1)`, updated only
/// on observed days and seeded by the first observation. Output is present
/// exactly where the input is.
pub fn ema_signal(values: &[Option<f64>], span: usize) -> Result<Vec<Option<f64>>> {
    if span < 1 {
        return Err(Error::InvalidInput("EMA span must be at least 1".into()));
    }
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut state: Option<f64> = None;
    Ok(values
        .iter()
        .map(|v| {
            let x = (*v)?;
            let next = match state {
                None => x,
                Some(prev) => alpha * x + (1.0 - alpha) * prev,
            };
            state = Some(next);
            Some(next)
        })
        .collect())
}

/// Unweighted mean of the absolute signals present at row `row`.
pub fn composite_signal(series: &[SignalSeries], row: usize) -> Option<f64> {
    let vals: Vec<f64> = series.iter().filter_map(|s| s.abs_delta.get(row).copied().flatten()).collect();
    crate::stats::mean(&vals)
}

pub fn composite_column(series: &[SignalSeries], n_rows: usize) -> Vec<Option<f64>> {
    (0..n_rows).map(|r| composite_signal(series, r)).collect()
}

/// Appends `{id}.vw`, `{id}.abs`, `{id}.dir`, `{id}.ema5` for each series and
/// the cross-sectional `composite` column.
pub fn attach_signal_columns(panel: &mut AlignedPanel, series: &[SignalSeries]) -> Result<()> {
    for s in series {
        if s.dates != panel.dates() {
            return Err(Error::InvalidInput(format!("signal `{}` is not on the panel dates", s.series_id)));
        }
        panel.push_column(column_name(&s.series_id, Variant::Vw), s.vw_delta.clone())?;
        panel.push_column(column_name(&s.series_id, Variant::Abs), s.abs_delta.clone())?;
        panel.push_column(column_name(&s.series_id, Variant::Dir), s.directional.clone())?;
        panel.push_column(
            column_name(&s.series_id, Variant::Ema5),
            ema_signal(&s.abs_delta, DEFAULT_EMA_SPAN)?,
        )?;
    }
    panel.push_column("composite", composite_column(series, panel.n_rows()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub series_id: String,
    pub usable: usize,
    /// Quarter of the first usable observation, e.g. `2023-Q1`.
    pub first_active: Option<String>,
    pub excluded: bool,
}

impl CoverageRow {
    pub fn first_active_label(&self) -> &str {
        self.first_active.as_deref().unwrap_or("Never active")
    }
}

fn quarter(d: NaiveDate) -> String {
    format!("{}-Q{}", d.year(), (d.month0() / 3) + 1)
}

/// Number of rows `t` with the signal present at `t−1` and `matched` present
/// at `t`.
pub fn usable_count(signal: &[Option<f64>], matched: &[Option<f64>]) -> usize {
    (1..signal.len().min(matched.len()))
        .filter(|&t| signal[t - 1].is_some() && matched[t].is_some())
        .count()
}

/// Usable-observation counts per series after the one-day lag, matched to
/// `matched` (typically an asset's return column).
pub fn coverage_report(
    series: &[SignalSeries],
    matched: &[Option<f64>],
    min_coverage: usize,
) -> Vec<CoverageRow> {
    series
        .iter()
        .map(|s| {
            let usable_rows: Vec<usize> = (1..s.vw_delta.len().min(matched.len()))
                .filter(|&t| s.vw_delta[t - 1].is_some() && matched[t].is_some())
                .collect();
            CoverageRow {
                series_id: s.series_id.clone(),
                usable: usable_rows.len(),
                first_active: usable_rows.first().map(|&t| quarter(s.dates[t])),
                excluded: usable_rows.len() < min_coverage,
            }
        })
        .collect()
}

pub fn coverage_csv(rows: &[CoverageRow]) -> String {
    let mut out = String::from("series_id,usable_obs,first_active,excluded\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.series_id, r.usable, r.first_active_label(), r.excluded));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 9, day).unwrap()
    }

    fn q(contract: &str, day: u32, p: f64, v: f64) -> ContractQuote {
        ContractQuote {
            series_id: "KXFED".into(),
            contract_id: contract.into(),
            date: d(day),
            close_prob: p,
            dollar_volume: v,
            open_interest: 0.0,
        }
    }

    #[test]
    fn active_set_rules() {
        let quotes = vec![q("A", 2, 0.5, 1.0), q("A", 3, 0.6, 1.0), q("B", 3, 0.1, 5.0)];
        let set = active_set(&quotes, "KXFED", d(2), d(3));
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec!["A".to_string()]);

        // C expires at t−1: quoted on 2 only.
        let quotes = vec![
            q("A", 2, 0.5, 1.0),
            q("A", 3, 0.6, 1.0),
            q("B", 2, 0.4, 1.0),
            q("B", 3, 0.3, 1.0),
            q("C", 2, 0.9, 1.0),
        ];
        let set = active_set(&quotes, "KXFED", d(2), d(3));
        assert_eq!(set.len(), 2);
        assert!(!set.contains("C"));
    }

    #[test]
    fn weighted_delta_examples() {
        let single = vec![q("A", 2, 0.50, 10.0), q("A", 3, 0.55, 100.0)];
        assert!((volume_weighted_delta(&single, "KXFED", d(2), d(3)).unwrap() - 0.05).abs() < 1e-12);

        let two = vec![
            q("A", 2, 0.50, 1.0),
            q("A", 3, 0.54, 100.0),
            q("B", 2, 0.30, 1.0),
            q("B", 3, 0.28, 300.0),
        ];
        let got = volume_weighted_delta(&two, "KXFED", d(2), d(3)).unwrap();
        assert!((got - (-0.005)).abs() < 1e-12, "{got}");

        let idle = vec![q("A", 2, 0.5, 0.0), q("A", 3, 0.6, 0.0), q("B", 2, 0.5, 0.0), q("B", 3, 0.4, 0.0)];
        assert_eq!(volume_weighted_delta(&idle, "KXFED", d(2), d(3)), None);
    }

    #[test]
    fn series_builder_matches_pointwise() {
        let quotes = vec![
            q("A", 2, 0.50, 1.0),
            q("A", 3, 0.54, 100.0),
            q("B", 2, 0.30, 1.0),
            q("B", 3, 0.28, 300.0),
            q("B", 4, 0.20, 0.0),
        ];
        let s = build_signal_series(&quotes, "KXFED", &[d(2), d(3), d(4)], Orientation::Dovish);
        assert_eq!(s.vw_delta[0], None);
        assert_eq!(s.vw_delta[1], volume_weighted_delta(&quotes, "KXFED", d(2), d(3)));
        assert_eq!(s.vw_delta[2], None);
        assert!((s.directional[1].unwrap() - 0.005).abs() < 1e-12);
        assert!((s.abs_delta[1].unwrap() - 0.005).abs() < 1e-12);
    }

    #[test]
    fn orientation() {
        assert_eq!(directional_signal(-0.03, Orientation::Dovish), 0.03);
        assert_eq!(directional_signal(0.0, Orientation::Dovish), 0.0);
        assert_eq!(directional_signal(0.02, Orientation::Raw), 0.02);
        assert!("hawkish".parse::<Orientation>().is_err());
        assert_eq!("dovish".parse::<Orientation>().unwrap(), Orientation::Dovish);
    }

    #[test]
    fn ema_examples() {
        let c = vec![Some(0.7); 6];
        assert!(ema_signal(&c, 5).unwrap().iter().all(|v| (v.unwrap() - 0.7).abs() < 1e-15));

        let xs = vec![Some(0.0), Some(0.0), Some(0.0), Some(0.0), Some(0.3)];
        let got = ema_signal(&xs, 5).unwrap();
        // Seeded at 0, so the previous state is 0: 0.3 / 3.
        assert!((got[4].unwrap() - 0.1).abs() < 1e-15);

        let gaps = vec![Some(0.3), None, Some(0.0)];
        let got = ema_signal(&gaps, 5).unwrap();
        assert_eq!(got[1], None);
        assert!((got[2].unwrap() - 0.2).abs() < 1e-15);

        assert!(ema_signal(&[], 5).unwrap().is_empty());
        assert!(ema_signal(&xs, 0).is_err());
    }

    fn series_with_abs(abs: Vec<Option<f64>>) -> SignalSeries {
        SignalSeries {
            series_id: "S".into(),
            orientation: Orientation::Raw,
            dates: (0..abs.len()).map(|i| d(2) + chrono::Days::new(i as u64)).collect(),
            vw_delta: abs.clone(),
            abs_delta: abs.clone(),
            directional: abs,
        }
    }

    #[test]
    fn composite_examples() {
        let a = series_with_abs(vec![Some(0.04), Some(0.02), None]);
        let b = series_with_abs(vec![None, Some(0.06), None]);
        let all = [a, b];
        assert_eq!(composite_signal(&all, 0), Some(0.04));
        assert!((composite_signal(&all, 1).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(composite_signal(&all, 2), None);
    }

    #[test]
    fn coverage_examples() {
        let full = series_with_abs(vec![Some(0.01); 100]);
        let matched = vec![Some(0.0); 100];
        let rows = coverage_report(&[full], &matched, DEFAULT_MIN_COVERAGE);
        assert_eq!(rows[0].usable, 99);
        assert!(!rows[0].excluded);
        assert_eq!(rows[0].first_active.as_deref(), Some("2024-Q3"));

        let never = series_with_abs(vec![None; 100]);
        let rows = coverage_report(&[never], &matched, DEFAULT_MIN_COVERAGE);
        assert_eq!(rows[0].usable, 0);
        assert_eq!(rows[0].first_active_label(), "Never active");
        assert!(rows[0].excluded);

        // 28 scattered observations, like a late-listed series.
        let mut sparse = vec![None; 100];
        for i in 0..28 {
            sparse[70 + i] = Some(0.02);
        }
        let rows = coverage_report(&[series_with_abs(sparse)], &matched, DEFAULT_MIN_COVERAGE);
        assert_eq!(rows[0].usable, 28);
        assert!(rows[0].excluded);
    }

    proptest! {
        #[test]
        fn weighted_delta_properties(
            legs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.01f64..1e5), 1..8),
            scale in 0.01f64..100.0,
        ) {
            let mut quotes = Vec::new();
            for (j, (p0, p1, v)) in legs.iter().enumerate() {
                let id = format!("C{j}");
                quotes.push(q(&id, 2, *p0, 1.0));
                quotes.push(q(&id, 3, *p1, *v));
            }
            let deltas: Vec<f64> = legs.iter().map(|(p0, p1, _)| p1 - p0).collect();
            let lo = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let vw = volume_weighted_delta(&quotes, "KXFED", d(2), d(3)).unwrap();
            prop_assert!(vw >= lo - 1e-12 && vw <= hi + 1e-12);
            prop_assert!(vw.abs() <= deltas.iter().map(|x| x.abs()).fold(0.0, f64::max) + 1e-12);

            let scaled: Vec<ContractQuote> = quotes.iter().map(|x| ContractQuote {
                dollar_volume: x.dollar_volume * scale, ..x.clone()
            }).collect();
            let vw2 = volume_weighted_delta(&scaled, "KXFED", d(2), d(3)).unwrap();
            prop_assert!((vw - vw2).abs() < 1e-12);
        }

        #[test]
        fn ema_stays_in_range(xs in prop::collection::vec(prop::option::of(-1.0f64..1.0), 0..40), span in 1usize..10) {
            let obs: Vec<f64> = xs.iter().flatten().copied().collect();
            let out = ema_signal(&xs, span).unwrap();
            if let (Some(lo), Some(hi)) = (
                obs.iter().cloned().reduce(f64::min),
                obs.iter().cloned().reduce(f64::max),
            ) {
                for v in out.iter().flatten() {
                    prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn composite_of_identical_series(abs in prop::collection::vec(prop::option::of(0.0f64..0.5), 1..20), k in 1usize..5) {
            let all: Vec<SignalSeries> = (0..k).map(|_| series_with_abs(abs.clone())).collect();
            for (r, v) in abs.iter().enumerate() {
                match (composite_signal(&all, r), v) {
                    (Some(c), Some(x)) => prop_assert!((c - x).abs() < 1e-12),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
        }
    }
}
