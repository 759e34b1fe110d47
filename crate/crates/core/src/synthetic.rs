//! Ground-truth data generation.
//!
//! [`simulate_panel`] produces an [`AlignedPanel`] whose 5-day target obeys
//!
//! ```text
//! rvol5(t) = α + β₁ har1(t) + β₂ har5(t) + β₃ har20(t) + γ'ctrl(t) + δ s(t−1) + ε(t)
//! ```
//!
//! exactly, with `ε` an MA(q) Gaussian sequence mimicking overlapping windows.
//! Signals are drawn first; daily returns are then generated with a
//! volatility equal to the signal-free part of the linear predictor, so the
//! signal reaches only the 5-day target and HAR regressors stay independent
//! of `ε`. [`simulate_market`] produces raw quotes, prices and controls for
//! exercising the ingestion path end to end.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::inference::window_dummy;
use crate::market_data::{
    build_calendar, AlignedPanel, ContractQuote, ControlRecord, MarketInputs, PriceBar,
};
use crate::rng;
use crate::signals::{self, Orientation, Variant};
use crate::volatility::{self, Annualization};

const BURN_IN: usize = 60;
const TRADING_DAYS: f64 = 252.0;
const MARKET_SIGNAL_DECAY: f64 = 0.8;

/// Simulation parameters. Every field has a default, so a config file only
/// lists what it changes.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_days: usize,
    pub start: NaiveDate,
    pub assets: Vec<String>,
    /// Series carrying the injected signal.
    pub signal_id: String,
    /// Additional pure-noise series.
    pub noise_signals: usize,
    pub intercept: f64,
    pub har: [f64; 3],
    /// Loadings on (VIX, DXY return, S&P 500 return).
    pub gamma: [f64; 3],
    /// Coefficient on the lagged signal in the 5-day target.
    pub delta: f64,
    /// Standard deviation of the signal on ordinary days.
    pub signal_scale: f64,
    /// Share of signal variance explained by the Fed Funds change.
    pub signal_ff_r2: f64,
    /// Spacing of announcement dates in panel days; 0 disables them.
    pub event_every: usize,
    /// Signal variance multiplier on announcement dates.
    pub event_variance_ratio: f64,
    /// Direct effect of the ±1-day announcement window on the target.
    pub event_effect: f64,
    pub noise_std: f64,
    /// MA order of the target noise.
    pub noise_overlap: usize,
    pub garch_omega: f64,
    pub garch_alpha: f64,
    pub garch_beta: f64,
    /// Contracts live per series in [`simulate_market`].
    pub contracts_per_series: usize,
    pub contract_life: usize,
    /// Loading of log daily volatility on a geometrically decaying sum of
    /// past standardized signals in [`simulate_market`].
    pub market_signal_loading: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 20230102,
            n_days: 319,
            start: NaiveDate::from_ymd_opt(2023, 1, 2).unwrap(),
            assets: vec!["BTC".into()],
            signal_id: "KXFED".into(),
            noise_signals: 0,
            intercept: 0.35,
            har: [0.5, 6.0, 0.0],
            gamma: [0.004, 0.0, -1.0],
            delta: 0.639,
            // Gaussian signal with an interquartile range of 0.023.
            signal_scale: 0.023 / 1.3489795003921634,
            signal_ff_r2: 0.023,
            event_every: 0,
            event_variance_ratio: 5.0,
            event_effect: 0.0,
            noise_std: 0.10,
            noise_overlap: 4,
            garch_omega: 1e-6,
            garch_alpha: 0.08,
            garch_beta: 0.90,
            contracts_per_series: 3,
            contract_life: 60,
            market_signal_loading: 0.15,
        }
    }
}

impl SyntheticConfig {
    /// Parses a flat `key = value` file.
    pub fn from_str_kv(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str_kv(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_days < 2 {
            return bad(format!("n_days must be at least 2, got {}", self.n_days));
        }
        if self.assets.is_empty() {
            return bad("at least one asset is required".into());
        }
        if self.signal_scale <= 0.0 || self.noise_std < 0.0 {
            return bad("signal_scale must be positive and noise_std non-negative".into());
        }
        if !(0.0..1.0).contains(&self.signal_ff_r2) {
            return bad(format!("signal_ff_r2 {} outside [0, 1)", self.signal_ff_r2));
        }
        if self.event_variance_ratio <= 0.0 {
            return bad("event_variance_ratio must be positive".into());
        }
        check_garch(self.garch_omega, self.garch_alpha, self.garch_beta)
    }

    /// Dates of the simulated panel: consecutive weekdays from `start`.
    pub fn dates(&self) -> Vec<NaiveDate> {
        weekdays(self.start, self.n_days)
    }
}

fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let end = start + Days::new(2 * n as u64 + 7);
    let cal = build_calendar(start, end, &[]).expect("start precedes end");
    cal.dates()[..n].to_vec()
}

fn check_garch(omega: f64, alpha: f64, beta: f64) -> Result<()> {
    if omega <= 0.0 || alpha < 0.0 || beta < 0.0 {
        return Err(Error::Config(format!("invalid GARCH parameters ω={omega}, α={alpha}, β={beta}")));
    }
    if alpha + beta >= 1.0 {
        return Err(Error::Config(format!("α + β = {} is not stationary", alpha + beta)));
    }
    Ok(())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// What the generator used, sufficient to recompute the noiseless part of
/// every target.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub config: SyntheticConfig,
    /// Column name of the injected signal.
    pub signal_column: String,
    /// Noiseless 5-day target per asset (panel rows).
    pub noiseless: BTreeMap<String, Vec<f64>>,
    pub event_rows: Vec<usize>,
}

/// Announcement-style signal: Gaussian with standard deviation
/// `signal_scale`, inflated by `√event_variance_ratio` on event rows. Event
/// rows fall every `event_every` rows starting at `event_every / 2`.
pub fn simulate_announcement_signal(config: &SyntheticConfig, n: usize, stream: u64) -> (Vec<f64>, Vec<usize>) {
    let events: Vec<usize> = if config.event_every == 0 {
        Vec::new()
    } else {
        (config.event_every / 2..n).step_by(config.event_every).collect()
    };
    let mut r = rng::stream(config.seed, stream);
    let boost = config.event_variance_ratio.sqrt();
    let mut out: Vec<f64> = (0..n).map(|_| config.signal_scale * normal(&mut r)).collect();
    for &e in &events {
        out[e] *= boost;
    }
    (out, events)
}

/// GARCH(1,1) path with Gaussian innovations, started at the unconditional
/// variance.
pub fn simulate_garch_returns(omega: f64, alpha: f64, beta: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    check_garch(omega, alpha, beta).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut r = rng::stream(seed, 0);
    let mut s2 = omega / (1.0 - alpha - beta);
    Ok((0..n)
        .map(|_| {
            let e = s2.sqrt() * normal(&mut r);
            s2 = omega + alpha * e * e + beta * s2;
            e
        })
        .collect())
}

struct Controls {
    vix: Vec<f64>,
    dxy: Vec<f64>,
    spx: Vec<f64>,
    ff: Vec<f64>,
    ust: Vec<f64>,
    dvol: Vec<f64>,
}

const FF_STD: f64 = 0.02;

fn simulate_controls(n: usize, r: &mut ChaCha8Rng) -> Controls {
    let mut vix = Vec::with_capacity(n);
    let mut dvol = Vec::with_capacity(n);
    let (mut v, mut d) = (19.0, 55.0);
    for _ in 0..n {
        v = (19.0 + 0.95 * (v - 19.0) + 1.2 * normal(r)).max(9.0);
        d = (55.0 + 0.95 * (d - 55.0) + 2.0 * normal(r)).max(20.0);
        vix.push(v);
        dvol.push(d);
    }
    let mut draw = |sd: f64| -> Vec<f64> { (0..n).map(|_| sd * normal(r)).collect() };
    Controls { vix, dxy: draw(0.004), spx: draw(0.01), ff: draw(FF_STD), ust: draw(0.005), dvol }
}

fn opt(xs: &[f64]) -> Vec<Option<f64>> {
    xs.iter().copied().map(Some).collect()
}

pub fn simulate_panel(config: &SyntheticConfig) -> Result<(AlignedPanel, GroundTruth)> {
    config.validate()?;
    let n = config.n_days;
    let total = n + BURN_IN;
    let ann = Annualization::TRADING_DAYS;

    let ctrl = simulate_controls(total, &mut rng::stream(config.seed, 0));
    let (mut signal, events_total) = simulate_announcement_signal(config, total, 1);
    // Mix in the Fed Funds change to plant the first-stage R².
    let w = config.signal_ff_r2.sqrt();
    for (s, ff) in signal.iter_mut().zip(&ctrl.ff) {
        *s = w * config.signal_scale * ff / FF_STD + (1.0 - config.signal_ff_r2).sqrt() * *s;
    }
    let dummy_total = window_dummy(total, &events_total, 1);

    let mut panel = AlignedPanel::new(config.dates())?;
    let keep = |xs: &[f64]| opt(&xs[BURN_IN..]);
    panel.push_column("vix", keep(&ctrl.vix))?;
    panel.push_column("dxy_ret", keep(&ctrl.dxy))?;
    panel.push_column("spx_ret", keep(&ctrl.spx))?;
    panel.push_column("ff_change", keep(&ctrl.ff))?;
    panel.push_column("ust10y_ret", keep(&ctrl.ust))?;
    panel.push_column("dvol", keep(&ctrl.dvol))?;

    let sig_id = &config.signal_id;
    let dir = keep(&signal);
    panel.push_column(signals::column_name(sig_id, Variant::Vw), dir.clone())?;
    panel.push_column(signals::column_name(sig_id, Variant::Abs), dir.iter().map(|v| v.map(f64::abs)).collect())?;
    panel.push_column(signals::column_name(sig_id, Variant::Dir), dir.clone())?;
    let abs: Vec<Option<f64>> = dir.iter().map(|v| v.map(f64::abs)).collect();
    panel.push_column(signals::column_name(sig_id, Variant::Ema5), signals::ema_signal(&abs, 5)?)?;
    let mut abs_cols = vec![abs];
    let mut noise_rng = rng::stream(config.seed, 2);
    for k in 0..config.noise_signals {
        let id = format!("N{}", k + 1);
        let s: Vec<Option<f64>> = (0..n).map(|_| Some(config.signal_scale * normal(&mut noise_rng))).collect();
        let a: Vec<Option<f64>> = s.iter().map(|v| v.map(f64::abs)).collect();
        panel.push_column(signals::column_name(&id, Variant::Vw), s.clone())?;
        panel.push_column(signals::column_name(&id, Variant::Abs), a.clone())?;
        panel.push_column(signals::column_name(&id, Variant::Dir), s)?;
        panel.push_column(signals::column_name(&id, Variant::Ema5), signals::ema_signal(&a, 5)?)?;
        abs_cols.push(a);
    }
    let composite = (0..n)
        .map(|t| crate::stats::mean(&abs_cols.iter().filter_map(|c| c[t]).collect::<Vec<_>>()))
        .collect();
    panel.push_column("composite", composite)?;
    panel.push_column("release_window", keep(&dummy_total))?;

    let mut noiseless = BTreeMap::new();
    for (a, asset) in config.assets.iter().enumerate() {
        let mut shocks = rng::stream(config.seed, 10 + 2 * a as u64);
        let mut noise_rng = rng::stream(config.seed, 11 + 2 * a as u64);
        let q = config.noise_overlap;
        let u: Vec<f64> = (0..total + q).map(|_| normal(&mut noise_rng)).collect();
        let ma_scale = config.noise_std / ((q + 1) as f64).sqrt();

        let mut returns: Vec<Option<f64>> = Vec::with_capacity(total);
        let mut target = Vec::with_capacity(total);
        let mut clean = Vec::with_capacity(total);
        let mut prev_base = config.intercept.max(0.05);
        for t in 0..total {
            // Return for day t uses the signal-free predictor from t−1.
            returns.push(Some(prev_base / TRADING_DAYS.sqrt() * normal(&mut shocks)));
            let har = volatility::har_regressors(&returns, t);
            let har_part = har.map_or(prev_base, |h| {
                config.intercept
                    + config.har[0] * h.lag1
                    + config.har[1] * h.mean5
                    + config.har[2] * h.mean20
                    + config.gamma[0] * ctrl.vix[t]
                    + config.gamma[1] * ctrl.dxy[t]
                    + config.gamma[2] * ctrl.spx[t]
            });
            let sig_part = if t > 0 { config.delta * signal[t - 1] } else { 0.0 };
            let m = har_part + sig_part + config.event_effect * dummy_total[t];
            let eps = ma_scale * u[t..=t + q].iter().sum::<f64>();
            clean.push(m);
            target.push(m + eps);
            prev_base = har_part.max(0.05);
        }

        let rets = &returns[BURN_IN..];
        panel.push_column(format!("{asset}.ret"), rets.to_vec())?;
        let har: Vec<_> = (BURN_IN..total).map(|t| volatility::har_regressors(&returns, t)).collect();
        let [c1, c5, c20] = volatility::har_columns(asset);
        panel.push_column(c1, har.iter().map(|h| h.map(|h| h.lag1)).collect())?;
        panel.push_column(c5, har.iter().map(|h| h.map(|h| h.mean5)).collect())?;
        panel.push_column(c20, har.iter().map(|h| h.map(|h| h.mean20)).collect())?;
        panel.push_column(volatility::target_column(asset, 1), volatility::abs_return_column(rets))?;
        for h in [3usize, 10, 21] {
            panel.push_column(volatility::target_column(asset, h), volatility::rvol_column(rets, h, ann)?)?;
        }
        let y = keep(&target);
        let logy = y
            .iter()
            .map(|v| volatility::log_rvol(v.map(|x| x.max(0.0)), volatility::LOG_RVOL_EPSILON))
            .collect::<Result<Vec<_>>>()?;
        panel.push_column(volatility::target_column(asset, 5), y)?;
        panel.push_column(format!("{asset}.logrvol5"), logy)?;
        noiseless.insert(asset.clone(), clean[BURN_IN..].to_vec());
    }

    let event_rows = events_total.iter().filter(|&&e| e >= BURN_IN).map(|e| e - BURN_IN).collect();
    let truth = GroundTruth {
        config: config.clone(),
        signal_column: signals::column_name(sig_id, Variant::Dir),
        noiseless,
        event_rows,
    };
    Ok((panel, truth))
}

/// Raw quotes, prices and controls. Quotes exist on weekdays; crypto prices
/// also on weekends. Each series keeps `contracts_per_series` staggered
/// contracts alive, each listed for `contract_life` weekdays. Returns follow
/// GARCH(1,1) with log volatility shifted by `market_signal_loading` times a
/// decaying sum of past standardized directional signals of the first series.
pub fn simulate_market(config: &SyntheticConfig, series: &[(String, Orientation)]) -> Result<MarketInputs> {
    config.validate()?;
    if series.is_empty() {
        return Err(Error::Config("at least one signal series is required".into()));
    }
    let weekdays = config.dates();
    let last = *weekdays.last().expect("n_days >= 2");
    let all_days: Vec<NaiveDate> = config.start.iter_days().take_while(|d| *d <= last).collect();

    let mut quotes = Vec::new();
    let life = config.contract_life.max(2);
    let per = config.contracts_per_series.max(1);
    for (s, (id, _)) in series.iter().enumerate() {
        let mut r = rng::stream(config.seed, 100 + s as u64);
        // Contract c is listed on weekday c * life / per − life (staggered).
        let n_contracts = weekdays.len() * per / life + per + 1;
        for c in 0..n_contracts {
            let listed = (c * life / per) as i64 - life as i64;
            let mut logit: f64 = r.random_range(-2.0..2.0);
            let activity: f64 = r.random_range(0.2..1.5);
            for k in 0..life as i64 {
                let idx = listed + k;
                let step = 0.15 * normal(&mut r);
                logit += step;
                if idx < 0 || idx as usize >= weekdays.len() {
                    continue;
                }
                let p = 1.0 / (1.0 + (-logit).exp());
                let volume = if r.random::<f64>() < 0.1 {
                    0.0
                } else {
                    (activity * (8.0 + 1.2 * normal(&mut r)).exp()).round()
                };
                quotes.push(ContractQuote {
                    series_id: id.clone(),
                    contract_id: format!("{id}-C{c:04}"),
                    date: weekdays[idx as usize],
                    close_prob: (p * 100.0).round() / 100.0,
                    dollar_volume: volume,
                    open_interest: (volume * 20.0 + 1000.0).round(),
                });
            }
        }
    }

    let (ref first_id, first_orient) = series[0];
    let lead = signals::build_signal_series(&quotes, first_id, &weekdays, first_orient);
    let lead_sd = {
        let xs: Vec<f64> = lead.directional.iter().flatten().copied().collect();
        crate::stats::sample_std(&xs).filter(|s| *s > 0.0).unwrap_or(1.0)
    };

    let mut ctrl_rng = rng::stream(config.seed, 3);
    let ctrl = simulate_controls(weekdays.len(), &mut ctrl_rng);
    let controls = weekdays
        .iter()
        .enumerate()
        .map(|(i, d)| ControlRecord {
            date: *d,
            vix_level: (ctrl.vix[i] * 100.0).round() / 100.0,
            dxy_return: ctrl.dxy[i],
            spx_return: ctrl.spx[i],
            ff_implied_change: Some(ctrl.ff[i]),
            ust10y_return: Some(ctrl.ust[i]),
            dvol_level: Some(ctrl.dvol[i]),
        })
        .collect();

    let mut prices = Vec::new();
    for (a, asset) in config.assets.iter().enumerate() {
        let mut r = rng::stream(config.seed, 200 + a as u64);
        let mut s2 = config.garch_omega / (1.0 - config.garch_alpha - config.garch_beta);
        let mut close = 30_000.0 / (a as f64 + 1.0);
        let mut weekday_idx = 0usize;
        let mut state = 0.0;
        for d in &all_days {
            let scale = (config.market_signal_loading * state).exp();
            let e = s2.sqrt() * normal(&mut r);
            close *= (e * scale).exp();
            s2 = config.garch_omega + config.garch_alpha * e * e + config.garch_beta * s2;
            // The signal observed at this weekday's close moves volatility
            // from the next day on, decaying geometrically.
            if weekday_idx < weekdays.len() && weekdays[weekday_idx] == *d {
                let z = lead.directional[weekday_idx].unwrap_or(0.0) / lead_sd;
                state = MARKET_SIGNAL_DECAY * state + z;
                weekday_idx += 1;
            }
            prices.push(PriceBar { asset_id: asset.clone(), date: *d, close: (close * 1e4).round() / 1e4 });
        }
    }
    Ok(MarketInputs { quotes, prices, controls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{estimate, model_ladder, CovarianceKind};

    fn ctrl_names() -> Vec<String> {
        vec!["vix".into(), "dxy_ret".into(), "spx_ret".into()]
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig::default();
        let (a, _) = simulate_panel(&cfg).unwrap();
        let (b, _) = simulate_panel(&cfg).unwrap();
        assert_eq!(a, b);
        let other = SyntheticConfig { seed: 1, ..cfg };
        assert_ne!(simulate_panel(&other).unwrap().0, a);
    }

    #[test]
    fn noiseless_target_is_recomputable() {
        let cfg = SyntheticConfig { noise_std: 0.0, ..Default::default() };
        let (p, truth) = simulate_panel(&cfg).unwrap();
        let y = p.column("BTC.rvol5").unwrap();
        let sig = p.column(&truth.signal_column).unwrap();
        let cols: Vec<&[Option<f64>]> =
            ["BTC.har1", "BTC.har5", "BTC.har20", "vix", "dxy_ret", "spx_ret"].iter().map(|c| p.column(c).unwrap()).collect();
        let b = [cfg.har[0], cfg.har[1], cfg.har[2], cfg.gamma[0], cfg.gamma[1], cfg.gamma[2]];
        for t in 1..p.n_rows() {
            let mut m = cfg.intercept + cfg.delta * sig[t - 1].unwrap();
            for (c, coef) in cols.iter().zip(b) {
                m += coef * c[t].unwrap();
            }
            assert!((m - truth.noiseless["BTC"][t]).abs() < 1e-12);
            assert!((m - y[t].unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_recovery_without_noise() {
        let cfg = SyntheticConfig { noise_std: 0.0, ..Default::default() };
        let (p, _) = simulate_panel(&cfg).unwrap();
        let ladder = model_ladder("BTC", 5, &ctrl_names(), "KXFED.dir", CovarianceKind::Hc0);
        let fit = estimate(&ladder.augmented, &p).unwrap();
        assert_eq!(fit.n_obs, 318);
        assert!((fit.term("L1.KXFED.dir").unwrap().estimate - 0.639).abs() < 1e-8);
    }

    #[test]
    fn announcement_events() {
        let cfg = SyntheticConfig { event_every: 22, ..Default::default() };
        let (s, events) = simulate_announcement_signal(&cfg, 264, 1);
        assert_eq!(events.len(), 12);
        assert_eq!(s.len(), 264);
        let none = SyntheticConfig { event_every: 0, ..Default::default() };
        assert!(simulate_announcement_signal(&none, 264, 1).1.is_empty());
    }

    #[test]
    fn garch_paths() {
        assert!(simulate_garch_returns(1e-6, 0.5, 0.5, 10, 1).is_err());
        let iid = simulate_garch_returns(4e-4, 0.0, 0.0, 5000, 2).unwrap();
        let var = iid.iter().map(|x| x * x).sum::<f64>() / 5000.0;
        assert!((var / 4e-4 - 1.0).abs() < 0.06);
        let fat = simulate_garch_returns(1e-6, 0.08, 0.90, 5000, 3).unwrap();
        assert!(crate::stats::kurtosis(&fat).unwrap() > 3.0);
        assert_eq!(fat, simulate_garch_returns(1e-6, 0.08, 0.90, 5000, 3).unwrap());
    }

    #[test]
    fn config_parsing() {
        let cfg = SyntheticConfig::from_str_kv("seed = 5\nassets = [\"BTC\", \"ETH\"]\ndelta = 0.0\n").unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.assets.len(), 2);
        assert!(SyntheticConfig::from_str_kv("bogus = 1\n").is_err());
        assert!(SyntheticConfig::from_str_kv("garch_alpha = 0.5\ngarch_beta = 0.6\n").is_err());
    }

    #[test]
    fn market_passes_validation() {
        use crate::market_data::Record;
        let cfg = SyntheticConfig { n_days: 80, assets: vec!["BTC".into(), "ETH".into()], ..Default::default() };
        let m = simulate_market(&cfg, &[("KXFED".into(), Orientation::Dovish), ("KXCPI".into(), Orientation::Raw)]).unwrap();
        assert!(m.quotes.iter().all(|q| q.validate().is_ok()));
        assert!(m.prices.iter().all(|p| p.validate().is_ok()));
        assert!(m.controls.iter().all(|c| c.validate().is_ok()));
        let sig = signals::build_signal_series(&m.quotes, "KXFED", &cfg.dates(), Orientation::Dovish);
        assert!(sig.present_count() > 40);
    }
}
