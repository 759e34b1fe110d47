use std::collections::BTreeMap;

use pmvol::inference::{
    grid_long_csv, grid_matrix_csv, lead_lag_test, moving_block_bootstrap, orthogonalize,
    release_window_dummy, run_grid, BootstrapOptions, GridTemplate,
};
use pmvol::market_data::{
    align_panel, build_calendar, ingest_contract_quotes, ingest_controls, ingest_prices, load_holidays,
    write_records, AlignedPanel, DataSource, Ingested, MarketInputs, Rejection,
};
use pmvol::oos::{self, OosOptions};
use pmvol::portfolio;
use pmvol::regression::{
    coefficient_table_csv, estimate, estimate_nested, horizon_sweep, model_ladder, regressor_sample, CovarianceKind,
    ModelSpec, Regressor, SampleFilter, Term,
};
use pmvol::rng::derive_seed;
use pmvol::signals::{self, build_signal_series, coverage_csv, coverage_report};
use pmvol::stats;
use pmvol::synthetic::{simulate_market, simulate_panel, SyntheticConfig};
use pmvol::volatility::{self, attach_asset_series, attach_garch_variance, Annualization, GarchOptions};

use crate::artifacts::{csv_field, Artifacts};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, StageExt};

/// Derivation indices for the run seed.
const SYNTHETIC_STREAM: u64 = 0;
const BOOTSTRAP_STREAM: u64 = 1;

/// Horizon of the headline models.
const HEADLINE_HORIZON: usize = 5;
const LONG_HORIZON: usize = 21;

pub struct Loaded {
    pub inputs: MarketInputs,
    pub rejections: Vec<(&'static str, Rejection)>,
}

fn synthetic_config(cfg: &RunConfig) -> CliResult<Option<SyntheticConfig>> {
    let Some(path) = &cfg.data.synthetic else {
        return Ok(None);
    };
    let mut syn = SyntheticConfig::load(&cfg.resolve(path)).stage("config")?;
    syn.seed = derive_seed(cfg.seed, SYNTHETIC_STREAM);
    syn.assets = cfg.assets.clone();
    Ok(Some(syn))
}

#[cfg_attr(not(feature = "http"), allow(unused_variables))]
fn source(cfg: &RunConfig, file: &Option<std::path::PathBuf>, url: &Option<String>) -> CliResult<DataSource> {
    if let Some(url) = url {
        #[cfg(feature = "http")]
        return Ok(DataSource::Http { url: url.clone(), token_env: cfg.data.token_env.clone() });
        #[cfg(not(feature = "http"))]
        return Err(CliError::Config(format!("`{url}`: built without the `http` feature")));
    }
    let file = file.as_ref().expect("validated");
    Ok(DataSource::File(cfg.resolve(file)))
}

/// Reads or simulates the raw inputs and checks that every configured asset
/// and signal series is present.
pub fn load_inputs(cfg: &RunConfig) -> CliResult<Loaded> {
    let loaded = if let Some(syn) = synthetic_config(cfg)? {
        let inputs = simulate_market(&syn, &cfg.orientations()?).stage("ingest")?;
        Loaded { inputs, rejections: Vec::new() }
    } else {
        let d = &cfg.data;
        let q: Ingested<_> = ingest_contract_quotes(&source(cfg, &d.quotes, &d.quotes_url)?).stage("ingest")?;
        let p: Ingested<_> = ingest_prices(&source(cfg, &d.prices, &d.prices_url)?).stage("ingest")?;
        let c: Ingested<_> = ingest_controls(&source(cfg, &d.controls, &d.controls_url)?).stage("ingest")?;
        let mut rejections = Vec::new();
        rejections.extend(q.rejected.into_iter().map(|r| ("quotes", r)));
        rejections.extend(p.rejected.into_iter().map(|r| ("prices", r)));
        rejections.extend(c.rejected.into_iter().map(|r| ("controls", r)));
        Loaded { inputs: MarketInputs { quotes: q.records, prices: p.records, controls: c.records }, rejections }
    };
    for a in &cfg.assets {
        if !loaded.inputs.prices.iter().any(|p| &p.asset_id == a) {
            return Err(CliError::Config(format!("asset `{a}` has no price records")));
        }
    }
    for s in &cfg.signals {
        if !loaded.inputs.quotes.iter().any(|q| q.series_id == s.id) {
            return Err(CliError::Config(format!("signal series `{}` has no quotes", s.id)));
        }
    }
    Ok(loaded)
}

pub fn stage_ingest(cfg: &RunConfig, art: &Artifacts) -> CliResult<Loaded> {
    let loaded = load_inputs(cfg)?;
    let i = &loaded.inputs;
    write_records(&art.path("ingest/quotes.csv")?, &i.quotes).stage("ingest")?;
    write_records(&art.path("ingest/prices.csv")?, &i.prices).stage("ingest")?;
    write_records(&art.path("ingest/controls.csv")?, &i.controls).stage("ingest")?;
    let mut rej = String::from("source,line,record,reason\n");
    for (src, r) in &loaded.rejections {
        rej.push_str(&format!("{src},{},{},{}\n", r.line, csv_field(&r.record), csv_field(&r.reason)));
    }
    art.write("ingest/rejected.csv", &rej)?;
    Ok(loaded)
}

fn annualization(cfg: &RunConfig) -> CliResult<Annualization> {
    Annualization::periods(cfg.annualization).stage("config")
}

/// Aligned panel with signals, targets, HAR regressors and, when configured,
/// the release-window dummy.
pub fn build_panel(cfg: &RunConfig, inputs: &MarketInputs) -> CliResult<AlignedPanel> {
    let d = &cfg.data;
    let dates = || inputs.controls.iter().map(|c| c.date).chain(inputs.prices.iter().map(|p| p.date));
    let start = d.start.or_else(|| dates().min());
    let end = d.end.or_else(|| dates().max());
    let (Some(start), Some(end)) = (start, end) else {
        return Err(CliError::Config("no dated records to build a calendar from".into()));
    };
    let holidays = match &d.holidays {
        Some(p) => load_holidays(&cfg.resolve(p)).stage("signals")?,
        None => Vec::new(),
    };
    let calendar = build_calendar(start, end, &holidays).stage("signals")?;
    let orientations: BTreeMap<String, _> = cfg.orientations()?.into_iter().collect();
    let mut panel = align_panel(inputs, &calendar, &orientations).stage("signals")?;

    let mut horizons = cfg.horizons.clone();
    horizons.extend([cfg.oos.horizon, HEADLINE_HORIZON, LONG_HORIZON]);
    let ann = annualization(cfg)?;
    for a in &cfg.assets {
        attach_asset_series(&mut panel, a, &horizons, ann).stage("signals")?;
    }
    if !cfg.robustness.release_dates.is_empty() {
        let dummy = release_window_dummy(panel.dates(), &cfg.robustness.release_dates, cfg.robustness.release_half_width);
        panel.push_column(RELEASE_COLUMN, dummy).stage("signals")?;
    }
    for c in cfg.controls.iter().chain(std::iter::once(&cfg.primary_signal)) {
        if !panel.has_column(c) {
            return Err(CliError::Config(format!("column `{c}` is not available in the panel")));
        }
    }
    Ok(panel)
}

const RELEASE_COLUMN: &str = "release_window";

pub fn stage_signals(cfg: &RunConfig, loaded: &Loaded, art: &Artifacts) -> CliResult<AlignedPanel> {
    let panel = build_panel(cfg, &loaded.inputs)?;
    let series: Vec<_> = cfg
        .orientations()?
        .into_iter()
        .map(|(id, o)| build_signal_series(&loaded.inputs.quotes, &id, panel.dates(), o))
        .collect();
    for a in &cfg.assets {
        let matched = panel.column(&format!("{a}.ret")).stage("signals")?;
        let rows = coverage_report(&series, matched, cfg.estimate.min_coverage);
        art.write(&format!("signals/coverage_{a}.csv"), &coverage_csv(&rows))?;
    }
    panel.persist(&art.path("signals/panel.csv")?).stage("signals")?;
    Ok(panel)
}

fn nw(cfg: &RunConfig) -> CovarianceKind {
    CovarianceKind::NeweyWest { lags: cfg.estimate.hac_lags }
}

fn signal_term(cfg: &RunConfig) -> String {
    Regressor::lagged(cfg.primary_signal.clone(), 1).name()
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn stage_estimate(cfg: &RunConfig, panel: &AlignedPanel, art: &Artifacts) -> CliResult<()> {
    let mut effects = String::from("asset,signal,coefficient,iqr,effect_iqr,q90,effect_q90\n");
    let term = signal_term(cfg);
    for a in &cfg.assets {
        let ladder = model_ladder(a, HEADLINE_HORIZON, &cfg.controls, &cfg.primary_signal, nw(cfg));
        let fits = estimate_nested(&[ladder.har.clone(), ladder.controls.clone(), ladder.augmented.clone()], panel)
            .stage("estimate")?;
        let table = coefficient_table_csv(&[("M1", &fits[0]), ("M2", &fits[1]), ("M3", &fits[2])]);
        art.write(&format!("estimate/models_{a}.csv"), &table)?;

        let sweep = horizon_sweep(&ladder.augmented, panel, a, &cfg.horizons).stage("estimate")?;
        let mut h = String::from("horizon,n,coefficient,std_error,t_stat,p_value,adj_r2\n");
        for hf in &sweep {
            let t = hf.fit.term(&term).expect("signal term");
            h.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                hf.horizon,
                hf.fit.n_obs,
                f6(t.estimate),
                f6(t.std_error),
                f6(t.t_stat),
                f6(t.p_value),
                f6(hf.fit.adj_r2)
            ));
        }
        art.write(&format!("estimate/horizons_{a}.csv"), &h)?;

        let m3 = &fits[2];
        let sample = regressor_sample(panel, m3, &Regressor::lagged(cfg.primary_signal.clone(), 1)).stage("estimate")?;
        let q = |p| stats::quantile(&sample, p).unwrap_or(f64::NAN);
        let coef = m3.term(&term).expect("signal term").estimate;
        let effect = pmvol::regression::effect_size(m3, &term, 0.25, 0.75, &sample).stage("estimate")?;
        let q90 = pmvol::regression::effect_at_quantile(m3, &term, 0.9, &sample).stage("estimate")?;
        effects.push_str(&format!(
            "{a},{},{},{},{},{},{}\n",
            cfg.primary_signal,
            f6(coef),
            f6(q(0.75) - q(0.25)),
            f6(effect),
            f6(q(0.9)),
            f6(q90)
        ));
    }
    art.write("estimate/effects.csv", &effects)
}

/// Signal columns entering the grid.
pub fn grid_signals(cfg: &RunConfig, panel: &AlignedPanel) -> CliResult<Vec<String>> {
    let variants = cfg.grid_variants()?;
    let mut out: Vec<String> = cfg
        .signals
        .iter()
        .flat_map(|s| variants.iter().map(|v| signals::column_name(&s.id, *v)))
        .collect();
    if cfg.grid.include_composite && panel.has_column("composite") {
        out.push("composite".into());
    }
    Ok(out)
}

pub fn stage_grid(cfg: &RunConfig, panel: &AlignedPanel, art: &Artifacts) -> CliResult<()> {
    let template = GridTemplate {
        horizon: HEADLINE_HORIZON,
        controls: cfg.controls.clone(),
        covariance: nw(cfg),
        min_coverage: cfg.estimate.min_coverage,
    };
    let results = run_grid(&grid_signals(cfg, panel)?, &cfg.assets, &template, panel, cfg.grid.q).stage("grid")?;
    art.write("grid/matrix.csv", &grid_matrix_csv(&results))?;
    art.write("grid/long.csv", &grid_long_csv(&results))
}

pub fn stage_oos(cfg: &RunConfig, panel: &AlignedPanel, art: &Artifacts) -> CliResult<()> {
    let opts = OosOptions { initial: cfg.oos.initial_window, horizon: cfg.oos.horizon };
    let mut summary = String::from(oos::SUMMARY_HEADER);
    let mut gaps = String::from("asset,n_days,benchmark,model,gap,relative_gap\n");
    let signal = panel.column(&cfg.primary_signal).stage("oos")?;
    for a in &cfg.assets {
        let ladder = model_ladder(a, cfg.oos.horizon, &cfg.controls, &cfg.primary_signal, nw(cfg));
        let run = oos::run_oos(&ladder.controls, &ladder.augmented, panel, opts).stage("oos")?;
        summary.push_str(&oos::summary_row(a, &cfg.primary_signal, &run));
        art.write(&format!("oos/cssed_{a}.csv"), &oos::cssed_csv(&run))?;
        let mut fc = String::from("date,y_true,yhat_baseline,yhat_augmented,mean_benchmark\n");
        for r in &run.records {
            fc.push_str(&format!(
                "{},{},{},{},{}\n",
                r.date,
                f6(r.y_true),
                f6(r.yhat_baseline),
                f6(r.yhat_augmented),
                f6(r.mean_benchmark)
            ));
        }
        art.write(&format!("oos/forecasts_{a}.csv"), &fc)?;

        let target = panel.column(&volatility::target_column(a, cfg.oos.horizon)).stage("portfolio")?;
        let sigma_bar = match cfg.portfolio.sigma_bar {
            Some(s) => s,
            None => portfolio::default_sigma_bar(target).stage("portfolio")?,
        };
        let dates: Vec<_> = run.records.iter().map(|r| r.date).collect();
        let forecasts: Vec<Option<f64>> = run.records.iter().map(|r| Some(r.yhat_augmented)).collect();
        let w = portfolio::vol_managed_weights(&dates, &forecasts, sigma_bar, cfg.portfolio.cap).stage("portfolio")?;
        art.write(&format!("portfolio/weights_{a}.csv"), &portfolio::weights_csv(&w))?;

        // Forecast gap on days whose lagged signal is in the upper tail.
        let lagged: Vec<f64> = run.records.iter().filter_map(|r| signal[r.row - 1]).collect();
        if let Some(cut) = stats::quantile(&lagged, cfg.portfolio.high_signal_quantile) {
            let high: Vec<_> = run.records.iter().filter(|r| signal[r.row - 1].is_some_and(|s| s >= cut)).collect();
            let mean = |f: fn(&oos::ForecastRecord) -> f64| high.iter().map(|r| f(r)).sum::<f64>() / high.len() as f64;
            let (bench, model) = (mean(|r| r.yhat_baseline), mean(|r| r.yhat_augmented));
            let (gap, rel) = portfolio::predicted_rv_gap(model, bench).stage("portfolio")?;
            gaps.push_str(&format!("{a},{},{},{},{},{}\n", high.len(), f6(bench), f6(model), f6(gap), f6(rel)));
        }
    }
    art.write("oos/summary.csv", &summary)?;
    art.write("portfolio/gaps.csv", &gaps)
}

struct Check {
    check: String,
    asset: String,
    term: String,
    result: Option<(Term, usize)>,
    note: String,
}

impl Check {
    fn row(&self) -> String {
        let (est, se, t, p, n) = match &self.result {
            Some((t, n)) => (f6(t.estimate), f6(t.std_error), f6(t.t_stat), f6(t.p_value), n.to_string()),
            None => Default::default(),
        };
        format!(
            "{},{},{},{est},{se},{t},{p},{n},{}\n",
            self.check,
            self.asset,
            self.term,
            csv_field(&self.note)
        )
    }
}

pub const ROBUSTNESS_HEADER: &str = "check,asset,term,estimate,std_error,t_stat,p_value,n_obs,note\n";

fn fit_check(check: &str, asset: &str, spec: &ModelSpec, term: &str, panel: &AlignedPanel, note: String) -> CliResult<Check> {
    let (result, note) = match estimate(spec, panel) {
        Ok(fit) => (fit.term(term).map(|t| (t, fit.n_obs)), note),
        Err(e) if !e.is_io() => (None, format!("skipped: {e}")),
        Err(e) => return Err(e).stage("robustness"),
    };
    Ok(Check { check: check.into(), asset: asset.into(), term: term.into(), result, note })
}

pub fn stage_robustness(cfg: &RunConfig, panel: &AlignedPanel, art: &Artifacts) -> CliResult<()> {
    let r = &cfg.robustness;
    let term = signal_term(cfg);
    let mut checks = Vec::new();
    for (ai, a) in cfg.assets.iter().enumerate() {
        let mut panel = panel.clone();
        let ladder = model_ladder(a, HEADLINE_HORIZON, &cfg.controls, &cfg.primary_signal, nw(cfg));
        let m3 = ladder.augmented.clone();
        checks.push(fit_check("baseline", a, &m3, &term, &panel, String::new())?);
        if r.hc3 {
            checks.push(fit_check("hc3", a, &m3.clone().covariance(CovarianceKind::Hc3), &term, &panel, String::new())?);
        }
        if r.non_overlapping {
            let spec = m3
                .clone()
                .covariance(CovarianceKind::Hc3)
                .filter(SampleFilter::EveryNth { step: HEADLINE_HORIZON, offset: 0 });
            checks.push(fit_check("non_overlapping", a, &spec, &term, &panel, "every 5th row".into())?);
        }
        for (k, set) in r.orthogonalize.iter().enumerate() {
            let name = format!("{}.orth{k}", cfg.primary_signal);
            let label = set.join("+");
            match orthogonalize(&panel, &cfg.primary_signal, set) {
                Ok(o) => {
                    panel.set_column(name.clone(), o.residual).stage("robustness")?;
                    let spec = model_ladder(a, HEADLINE_HORIZON, &cfg.controls, &name, nw(cfg)).augmented;
                    let note = format!("controls {label}; first-stage r2 {:.6}", o.r2);
                    checks.push(fit_check("orthogonalized", a, &spec, &format!("L1.{name}"), &panel, note)?);
                }
                Err(e) if !e.is_io() => checks.push(Check {
                    check: "orthogonalized".into(),
                    asset: a.clone(),
                    term: format!("L1.{name}"),
                    result: None,
                    note: format!("controls {label}; skipped: {e}"),
                }),
                Err(e) => return Err(e).stage("robustness"),
            }
        }
        if r.lead_lag {
            match lead_lag_test(&ladder.controls, &cfg.primary_signal, &panel) {
                Ok(ll) => {
                    let lead_term = Regressor::lagged(cfg.primary_signal.clone(), -1).name();
                    checks.push(Check {
                        check: "lead_lag".into(),
                        asset: a.clone(),
                        term: term.clone(),
                        result: ll.lag.term(&term).map(|t| (t, ll.lag.n_obs)),
                        note: "lagged".into(),
                    });
                    checks.push(Check {
                        check: "lead_lag".into(),
                        asset: a.clone(),
                        term: lead_term.clone(),
                        result: ll.lead.term(&lead_term).map(|t| (t, ll.lead.n_obs)),
                        note: "placebo lead".into(),
                    });
                }
                Err(e) => return Err(e).stage("robustness"),
            }
        }
        if panel.has_column(RELEASE_COLUMN) {
            let excl = m3.clone().filter(SampleFilter::ExcludeFlagged(RELEASE_COLUMN.into()));
            checks.push(fit_check("excl_release_window", a, &excl, &term, &panel, String::new())?);
            let with_dummy = m3.clone().with_current(RELEASE_COLUMN);
            checks.push(fit_check("release_dummy", a, &with_dummy, &term, &panel, String::new())?);
            checks.push(fit_check("release_dummy", a, &with_dummy, RELEASE_COLUMN, &panel, String::new())?);
        }
        if r.alternative_targets {
            for target in [format!("{a}.logrvol5"), volatility::target_column(a, LONG_HORIZON)] {
                let mut spec = m3.clone();
                spec.target = target.clone();
                checks.push(fit_check("alt_target", a, &spec, &term, &panel, target)?);
            }
        }
        if r.garch {
            match attach_garch_variance(&mut panel, a, &GarchOptions::default()) {
                Ok(fit) => {
                    let spec = m3.clone().with_current(format!("{a}.garchvar"));
                    let note = format!("omega {:.3e}; alpha {:.4}; beta {:.4}", fit.omega, fit.alpha, fit.beta);
                    checks.push(fit_check("garch_control", a, &spec, &term, &panel, note)?);
                }
                Err(e) if !e.is_io() => checks.push(Check {
                    check: "garch_control".into(),
                    asset: a.clone(),
                    term: term.clone(),
                    result: None,
                    note: format!("skipped: {e}"),
                }),
                Err(e) => return Err(e).stage("robustness"),
            }
        }
        if r.dvol && panel.has_column("dvol") {
            checks.push(fit_check("dvol_control", a, &m3.clone().with_current("dvol"), &term, &panel, String::new())?);
        }
        if r.bootstrap {
            let opts = BootstrapOptions {
                block_length: r.block_length,
                n_resamples: r.bootstrap_resamples,
                seed: derive_seed(derive_seed(cfg.seed, BOOTSTRAP_STREAM), ai as u64),
            };
            let b = moving_block_bootstrap(&panel, &m3, &term, opts).stage("robustness")?;
            let mut dist = String::from("resample,coefficient\n");
            for (i, v) in b.distribution.iter().enumerate() {
                dist.push_str(&format!("{i},{v:.10}\n"));
            }
            art.write(&format!("robustness/bootstrap_{a}.csv"), &dist)?;
            let base = checks.iter().find(|c| c.check == "baseline" && &c.asset == a).and_then(|c| c.result);
            checks.push(Check {
                check: "block_bootstrap".into(),
                asset: a.clone(),
                term: term.clone(),
                result: base.map(|(t, n)| (Term { p_value: b.p_value, ..t }, n)),
                note: format!(
                    "block {}; resamples {}; redraws {}",
                    b.block_length,
                    b.distribution.len(),
                    b.redraws
                ),
            });
        }
    }
    let mut out = String::from(ROBUSTNESS_HEADER);
    for c in &checks {
        out.push_str(&c.row());
    }
    art.write("robustness/report.csv", &out)
}

/// Raw synthetic market files plus an oracle panel with its noiseless
/// targets.
pub fn stage_simulate(cfg: &RunConfig, art: &Artifacts) -> CliResult<()> {
    let Some(syn) = synthetic_config(cfg)? else {
        return Err(CliError::Config("`simulate` needs data.synthetic".into()));
    };
    let m = simulate_market(&syn, &cfg.orientations()?).stage("simulate")?;
    write_records(&art.path("simulate/quotes.csv")?, &m.quotes).stage("simulate")?;
    write_records(&art.path("simulate/prices.csv")?, &m.prices).stage("simulate")?;
    write_records(&art.path("simulate/controls.csv")?, &m.controls).stage("simulate")?;
    let (panel, truth) = simulate_panel(&syn).stage("simulate")?;
    panel.persist(&art.path("simulate/oracle_panel.csv")?).stage("simulate")?;
    let mut t = String::from("date");
    for a in truth.noiseless.keys() {
        t.push_str(&format!(",{a}.noiseless_rvol5"));
    }
    t.push('\n');
    for (i, d) in panel.dates().iter().enumerate() {
        t.push_str(&d.to_string());
        for v in truth.noiseless.values() {
            t.push_str(&format!(",{}", v[i]));
        }
        t.push('\n');
    }
    art.write("simulate/truth.csv", &t)
}
