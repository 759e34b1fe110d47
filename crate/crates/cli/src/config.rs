use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;

use pmvol::oos::DEFAULT_INITIAL_WINDOW;
use pmvol::regression::DEFAULT_HAC_LAGS;
use pmvol::signals::{Orientation, Variant, DEFAULT_MIN_COVERAGE};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub out: Option<PathBuf>,
    pub assets: Vec<String>,
    pub signals: Vec<SignalConfig>,
    /// Signal column used for the headline models, OOS and robustness.
    pub primary_signal: String,
    #[serde(default = "default_controls")]
    pub controls: Vec<String>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_annualization")]
    pub annualization: f64,
    pub data: DataConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub oos: OosConfig,
    #[serde(default)]
    pub portfolio: PortfolioConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_controls() -> Vec<String> {
    vec!["vix".into(), "dxy_ret".into(), "spx_ret".into()]
}

fn default_horizons() -> Vec<usize> {
    vec![1, 3, 5, 10]
}

fn default_annualization() -> f64 {
    252.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub id: String,
    #[serde(default = "default_orientation")]
    pub orientation: String,
}

fn default_orientation() -> String {
    "raw".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Synthetic market config; replaces the three data files when set.
    pub synthetic: Option<PathBuf>,
    pub quotes: Option<PathBuf>,
    pub prices: Option<PathBuf>,
    pub controls: Option<PathBuf>,
    pub quotes_url: Option<String>,
    pub prices_url: Option<String>,
    pub controls_url: Option<String>,
    /// Environment variable holding a bearer token for the URLs.
    pub token_env: Option<String>,
    pub holidays: Option<PathBuf>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub hac_lags: usize,
    pub min_coverage: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { hac_lags: DEFAULT_HAC_LAGS, min_coverage: DEFAULT_MIN_COVERAGE }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub variants: Vec<String>,
    pub include_composite: bool,
    pub q: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            variants: vec!["vw".into(), "abs".into(), "dir".into(), "ema5".into()],
            include_composite: true,
            q: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OosConfig {
    pub initial_window: usize,
    pub horizon: usize,
}

impl Default for OosConfig {
    fn default() -> Self {
        Self { initial_window: DEFAULT_INITIAL_WINDOW, horizon: 5 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioConfig {
    /// Annualized volatility target; defaults to the asset's mean realized
    /// volatility.
    pub sigma_bar: Option<f64>,
    pub cap: f64,
    /// Quantile of the lagged signal defining high-signal days for the
    /// forecast-gap summary.
    pub high_signal_quantile: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self { sigma_bar: None, cap: pmvol::portfolio::DEFAULT_WEIGHT_CAP, high_signal_quantile: 0.9 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustnessConfig {
    pub hc3: bool,
    pub non_overlapping: bool,
    pub orthogonalize: Vec<Vec<String>>,
    pub lead_lag: bool,
    pub release_dates: Vec<NaiveDate>,
    pub release_half_width: usize,
    pub bootstrap: bool,
    pub bootstrap_resamples: usize,
    pub block_length: usize,
    pub alternative_targets: bool,
    pub garch: bool,
    pub dvol: bool,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            hc3: true,
            non_overlapping: true,
            orthogonalize: vec![vec!["ff_change".into()]],
            lead_lag: true,
            release_dates: Vec::new(),
            release_half_width: 1,
            bootstrap: true,
            bootstrap_resamples: 2000,
            block_length: 5,
            alternative_targets: true,
            garch: true,
            dvol: true,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn orientations(&self) -> CliResult<Vec<(String, Orientation)>> {
        self.signals
            .iter()
            .map(|s| {
                let o = s.orientation.parse::<Orientation>().map_err(|e| CliError::Config(e.to_string()))?;
                Ok((s.id.clone(), o))
            })
            .collect()
    }

    pub fn grid_variants(&self) -> CliResult<Vec<Variant>> {
        self.grid
            .variants
            .iter()
            .map(|v| v.parse::<Variant>().map_err(|e| CliError::Config(e.to_string())))
            .collect()
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.assets.is_empty() {
            return bad("`assets` is empty".into());
        }
        if self.signals.is_empty() {
            return bad("`signals` is empty".into());
        }
        self.orientations()?;
        self.grid_variants()?;
        let primary_ok = self.primary_signal == "composite"
            || self.signals.iter().any(|s| {
                self.primary_signal
                    .strip_prefix(&s.id)
                    .and_then(|rest| rest.strip_prefix('.'))
                    .is_some_and(|v| v.parse::<Variant>().is_ok())
            });
        if !primary_ok {
            return bad(format!("`primary_signal` {} does not name a configured signal column", self.primary_signal));
        }
        if !(self.grid.q > 0.0 && self.grid.q < 1.0) {
            return bad(format!("grid.q = {} outside (0, 1)", self.grid.q));
        }
        if self.horizons.iter().any(|&h| h == 0) || self.oos.horizon == 0 {
            return bad("horizons must be at least 1".into());
        }
        if self.annualization <= 0.0 {
            return bad("annualization must be positive".into());
        }
        if self.portfolio.cap <= 0.0 || self.portfolio.sigma_bar.is_some_and(|s| s <= 0.0) {
            return bad("portfolio cap and sigma_bar must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.portfolio.high_signal_quantile) {
            return bad("portfolio.high_signal_quantile outside [0, 1]".into());
        }
        let r = &self.robustness;
        if r.bootstrap && (r.bootstrap_resamples == 0 || r.block_length == 0) {
            return bad("bootstrap needs positive resamples and block length".into());
        }
        let d = &self.data;
        let files = [&d.quotes, &d.prices, &d.controls];
        let urls = [&d.quotes_url, &d.prices_url, &d.controls_url];
        let complete = (0..3).all(|i| files[i].is_some() || urls[i].is_some());
        if d.synthetic.is_none() && !complete {
            return bad("data needs `synthetic` or a source for each of quotes, prices and controls".into());
        }
        if let (Some(s), Some(e)) = (d.start, d.end) {
            if s > e {
                return bad(format!("data.start {s} is after data.end {e}"));
            }
        }
        Ok(())
    }
}
