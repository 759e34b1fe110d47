//! Daily prediction-market repricing signals and HAR realized-volatility
//! forecasting.
//!
//! The crate is organised as a pipeline:
//!
//! * [`market_data`] ingests contract quotes, prices and controls and aligns
//!   them on a trading calendar into an [`AlignedPanel`].
//! * [`signals`] turns contract quotes into per-series repricing signals.
//! * [`volatility`] builds forward realized-volatility targets, HAR regressors
//!   and GARCH(1,1) conditional variances.
//! * [`regression`] estimates least-squares models with Newey–West or HC3
//!   covariance.
//! * [`oos`] runs expanding-window forecast comparisons (MSFE ratio, OOS R²,
//!   Clark–West, CSSED).
//! * [`inference`] holds the robustness battery: Benjamini–Hochberg, block
//!   bootstrap, orthogonalization, lead–lag placebo and the signal × asset grid.
//! * [`synthetic`] generates ground-truth panels for verification.
//! * [`portfolio`] converts volatility forecasts into position weights.

pub mod error;
pub mod inference;
pub mod market_data;
pub mod oos;
pub mod portfolio;
pub mod regression;
pub mod rng;
pub mod signals;
pub mod stats;
pub mod synthetic;
pub mod volatility;

pub use error::{Error, Result};
pub use market_data::{AlignedPanel, ContractQuote, ControlRecord, PriceBar, TradingCalendar};
pub use regression::{CovarianceKind, ModelFit, ModelSpec, Regressor};
