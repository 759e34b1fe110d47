//! Ingestion, calendar construction and panel alignment.
//!
//! Flat files are CSV with a header row, ISO-8601 dates and empty fields for
//! missing values. Quotes, prices and controls each have their own record
//! type; all of them pass through [`ingest_csv`], which validates each row and
//! reports rejected rows instead of aborting.

mod align;
mod calendar;
#[cfg(feature = "http")]
mod http;
mod panel;
mod records;

pub use align::{align_panel, MarketInputs};
pub use calendar::{build_calendar, load_holidays, TradingCalendar};
#[cfg(feature = "http")]
pub use http::fetch_records;
pub use panel::AlignedPanel;
pub use records::{
    ingest_contract_quotes, ingest_controls, ingest_csv, ingest_prices, ingest_reader,
    json_to_csv, write_records, ContractQuote, ControlRecord, DataSource, Ingested, PriceBar,
    Record, Rejection,
};
