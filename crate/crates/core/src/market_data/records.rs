use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One contract's daily close in a prediction-market series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractQuote {
    pub series_id: String,
    pub contract_id: String,
    pub date: NaiveDate,
    /// USD price of a $1 binary payoff, i.e. an implied probability.
    pub close_prob: f64,
    pub dollar_volume: f64,
    pub open_interest: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub asset_id: String,
    pub date: NaiveDate,
    pub close: f64,
}

/// Daily market controls. Only the VIX level and the DXY / S&P 500 returns
/// are required; the rest are used by the robustness battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub date: NaiveDate,
    pub vix_level: f64,
    pub dxy_return: f64,
    pub spx_return: f64,
    pub ff_implied_change: Option<f64>,
    pub ust10y_return: Option<f64>,
    pub dvol_level: Option<f64>,
}

/// A row type that can be ingested from CSV.
pub trait Record: DeserializeOwned + Serialize {
    /// Column names, in file order.
    const COLUMNS: &'static [&'static str];
    /// Uniqueness key within a dataset.
    type Key: Eq + std::hash::Hash;

    fn key(&self) -> Self::Key;
    fn validate(&self) -> std::result::Result<(), String>;
}

fn finite(name: &str, v: f64) -> std::result::Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} is not finite"))
    }
}

impl Record for ContractQuote {
    const COLUMNS: &'static [&'static str] = &[
        "series_id",
        "contract_id",
        "date",
        "close_prob",
        "dollar_volume",
        "open_interest",
    ];
    type Key = (String, String, NaiveDate);

    fn key(&self) -> Self::Key {
        (self.series_id.clone(), self.contract_id.clone(), self.date)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        finite("close_prob", self.close_prob)?;
        finite("dollar_volume", self.dollar_volume)?;
        finite("open_interest", self.open_interest)?;
        if !(0.0..=1.0).contains(&self.close_prob) {
            return Err(format!("close_prob {} outside [0, 1]", self.close_prob));
        }
        if self.dollar_volume < 0.0 {
            return Err(format!("negative dollar_volume {}", self.dollar_volume));
        }
        if self.open_interest < 0.0 {
            return Err(format!("negative open_interest {}", self.open_interest));
        }
        if self.series_id.is_empty() || self.contract_id.is_empty() {
            return Err("empty identifier".into());
        }
        Ok(())
    }
}

impl Record for PriceBar {
    const COLUMNS: &'static [&'static str] = &["asset_id", "date", "close"];
    type Key = (String, NaiveDate);

    fn key(&self) -> Self::Key {
        (self.asset_id.clone(), self.date)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        finite("close", self.close)?;
        if self.close <= 0.0 {
            return Err(format!("non-positive close {}", self.close));
        }
        if self.asset_id.is_empty() {
            return Err("empty asset_id".into());
        }
        Ok(())
    }
}

impl Record for ControlRecord {
    const COLUMNS: &'static [&'static str] = &[
        "date",
        "vix_level",
        "dxy_return",
        "spx_return",
        "ff_implied_change",
        "ust10y_return",
        "dvol_level",
    ];
    type Key = NaiveDate;

    fn key(&self) -> Self::Key {
        self.date
    }

    fn validate(&self) -> std::result::Result<(), String> {
        finite("vix_level", self.vix_level)?;
        finite("dxy_return", self.dxy_return)?;
        finite("spx_return", self.spx_return)?;
        if self.vix_level <= 0.0 {
            return Err(format!("non-positive vix_level {}", self.vix_level));
        }
        for (name, v) in [
            ("ff_implied_change", self.ff_implied_change),
            ("ust10y_return", self.ust10y_return),
            ("dvol_level", self.dvol_level),
        ] {
            if let Some(v) = v {
                finite(name, v)?;
            }
        }
        Ok(())
    }
}

/// A row that failed parsing or validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    /// 1-based line number in the source, header included.
    pub line: u64,
    pub record: String,
    pub reason: String,
}

/// Validated records plus the rows that were dropped.
#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub rejected: Vec<Rejection>,
}

impl<T> Ingested<T> {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

/// Where a dataset comes from. HTTP endpoints are only available with the
/// `http` feature; their responses are normalised to the CSV schema before
/// parsing.
#[derive(Debug, Clone)]
pub enum DataSource {
    File(PathBuf),
    #[cfg(feature = "http")]
    Http { url: String, token_env: Option<String> },
}

impl From<&Path> for DataSource {
    fn from(p: &Path) -> Self {
        DataSource::File(p.to_path_buf())
    }
}

impl From<PathBuf> for DataSource {
    fn from(p: PathBuf) -> Self {
        DataSource::File(p)
    }
}

fn ingest_source<T: Record>(source: &DataSource) -> Result<Ingested<T>> {
    match source {
        DataSource::File(path) => ingest_csv(path),
        #[cfg(feature = "http")]
        DataSource::Http { url, token_env } => {
            let body = super::http::fetch_records(url, token_env.as_deref(), T::COLUMNS)?;
            ingest_reader(body.as_bytes(), url)
        }
    }
}

pub fn ingest_contract_quotes(source: &DataSource) -> Result<Ingested<ContractQuote>> {
    ingest_source(source)
}

pub fn ingest_prices(source: &DataSource) -> Result<Ingested<PriceBar>> {
    ingest_source(source)
}

pub fn ingest_controls(source: &DataSource) -> Result<Ingested<ControlRecord>> {
    ingest_source(source)
}

pub fn ingest_csv<T: Record>(path: &Path) -> Result<Ingested<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path)
}

/// Parses CSV from any reader. `label` names the source in error messages.
pub fn ingest_reader<T: Record, R: Read>(reader: R, label: impl AsRef<Path>) -> Result<Ingested<T>> {
    let label = label.as_ref();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();
    for &required in T::COLUMNS {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Schema(format!(
                "{}: missing column `{required}`",
                label.display()
            )));
        }
    }

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut seen: HashSet<T::Key> = HashSet::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(Error::csv(label, e));
                }
                rejected.push(Rejection { line, record: String::new(), reason: e.to_string() });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let raw = row.iter().collect::<Vec<_>>().join(",");
        let parsed: T = match row.deserialize(Some(&headers)) {
            Ok(r) => r,
            Err(e) => {
                rejected.push(Rejection { line, record: raw, reason: e.to_string() });
                continue;
            }
        };
        if let Err(reason) = parsed.validate() {
            rejected.push(Rejection { line, record: raw, reason });
            continue;
        }
        if !seen.insert(parsed.key()) {
            rejected.push(Rejection { line, record: raw, reason: "duplicate key".into() });
            continue;
        }
        records.push(parsed);
    }
    Ok(Ingested { records, rejected })
}

/// Writes records in the canonical CSV schema.
pub fn write_records<T: Record>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    if records.is_empty() {
        w.write_record(T::COLUMNS).map_err(|e| Error::csv(path, e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Normalises a JSON array of flat objects into CSV text with the given
/// columns. Absent or null fields become empty cells; nested values are
/// rejected.
pub fn json_to_csv(value: &serde_json::Value, columns: &[&str]) -> Result<String> {
    let rows = value
        .as_array()
        .ok_or_else(|| Error::Schema("expected a JSON array of records".into()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::csv("<json>", e);
    w.write_record(columns).map_err(csv_err)?;
    for (i, row) in rows.iter().enumerate() {
        let obj = row
            .as_object()
            .ok_or_else(|| Error::Schema(format!("record {i} is not an object")))?;
        let mut cells = Vec::with_capacity(columns.len());
        for col in columns {
            let cell = match obj.get(*col) {
                None | Some(serde_json::Value::Null) => String::new(),
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(v @ (serde_json::Value::Number(_) | serde_json::Value::Bool(_))) => v.to_string(),
                Some(_) => {
                    return Err(Error::Schema(format!("record {i}: field `{col}` is not a scalar")))
                }
            };
            cells.push(cell);
        }
        w.write_record(&cells).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Schema(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "series_id,contract_id,date,close_prob,dollar_volume,open_interest\n";

    fn parse(body: &str) -> Ingested<ContractQuote> {
        ingest_reader(body.as_bytes(), "test.csv").unwrap()
    }

    #[test]
    fn single_valid_row() {
        let got = parse(&format!("{HEADER}KXFED,K1,2024-09-02,0.62,150,1000\n"));
        assert_eq!(got.rejected_count(), 0);
        assert_eq!(
            got.records,
            vec![ContractQuote {
                series_id: "KXFED".into(),
                contract_id: "K1".into(),
                date: NaiveDate::from_ymd_opt(2024, 9, 2).unwrap(),
                close_prob: 0.62,
                dollar_volume: 150.0,
                open_interest: 1000.0,
            }]
        );
    }

    #[test]
    fn probability_above_one_is_rejected() {
        let got = parse(&format!("{HEADER}KXFED,K1,2024-09-02,1.3,150,1000\n"));
        assert!(got.records.is_empty());
        assert_eq!(got.rejected_count(), 1);
        assert_eq!(got.rejected[0].line, 2);
        assert!(got.rejected[0].reason.contains("outside"));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let row = "KXFED,K1,2024-09-02,0.5,1,1\n";
        let got = parse(&format!("{HEADER}{row}{row}"));
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.rejected[0].reason, "duplicate key");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = ingest_reader::<ContractQuote, _>("series_id,date\n".as_bytes(), "x").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = ingest_csv::<PriceBar>(Path::new("/definitely/not/here.csv")).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn optional_control_fields() {
        let body = "date,vix_level,dxy_return,spx_return,ff_implied_change,ust10y_return,dvol_level\n\
                    2024-01-02,13.2,0.001,-0.002,,,\n\
                    2024-01-03,-1,0.0,0.0,,,\n";
        let got: Ingested<ControlRecord> = ingest_reader(body.as_bytes(), "c").unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.records[0].ff_implied_change, None);
        assert_eq!(got.rejected_count(), 1);
    }

    #[test]
    fn json_normalisation() {
        let v: serde_json::Value = serde_json::json!([
            {"asset_id": "BTC", "date": "2024-01-02", "close": 42000.5},
            {"asset_id": "BTC", "date": "2024-01-03", "close": null}
        ]);
        let text = json_to_csv(&v, PriceBar::COLUMNS).unwrap();
        let got: Ingested<PriceBar> = ingest_reader(text.as_bytes(), "json").unwrap();
        assert_eq!(got.records.len(), 1);
        assert_eq!(got.records[0].close, 42000.5);
        assert_eq!(got.rejected_count(), 1);
        assert!(json_to_csv(&serde_json::json!({"a": 1}), PriceBar::COLUMNS).is_err());
    }
}
