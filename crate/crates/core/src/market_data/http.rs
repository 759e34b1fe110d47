//! Optional HTTP adapter. Endpoints may return CSV in the canonical schema or
//! a JSON array of flat records; JSON is normalised to CSV before parsing so
//! both paths share one validator.

use crate::error::{Error, Result};

use super::records::json_to_csv;

/// Fetches `url` and returns CSV text with `columns` as header. A bearer token
/// is read from the environment variable `token_env` when given.
pub fn fetch_records(url: &str, token_env: Option<&str>, columns: &[&str]) -> Result<String> {
    let mut req = ureq::get(url);
    if let Some(var) = token_env {
        let token = std::env::var(var)
            .map_err(|_| Error::Config(format!("environment variable {var} is not set")))?;
        req = req.header("Authorization", &format!("Bearer {token}"));
    }
    let mut resp = req.call().map_err(|e| Error::Http(e.to_string()))?;
    let is_json = resp
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("json"));
    let body = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Error::Http(e.to_string()))?;
    if is_json {
        let value: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| Error::Schema(e.to_string()))?;
        json_to_csv(&value, columns)
    } else {
        Ok(body)
    }
}
