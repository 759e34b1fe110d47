use std::fs;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};

/// Ordered set of trading dates: weekdays minus configured holidays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    dates: Vec<NaiveDate>,
}

impl TradingCalendar {
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.binary_search(&date).is_ok()
    }

    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }
}

pub fn build_calendar(start: NaiveDate, end: NaiveDate, holidays: &[NaiveDate]) -> Result<TradingCalendar> {
    if start > end {
        return Err(Error::InvalidInput(format!("calendar start {start} is after end {end}")));
    }
    let dates = start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .filter(|d| !holidays.contains(d))
        .collect();
    Ok(TradingCalendar { dates })
}

/// Reads a holiday list: one ISO date per line, `#` starts a comment.
pub fn load_holidays(path: &Path) -> Result<Vec<NaiveDate>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let d = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| {
            Error::Schema(format!("{}:{}: bad date `{line}`: {e}", path.display(), i + 1))
        })?;
        out.push(d);
    }
    out.sort();
    out.dedup();
    Ok(out)
}
