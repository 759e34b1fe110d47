use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

const FLOAT_TAG: &str = "f64";

/// Date-indexed table of real-valued columns with per-cell missingness.
///
/// Column order is insertion order and is preserved by persistence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignedPanel {
    dates: Vec<NaiveDate>,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl AlignedPanel {
    pub fn new(dates: Vec<NaiveDate>) -> Result<Self> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("panel dates must be strictly increasing".into()));
        }
        Ok(Self { dates, names: Vec::new(), columns: Vec::new() })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.index(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn row_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Appends a column. Fails on a length mismatch or a duplicate name.
    pub fn push_column(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        let name = name.into();
        if values.len() != self.dates.len() {
            return Err(Error::InvalidInput(format!(
                "column `{name}` has {} values for {} dates",
                values.len(),
                self.dates.len()
            )));
        }
        if name.is_empty() || name.contains(',') || name == "date" {
            return Err(Error::InvalidInput(format!("invalid column name `{name}`")));
        }
        if self.has_column(&name) {
            return Err(Error::InvalidInput(format!("duplicate column `{name}`")));
        }
        self.names.push(name);
        self.columns.push(values);
        Ok(())
    }

    /// Inserts or replaces a column.
    pub fn set_column(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        let name = name.into();
        match self.index(&name) {
            Some(i) if values.len() == self.dates.len() => {
                self.columns[i] = values;
                Ok(())
            }
            Some(_) => Err(Error::InvalidInput(format!("column `{name}` length mismatch"))),
            None => self.push_column(name, values),
        }
    }

    pub fn set_cell(&mut self, name: &str, row: usize, value: Option<f64>) -> Result<()> {
        let i = self.index(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        let cell = self.columns[i]
            .get_mut(row)
            .ok_or_else(|| Error::InvalidInput(format!("row {row} out of range")))?;
        *cell = value;
        Ok(())
    }

    pub fn present_count(&self) -> usize {
        self.columns.iter().flatten().filter(|c| c.is_some()).count()
    }

    /// Writes the panel as CSV. The header is `date` followed by
    /// `<name>:f64` for each column; empty cells are missing values.
    pub fn persist(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
            out.push(':');
            out.push_str(FLOAT_TAG);
        }
        out.push('\n');
        for (r, date) in self.dates.iter().enumerate() {
            out.push_str(&date.format("%Y-%m-%d").to_string());
            for col in &self.columns {
                out.push(',');
                if let Some(v) = col[r] {
                    // `Display` for f64 is shortest round-trip.
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text).map_err(|e| match e {
            Error::Schema(msg) => Error::Schema(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Schema("empty file".into()))?;
        let mut fields = header.split(',');
        if fields.next() != Some("date") {
            return Err(Error::Schema("first column must be `date`".into()));
        }
        let mut names = Vec::new();
        for f in fields {
            let (name, tag) = f
                .rsplit_once(':')
                .ok_or_else(|| Error::Schema(format!("column `{f}` has no type tag")))?;
            if tag != FLOAT_TAG {
                return Err(Error::Schema(format!("column `{name}` has unknown type tag `{tag}`")));
            }
            names.push(name.to_string());
        }
        let mut dates = Vec::new();
        let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let raw_date = cells.next().unwrap_or("");
            let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
                .map_err(|e| Error::Schema(format!("line {}: bad date `{raw_date}`: {e}", i + 2)))?;
            dates.push(date);
            let mut n = 0;
            for (col, cell) in columns.iter_mut().zip(cells.by_ref()) {
                n += 1;
                col.push(if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|e| {
                        Error::Schema(format!("line {}: bad value `{cell}`: {e}", i + 2))
                    })?)
                });
            }
            if n != names.len() || cells.next().is_some() {
                return Err(Error::Schema(format!("line {}: wrong number of fields", i + 2)));
            }
        }
        let mut panel = AlignedPanel::new(dates).map_err(|e| Error::Schema(e.to_string()))?;
        for (name, col) in names.into_iter().zip(columns) {
            panel.push_column(name, col).map_err(|e| Error::Schema(e.to_string()))?;
        }
        Ok(panel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    #[test]
    fn empty_round_trip() {
        let p = AlignedPanel::default();
        assert_eq!(AlignedPanel::from_csv_str(&p.to_csv_string()).unwrap(), p);
    }

    #[test]
    fn missing_cell_survives_round_trip() {
        let mut p = AlignedPanel::new(dates(5)).unwrap();
        p.push_column("a", vec![Some(1.0), Some(0.1 + 0.2), Some(-3e-17), Some(4.0), Some(5.0)]).unwrap();
        p.push_column("b", vec![Some(1.0); 5]).unwrap();
        p.push_column("c.ret", vec![Some(2.0), None, Some(1.0 / 3.0), Some(0.0), Some(-0.0)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        p.persist(&path).unwrap();
        let q = AlignedPanel::load(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.column("c.ret").unwrap()[1], None);
    }

    #[test]
    fn unknown_type_tag_is_schema_error() {
        let err = AlignedPanel::from_csv_str("date,a:str\n2024-01-01,x\n").unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn ragged_row_is_schema_error() {
        assert!(AlignedPanel::from_csv_str("date,a:f64\n2024-01-01,1,2\n").is_err());
        assert!(AlignedPanel::from_csv_str("date,a:f64,b:f64\n2024-01-01,1\n").is_err());
    }

    #[test]
    fn rejects_bad_columns() {
        let mut p = AlignedPanel::new(dates(2)).unwrap();
        assert!(p.push_column("a", vec![None]).is_err());
        p.push_column("a", vec![None, None]).unwrap();
        assert!(p.push_column("a", vec![None, None]).is_err());
        assert!(matches!(p.column("zz"), Err(Error::MissingColumn(_))));
        assert!(AlignedPanel::new(vec![dates(2)[1], dates(2)[0]]).is_err());
    }

    proptest! {
        #[test]
        fn persistence_is_identity(
            cols in prop::collection::vec(
                prop::collection::vec(prop::option::of(-1e6f64..1e6), 7), 0..4)
        ) {
            let mut p = AlignedPanel::new(dates(7)).unwrap();
            for (i, c) in cols.into_iter().enumerate() {
                p.push_column(format!("x{i}"), c).unwrap();
            }
            prop_assert_eq!(AlignedPanel::from_csv_str(&p.to_csv_string()).unwrap(), p);
        }
    }
}
