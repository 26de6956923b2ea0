//! OHLCV CSV ingestion and cleaning.
//!
//! Input files carry exactly the header `symbol,date,open,high,low,close,volume`.
//! An empty numeric field is a missing value. Cleaning sorts by date, collapses
//! exact duplicate rows, rejects conflicting rows for the same date, and fills
//! each missing cell with the median of that field over the whole series.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: &str = "symbol,date,open,high,low,close,volume";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("malformed header: expected `{CSV_HEADER}`, found `{0}`")]
    MalformedHeader(String),
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("no records to clean")]
    EmptyInput,
    #[error("records for more than one symbol ({0} and {1})")]
    MixedSymbols(String, String),
    #[error("conflicting rows for date {0}")]
    ConflictingDuplicateDate(NaiveDate),
    #[error("field `{0}` has no non-missing values")]
    AllMissingField(Field),
    #[error("unknown field `{0}` (expected open, high, low, close or volume)")]
    UnknownField(String),
    #[error("invalid price series: {0}")]
    InvalidSeries(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Numeric OHLCV column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Open,
    High,
    Low,
    #[default]
    Close,
    Volume,
}

impl Field {
    pub const ALL: [Field; 5] = [
        Field::Open,
        Field::High,
        Field::Low,
        Field::Close,
        Field::Volume,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Open => "open",
            Field::High => "high",
            Field::Low => "low",
            Field::Close => "close",
            Field::Volume => "volume",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| DataError::UnknownField(s.to_string()))
    }
}

/// One parsed CSV row. Missing numeric cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcvRecord {
    pub symbol: String,
    pub date: NaiveDate,
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: Option<f64>,
    pub volume: Option<f64>,
}

impl OhlcvRecord {
    pub fn get(&self, field: Field) -> Option<f64> {
        match field {
            Field::Open => self.open,
            Field::High => self.high,
            Field::Low => self.low,
            Field::Close => self.close,
            Field::Volume => self.volume,
        }
    }

    fn set(&mut self, field: Field, value: f64) {
        let slot = match field {
            Field::Open => &mut self.open,
            Field::High => &mut self.high,
            Field::Low => &mut self.low,
            Field::Close => &mut self.close,
            Field::Volume => &mut self.volume,
        };
        *slot = Some(value);
    }

    /// True when all four prices are present and `low ≤ min(open, close)`
    /// or `high ≥ max(open, close)` fails.
    pub fn violates_range(&self) -> bool {
        match (self.open, self.high, self.low, self.close) {
            (Some(o), Some(h), Some(l), Some(c)) => l > o.min(c) || h < o.max(c),
            _ => false,
        }
    }
}

fn parse_number(raw: &str, name: &str, line: usize) -> Result<Option<f64>, DataError> {
    if raw.is_empty() {
        return Ok(None);
    }
    let v: f64 = raw.parse().map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("{name} `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(DataError::MalformedRow {
            line,
            reason: format!("{name} `{raw}` is not finite"),
        });
    }
    Ok(Some(v))
}

/// Parses an OHLCV CSV stream. Line numbers in errors are 1-based and count
/// the header as line 1. LF and CRLF line endings are accepted; blank lines
/// are skipped.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<OhlcvRecord>, DataError> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(DataError::MalformedHeader(String::new())),
    };
    let header = header.trim_end_matches('\r');
    let header = header.strip_prefix('\u{feff}').unwrap_or(header);
    if header != CSV_HEADER {
        return Err(DataError::MalformedHeader(header.to_string()));
    }

    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(DataError::MalformedRow {
                line: line_no,
                reason: format!("expected 7 fields, found {}", cols.len()),
            });
        }
        let cols: Vec<&str> = cols.iter().map(|c| c.trim()).collect();
        let date = NaiveDate::parse_from_str(cols[1], "%Y-%m-%d").map_err(|_| {
            DataError::MalformedRow {
                line: line_no,
                reason: format!("date `{}` is not YYYY-MM-DD", cols[1]),
            }
        })?;
        let volume = parse_number(cols[6], "volume", line_no)?;
        if volume.is_some_and(|v| v < 0.0) {
            return Err(DataError::MalformedRow {
                line: line_no,
                reason: "negative volume".into(),
            });
        }
        records.push(OhlcvRecord {
            symbol: cols[0].to_string(),
            date,
            open: parse_number(cols[2], "open", line_no)?,
            high: parse_number(cols[3], "high", line_no)?,
            low: parse_number(cols[4], "low", line_no)?,
            close: parse_number(cols[5], "close", line_no)?,
            volume,
        });
    }
    Ok(records)
}

/// Cleaned single-symbol series: strictly increasing dates, no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    dates: Vec<NaiveDate>,
    columns: [Vec<f64>; 5],
}

impl PriceSeries {
    /// `columns` is ordered open, high, low, close, volume.
    pub fn new(
        symbol: impl Into<String>,
        dates: Vec<NaiveDate>,
        columns: [Vec<f64>; 5],
    ) -> Result<Self, DataError> {
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidSeries(
                "dates are not strictly increasing".into(),
            ));
        }
        for (field, col) in Field::ALL.iter().zip(&columns) {
            if col.len() != dates.len() {
                return Err(DataError::InvalidSeries(format!(
                    "{field} has {} values for {} dates",
                    col.len(),
                    dates.len()
                )));
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(DataError::InvalidSeries(format!(
                    "{field} has non-finite values"
                )));
            }
        }
        Ok(Self {
            symbol: symbol.into(),
            dates,
            columns,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn field(&self, field: Field) -> &[f64] {
        &self.columns[field.index()]
    }

    pub fn to_records(&self) -> Vec<OhlcvRecord> {
        (0..self.len())
            .map(|i| OhlcvRecord {
                symbol: self.symbol.clone(),
                date: self.dates[i],
                open: Some(self.columns[0][i]),
                high: Some(self.columns[1][i]),
                low: Some(self.columns[2][i]),
                close: Some(self.columns[3][i]),
                volume: Some(self.columns[4][i]),
            })
            .collect()
    }

    /// Writes the series in the input CSV schema. Values use Rust's shortest
    /// round-trip formatting, so re-parsing reproduces them exactly.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DataError> {
        writeln!(out, "{CSV_HEADER}")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.symbol,
                self.dates[i].format("%Y-%m-%d"),
                self.columns[0][i],
                self.columns[1][i],
                self.columns[2][i],
                self.columns[3][i],
                self.columns[4][i]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleaningReport {
    pub rows_in: usize,
    pub rows_out: usize,
    pub duplicates_removed: usize,
    /// Imputed cell counts in open, high, low, close, volume order.
    pub imputed_cells: [usize; 5],
    pub range_violations: usize,
}

impl CleaningReport {
    pub fn imputed(&self, field: Field) -> usize {
        self.imputed_cells[field.index()]
    }
}

/// Median of a non-empty slice; the mean of the two middle values for even
/// counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

/// Sorts, deduplicates and imputes a single-symbol record set.
pub fn clean(records: &[OhlcvRecord]) -> Result<(PriceSeries, CleaningReport), DataError> {
    let first = records.first().ok_or(DataError::EmptyInput)?;
    if let Some(other) = records.iter().find(|r| r.symbol != first.symbol) {
        return Err(DataError::MixedSymbols(
            first.symbol.clone(),
            other.symbol.clone(),
        ));
    }

    let mut sorted: Vec<&OhlcvRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.date);
    let mut kept: Vec<OhlcvRecord> = Vec::with_capacity(sorted.len());
    for r in sorted {
        match kept.last() {
            Some(prev) if prev.date == r.date => {
                if prev != r {
                    return Err(DataError::ConflictingDuplicateDate(r.date));
                }
            }
            _ => kept.push(r.clone()),
        }
    }

    let mut report = CleaningReport {
        rows_in: records.len(),
        rows_out: kept.len(),
        duplicates_removed: records.len() - kept.len(),
        range_violations: kept.iter().filter(|r| r.violates_range()).count(),
        ..Default::default()
    };

    for field in Field::ALL {
        let present: Vec<f64> = kept.iter().filter_map(|r| r.get(field)).collect();
        let fill = median(&present).ok_or(DataError::AllMissingField(field))?;
        for r in kept.iter_mut().filter(|r| r.get(field).is_none()) {
            r.set(field, fill);
            report.imputed_cells[field.index()] += 1;
        }
    }

    let dates = kept.iter().map(|r| r.date).collect();
    let column = |f: Field| {
        kept.iter()
            .map(|r| r.get(f).unwrap_or_default())
            .collect::<Vec<_>>()
    };
    let series = PriceSeries::new(
        first.symbol.clone(),
        dates,
        [
            column(Field::Open),
            column(Field::High),
            column(Field::Low),
            column(Field::Close),
            column(Field::Volume),
        ],
    )?;
    Ok((series, report))
}

/// Projects one field by name out of a cleaned series.
pub fn extract_target(series: &PriceSeries, field: &str) -> Result<Vec<f64>, DataError> {
    let field: Field = field.parse()?;
    Ok(series.field(field).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(body: &str) -> Result<Vec<OhlcvRecord>, DataError> {
        parse_csv(format!("{CSV_HEADER}\n{body}").as_bytes())
    }

    fn rec(day: u32, close: Option<f64>) -> OhlcvRecord {
        OhlcvRecord {
            symbol: "AAPL".into(),
            date: NaiveDate::from_ymd_opt(2020, 1, day).unwrap(),
            open: Some(1.0),
            high: Some(200.0),
            low: Some(0.5),
            close,
            volume: Some(10.0),
        }
    }

    #[test]
    fn parses_a_complete_row() {
        let r = parse("AAPL,2020-01-02,100,101,99,100.5,1000").unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].close, Some(100.5));
        assert_eq!(r[0].date, NaiveDate::from_ymd_opt(2020, 1, 2).unwrap());
    }

    #[test]
    fn empty_field_is_missing() {
        let r = parse("AAPL,2020-01-02,100,101,99,,1000").unwrap();
        assert_eq!(r[0].close, None);
        assert_eq!(r[0].volume, Some(1000.0));
    }

    #[test]
    fn non_numeric_price_reports_line() {
        let err = parse("AAPL,2020-01-02,abc,101,99,100,1000").unwrap_err();
        assert!(
            matches!(err, DataError::MalformedRow { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn bad_date_and_bad_header() {
        let err = parse("AAPL,2020-01-02,1,1,1,1,1\nAAPL,01/03/2020,1,1,1,1,1").unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 3, .. }));
        let err = parse_csv("date,symbol,open,high,low,close,volume\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MalformedHeader(_)));
        assert!(matches!(
            parse_csv("".as_bytes()).unwrap_err(),
            DataError::MalformedHeader(_)
        ));
    }

    #[test]
    fn accepts_crlf() {
        let text = format!("{CSV_HEADER}\r\nAAPL,2020-01-02,1,2,0.5,1.5,7\r\n");
        let r = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(r[0].volume, Some(7.0));
    }

    #[test]
    fn median_imputation_odd_and_even() {
        let (s, rep) = clean(&[rec(1, Some(1.0)), rec(2, None), rec(3, Some(3.0))]).unwrap();
        assert_eq!(s.field(Field::Close), &[1.0, 2.0, 3.0]);
        assert_eq!(rep.imputed(Field::Close), 1);

        // Median of {1, 3, 100} is 3.
        let (s, _) = clean(&[
            rec(1, Some(1.0)),
            rec(2, None),
            rec(3, Some(3.0)),
            rec(4, Some(100.0)),
        ])
        .unwrap();
        assert_eq!(s.field(Field::Close)[1], 3.0);
    }

    #[test]
    fn exact_duplicates_collapse() {
        let (s, rep) = clean(&[rec(2, Some(5.0)), rec(1, Some(4.0)), rec(2, Some(5.0))]).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(rep.duplicates_removed, 1);
        assert_eq!(rep.rows_out + rep.duplicates_removed, rep.rows_in);
        assert_eq!(s.field(Field::Close), &[4.0, 5.0]);
    }

    #[test]
    fn conflicting_duplicate_date_is_an_error() {
        let err = clean(&[rec(1, Some(4.0)), rec(1, Some(4.5))]).unwrap_err();
        assert!(matches!(err, DataError::ConflictingDuplicateDate(_)));
    }

    #[test]
    fn cleaning_errors() {
        assert!(matches!(clean(&[]).unwrap_err(), DataError::EmptyInput));
        assert!(matches!(
            clean(&[rec(1, None), rec(2, None)]).unwrap_err(),
            DataError::AllMissingField(Field::Close)
        ));
        let mut other = rec(2, Some(1.0));
        other.symbol = "MSFT".into();
        assert!(matches!(
            clean(&[rec(1, Some(1.0)), other]).unwrap_err(),
            DataError::MixedSymbols(_, _)
        ));
    }

    #[test]
    fn range_violations_are_counted_not_dropped() {
        let mut bad = rec(1, Some(1.0));
        bad.low = Some(5.0);
        let (s, rep) = clean(&[bad, rec(2, Some(1.0))]).unwrap();
        assert_eq!(rep.range_violations, 1);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn extract_target_projects_fields() {
        let (s, _) = clean(&[rec(1, Some(10.0)), rec(2, Some(11.0))]).unwrap();
        assert_eq!(extract_target(&s, "close").unwrap(), vec![10.0, 11.0]);
        assert_eq!(Field::default(), Field::Close);
        assert!(matches!(
            extract_target(&s, "price").unwrap_err(),
            DataError::UnknownField(_)
        ));
    }

    #[test]
    fn csv_round_trip_of_a_series() {
        let (s, _) = clean(&[rec(1, Some(0.1 + 0.2)), rec(2, Some(1.0 / 3.0))]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let (again, rep) = clean(&parse_csv(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(again, s);
        assert_eq!(rep.imputed_cells, [0; 5]);
    }
}
