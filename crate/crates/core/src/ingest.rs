//! Carbon-Monitor-style CSV ingestion.
//!
//! Rows are parsed into a long-form [`EmissionDataset`] keyed by
//! `(region, sector, date)`, which can then be windowed with
//! [`filter_period`] and reshaped with [`pivot_sector_matrix`] or
//! [`aggregate_total`].

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ISO_DATE: &str = "%Y-%m-%d";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate key ({region}, {sector}, {date})")]
    DuplicateKey {
        region: String,
        sector: Sector,
        date: NaiveDate,
    },
    #[error("unknown sector {0:?}")]
    UnknownSector(String),
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("missing required column {0:?} in header")]
    MissingColumn(&'static str),
    #[error("invalid range: start {start} is after end {end}")]
    InvalidRange { start: NaiveDate, end: NaiveDate },
    #[error("sector {0} has a different date set than the other sectors of the region")]
    RaggedDates(Sector),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for IngestError {
    fn from(e: csv::Error) -> Self {
        IngestError::Csv(e.to_string())
    }
}

/// The five emission sectors, in canonical column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sector {
    Power,
    Industry,
    GroundTransport,
    DomesticAviation,
    InternationalAviation,
}

impl Sector {
    pub const ALL: [Sector; 5] = [
        Sector::Power,
        Sector::Industry,
        Sector::GroundTransport,
        Sector::DomesticAviation,
        Sector::InternationalAviation,
    ];

    /// Human-readable name, as it appears in Carbon Monitor exports.
    pub fn label(self) -> &'static str {
        match self {
            Sector::Power => "Power",
            Sector::Industry => "Industry",
            Sector::GroundTransport => "Ground Transport",
            Sector::DomesticAviation => "Domestic Aviation",
            Sector::InternationalAviation => "International Aviation",
        }
    }

    /// File-name friendly identifier.
    pub fn slug(self) -> &'static str {
        match self {
            Sector::Power => "power",
            Sector::Industry => "industry",
            Sector::GroundTransport => "ground_transport",
            Sector::DomesticAviation => "domestic_aviation",
            Sector::InternationalAviation => "international_aviation",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Lowercases and strips whitespace, underscores and hyphens.
pub(crate) fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace() && *c != '_' && *c != '-')
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for Sector {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_name(s);
        Sector::ALL
            .into_iter()
            .find(|sector| normalize_name(sector.label()) == key)
            .ok_or_else(|| IngestError::UnknownSector(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub region: String,
    pub sector: Sector,
    pub date: NaiveDate,
    /// MtCO₂ per day.
    pub value: f64,
}

impl EmissionRecord {
    fn key(&self) -> (&str, Sector, NaiveDate) {
        (&self.region, self.sector, self.date)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows: usize,
}

/// Validated long-form dataset, sorted by `(region, sector, date)` with
/// unique keys.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionDataset {
    records: Vec<EmissionRecord>,
    provenance: Provenance,
}

impl EmissionDataset {
    /// Builds a dataset from arbitrary records, sorting them and rejecting
    /// duplicate keys or invalid values.
    pub fn from_records(
        mut records: Vec<EmissionRecord>,
        source: impl Into<String>,
    ) -> Result<Self, IngestError> {
        if records.is_empty() {
            return Err(IngestError::EmptyInput);
        }
        for r in &records {
            if !r.value.is_finite() || r.value < 0.0 {
                return Err(IngestError::MalformedRow {
                    line: 0,
                    reason: format!("invalid value {} for {} {} {}", r.value, r.region, r.sector, r.date),
                });
            }
        }
        records.sort_by(|a, b| a.key().cmp(&b.key()));
        if let Some(w) = records.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(IngestError::DuplicateKey {
                region: w[1].region.clone(),
                sector: w[1].sector,
                date: w[1].date,
            });
        }
        let rows = records.len();
        Ok(Self {
            records,
            provenance: Provenance {
                source: source.into(),
                rows,
            },
        })
    }

    pub fn records(&self) -> &[EmissionRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct regions in sorted order.
    pub fn regions(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.region.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    /// Sectors present for `region`, in enum order.
    pub fn sectors(&self, region: &str) -> Vec<Sector> {
        let set: BTreeSet<Sector> = self
            .region_records(region)
            .iter()
            .map(|r| r.sector)
            .collect();
        set.into_iter().collect()
    }

    fn region_records(&self, region: &str) -> &[EmissionRecord] {
        let lo = self.records.partition_point(|r| r.region.as_str() < region);
        let hi = self.records.partition_point(|r| r.region.as_str() <= region);
        &self.records[lo..hi]
    }

    /// `(date, value)` pairs of one series, date-sorted.
    pub fn series(&self, region: &str, sector: Sector) -> Vec<(NaiveDate, f64)> {
        self.region_records(region)
            .iter()
            .filter(|r| r.sector == sector)
            .map(|r| (r.date, r.value))
            .collect()
    }

    /// Writes the canonical CSV form: `region,date,sector,value` with ISO
    /// dates and six-decimal values.
    pub fn write_canonical_csv<W: Write>(&self, out: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["region", "date", "sector", "value"])?;
        for r in &self.records {
            w.write_record([
                r.region.as_str(),
                &r.date.format(ISO_DATE).to_string(),
                r.sector.label(),
                &format!("{:.6}", r.value),
            ])?;
        }
        w.flush().map_err(|e| IngestError::Csv(e.to_string()))?;
        Ok(())
    }

    pub fn to_canonical_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_canonical_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }
}

/// Options for [`parse_emissions_csv_with`].
#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// chrono format string for the date column.
    pub date_format: String,
    /// Sector names (normalized like sector matching) whose rows are skipped
    /// instead of rejected, e.g. Carbon Monitor's "Residential".
    pub ignore_sectors: Vec<String>,
    /// Recorded in the dataset provenance.
    pub source: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            date_format: ISO_DATE.to_string(),
            ignore_sectors: Vec::new(),
            source: "<stream>".to_string(),
        }
    }
}

/// Parses a CSV with columns `region` (or `country`), `date`, `sector` and
/// `value`; column order and case do not matter and extra columns are
/// ignored.
pub fn parse_emissions_csv<R: Read>(source: R, date_format: &str) -> Result<EmissionDataset, IngestError> {
    parse_emissions_csv_with(
        source,
        &ParseOptions {
            date_format: date_format.to_string(),
            ..ParseOptions::default()
        },
    )
}

pub fn parse_emissions_csv_with<R: Read>(
    source: R,
    opts: &ParseOptions,
) -> Result<EmissionDataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if e.is_io_error() => return Err(e.into()),
        Err(_) => return Err(IngestError::EmptyInput),
    };
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(IngestError::EmptyInput);
    }
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let region_col = find(&["region", "country", "country/region", "country_region"])
        .ok_or(IngestError::MissingColumn("region"))?;
    let date_col = find(&["date"]).ok_or(IngestError::MissingColumn("date"))?;
    let sector_col = find(&["sector"]).ok_or(IngestError::MissingColumn("sector"))?;
    let value_col = find(&["value"]).ok_or(IngestError::MissingColumn("value"))?;

    let ignored: HashSet<String> = opts.ignore_sectors.iter().map(|s| normalize_name(s)).collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize| -> Result<&str, IngestError> {
            row.get(idx).ok_or_else(|| IngestError::MalformedRow {
                line,
                reason: format!("missing field {}", idx + 1),
            })
        };
        let sector_raw = field(sector_col)?;
        if ignored.contains(&normalize_name(sector_raw)) {
            continue;
        }
        let sector: Sector = sector_raw.parse()?;
        let region = field(region_col)?.to_string();
        let date_raw = field(date_col)?;
        let date = NaiveDate::parse_from_str(date_raw, &opts.date_format).map_err(|e| {
            IngestError::MalformedRow {
                line,
                reason: format!("date {date_raw:?}: {e}"),
            }
        })?;
        let value_raw = field(value_col)?;
        let value: f64 = value_raw.parse().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("value {value_raw:?} is not a number"),
        })?;
        if !value.is_finite() || value < 0.0 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("value {value_raw:?} must be finite and non-negative"),
            });
        }
        if !seen.insert((region.clone(), sector, date)) {
            return Err(IngestError::DuplicateKey { region, sector, date });
        }
        records.push(EmissionRecord {
            region,
            sector,
            date,
            value,
        });
    }
    EmissionDataset::from_records(records, opts.source.clone())
}

/// Keeps records with `start <= date <= end` whose year is not excluded.
pub fn filter_period(
    ds: &EmissionDataset,
    start: NaiveDate,
    end: NaiveDate,
    excluded_years: &BTreeSet<i32>,
) -> Result<EmissionDataset, IngestError> {
    if start > end {
        return Err(IngestError::InvalidRange { start, end });
    }
    let records: Vec<EmissionRecord> = ds
        .records
        .iter()
        .filter(|r| r.date >= start && r.date <= end && !excluded_years.contains(&r.date.year()))
        .cloned()
        .collect();
    let rows = records.len();
    Ok(EmissionDataset {
        records,
        provenance: Provenance {
            source: ds.provenance.source.clone(),
            rows,
        },
    })
}

/// Dense `n_rows x n_cols` matrix, row-major, with date rows and named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    row_labels: Vec<NaiveDate>,
    col_labels: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixError {
    #[error("data length {len} does not match {rows}x{cols}")]
    Shape { len: usize, rows: usize, cols: usize },
    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("row labels must be strictly increasing")]
    UnsortedRows,
}

impl FeatureMatrix {
    pub fn new(
        data: Vec<f64>,
        row_labels: Vec<NaiveDate>,
        col_labels: Vec<String>,
    ) -> Result<Self, MatrixError> {
        let n_rows = row_labels.len();
        let n_cols = col_labels.len();
        if data.len() != n_rows * n_cols {
            return Err(MatrixError::Shape {
                len: data.len(),
                rows: n_rows,
                cols: n_cols,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite(i / n_cols.max(1), i % n_cols.max(1)));
        }
        if row_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MatrixError::UnsortedRows);
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
            row_labels,
            col_labels,
        })
    }

    /// Builds a matrix from rows, labelling them with consecutive days from
    /// 1970-01-01. Handy for data that has no calendar.
    pub fn from_rows(rows: &[Vec<f64>], col_labels: &[&str]) -> Result<Self, MatrixError> {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
        let labels = (0..rows.len())
            .map(|i| epoch + chrono::Days::new(i as u64))
            .collect();
        let mut data = Vec::with_capacity(rows.len() * col_labels.len());
        for r in rows {
            if r.len() != col_labels.len() {
                return Err(MatrixError::Shape {
                    len: r.len(),
                    rows: 1,
                    cols: col_labels.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, labels, col_labels.iter().map(|s| s.to_string()).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, col)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row_labels(&self) -> &[NaiveDate] {
        &self.row_labels
    }

    pub fn col_labels(&self) -> &[String] {
        &self.col_labels
    }

    /// Returns a copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self, MatrixError> {
        Self::new(
            self.data.iter().map(|v| v * c).collect(),
            self.row_labels.clone(),
            self.col_labels.clone(),
        )
    }

    /// Replaces the columns with new values of a possibly different length.
    /// `row_labels` must match the new column length.
    pub fn from_columns(
        columns: &[Vec<f64>],
        row_labels: Vec<NaiveDate>,
        col_labels: Vec<String>,
    ) -> Result<Self, MatrixError> {
        let n = row_labels.len();
        let mut data = vec![0.0; n * columns.len()];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(MatrixError::Shape {
                    len: col.len(),
                    rows: n,
                    cols: 1,
                });
            }
            for (i, v) in col.iter().enumerate() {
                data[i * columns.len() + j] = *v;
            }
        }
        Self::new(data, row_labels, col_labels)
    }
}

/// One column per sector present for `region` (enum order), one row per date.
pub fn pivot_sector_matrix(ds: &EmissionDataset, region: &str) -> Result<FeatureMatrix, IngestError> {
    let records = ds.region_records(region);
    if records.is_empty() {
        return Err(IngestError::UnknownRegion(region.to_string()));
    }
    let mut by_sector: BTreeMap<Sector, Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for r in records {
        by_sector.entry(r.sector).or_default().push((r.date, r.value));
    }
    let mut iter = by_sector.iter();
    let (_, first) = iter.next().expect("region has records");
    let dates: Vec<NaiveDate> = first.iter().map(|(d, _)| *d).collect();
    for (sector, series) in iter {
        if series.len() != dates.len() || series.iter().zip(&dates).any(|((d, _), e)| d != e) {
            return Err(IngestError::RaggedDates(*sector));
        }
    }
    let columns: Vec<Vec<f64>> = by_sector
        .values()
        .map(|s| s.iter().map(|(_, v)| *v).collect())
        .collect();
    let labels = by_sector.keys().map(|s| s.label().to_string()).collect();
    FeatureMatrix::from_columns(&columns, dates, labels)
        .map_err(|e| IngestError::Csv(e.to_string()))
}

/// Daily totals across all sectors of `region`, date-sorted.
pub fn aggregate_total(ds: &EmissionDataset, region: &str) -> Result<Vec<(NaiveDate, f64)>, IngestError> {
    let records = ds.region_records(region);
    if records.is_empty() {
        return Err(IngestError::UnknownRegion(region.to_string()));
    }
    let mut totals: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    for r in records {
        *totals.entry(r.date).or_insert(0.0) += r.value;
    }
    Ok(totals.into_iter().collect())
}
