//! Pipeline configuration: a plain-text `key = value` file plus flag
//! overrides.
//!
//! ```text
//! # comments start with '#'
//! data = synthetic.csv
//! regions = Region A, Region B
//! sectors = Power, Industry, Ground Transport
//! excluded_years = 2020
//! epochs = 100
//! override.Region A.Power.batch_size = 8
//! ```
//!
//! Override keys are `override.<region>.<sector>.<key>`, where `<key>` is
//! one of `batch_size`, `dropout`, `epochs`, `lr` or `seed`. The region may
//! contain spaces; it is everything between the first and the last two dots.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{EmissionDataset, Sector, ISO_DATE};
use crate::lstm::TrainConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{key}: {msg}")]
    BadValue { key: String, msg: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("override for {region} / {sector} does not match the data selection")]
    DanglingOverride { region: String, sector: Sector },
    #[error("{0}")]
    Invalid(String),
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Data used for PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaMode {
    /// Filtered daily values as ingested.
    Raw,
    /// After Z-score outlier replacement.
    Cleaned,
    /// Cleaned, then min-max scaled per column.
    Scaled,
}

/// Per-(region, sector) hyperparameter overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperOverride {
    pub batch_size: Option<usize>,
    pub dropout: Option<f64>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub data: Option<PathBuf>,
    pub date_format: String,
    pub ignore_sectors: Vec<String>,
    /// Empty selects every region in the data.
    pub regions: Vec<String>,
    /// Sectors to clean, train and forecast.
    pub sectors: Vec<Sector>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub excluded_years: BTreeSet<i32>,
    pub zscore_threshold: f64,
    pub ma_window: usize,
    pub seq_len: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// Hidden units per LSTM layer.
    pub units: usize,
    pub layers: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub clip_norm: Option<f64>,
    pub horizon: usize,
    pub pca_components: usize,
    pub pca_center: bool,
    pub pca_mode: PcaMode,
    pub energy_input: Option<PathBuf>,
    /// Keyed by `(region, sector)`.
    pub overrides: BTreeMap<String, BTreeMap<Sector, HyperOverride>>,
    /// Directory relative paths are resolved against; not part of the hash.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: None,
            date_format: ISO_DATE.to_string(),
            ignore_sectors: Vec::new(),
            regions: Vec::new(),
            sectors: vec![Sector::Power, Sector::Industry, Sector::GroundTransport],
            start: date(2019, 1, 1),
            end: date(2023, 2, 28),
            excluded_years: BTreeSet::from([2020]),
            zscore_threshold: 3.0,
            ma_window: 7,
            seq_len: 30,
            train_fraction: 0.8,
            validation_fraction: 0.1,
            units: 50,
            layers: 3,
            batch_size: 32,
            dropout: 0.16,
            epochs: 100,
            lr: 1e-3,
            seed: 0,
            clip_norm: None,
            horizon: 30,
            pca_components: 3,
            pca_center: true,
            pca_mode: PcaMode::Scaled,
            energy_input: None,
            overrides: BTreeMap::new(),
            base_dir: None,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| bad(key, format!("{v:?}: {e}")))
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, format!("{v:?} is not a boolean"))),
    }
}

fn optional(v: &str) -> Option<&str> {
    match v.trim() {
        "" | "none" | "off" => None,
        s => Some(s),
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                ConfigError::Syntax { .. } => e,
                other => ConfigError::Syntax {
                    line: i + 1,
                    msg: other.to_string(),
                },
            })?;
        }
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if let Some(rest) = key.strip_prefix("override.") {
            return self.set_override(key, rest, value);
        }
        match key {
            "data" => self.data = optional(value).map(PathBuf::from),
            "date_format" => self.date_format = value.to_string(),
            "ignore_sectors" => self.ignore_sectors = list(value),
            "regions" => self.regions = list(value),
            "sectors" => {
                self.sectors = list(value)
                    .iter()
                    .map(|s| s.parse::<Sector>().map_err(|e| bad(key, e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            "start" => self.start = parse_date(key, value)?,
            "end" => self.end = parse_date(key, value)?,
            "excluded_years" => {
                self.excluded_years = list(value)
                    .iter()
                    .map(|y| num::<i32>(key, y))
                    .collect::<Result<_, _>>()?
            }
            "zscore_threshold" => self.zscore_threshold = num(key, value)?,
            "ma_window" => self.ma_window = num(key, value)?,
            "seq_len" => self.seq_len = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "validation_fraction" => self.validation_fraction = num(key, value)?,
            "units" => self.units = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "clip_norm" => self.clip_norm = optional(value).map(|v| num(key, v)).transpose()?,
            "horizon" => self.horizon = num(key, value)?,
            "pca_components" => self.pca_components = num(key, value)?,
            "pca_center" => self.pca_center = boolean(key, value)?,
            "pca_mode" => {
                self.pca_mode = match value.to_ascii_lowercase().as_str() {
                    "raw" => PcaMode::Raw,
                    "cleaned" => PcaMode::Cleaned,
                    "scaled" => PcaMode::Scaled,
                    _ => return Err(bad(key, "expected raw, cleaned or scaled")),
                }
            }
            "energy_input" => self.energy_input = optional(value).map(PathBuf::from),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn set_override(&mut self, full_key: &str, rest: &str, value: &str) -> Result<(), ConfigError> {
        let mut parts = rest.rsplitn(3, '.');
        let (field, sector, region) = match (parts.next(), parts.next(), parts.next()) {
            (Some(f), Some(s), Some(r)) if !r.trim().is_empty() => (f.trim(), s.trim(), r.trim()),
            _ => return Err(bad(full_key, "expected override.<region>.<sector>.<key>")),
        };
        let sector: Sector = sector.parse().map_err(|e: crate::ingest::IngestError| bad(full_key, e.to_string()))?;
        let o = self
            .overrides
            .entry(region.to_string())
            .or_default()
            .entry(sector)
            .or_default();
        match field {
            "batch_size" => o.batch_size = Some(num(full_key, value)?),
            "dropout" => o.dropout = Some(num(full_key, value)?),
            "epochs" => o.epochs = Some(num(full_key, value)?),
            "lr" => o.lr = Some(num(full_key, value)?),
            "seed" => o.seed = Some(num(full_key, value)?),
            _ => return Err(ConfigError::UnknownKey(full_key.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` flag assignments on top of the file.
    pub fn apply_flags<'a>(&mut self, assignments: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
        for a in assignments {
            let (k, v) = a
                .split_once('=')
                .ok_or_else(|| bad(a, "flag overrides must look like key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(ConfigError::Invalid(msg.to_string())) };
        check(self.start <= self.end, "start must not be after end")?;
        check(self.zscore_threshold > 0.0, "zscore_threshold must be positive")?;
        check(self.ma_window >= 1, "ma_window must be at least 1")?;
        check(self.seq_len >= 1, "seq_len must be at least 1")?;
        check(
            self.train_fraction > 0.0 && self.train_fraction < 1.0,
            "train_fraction must be in (0, 1)",
        )?;
        check(
            (0.0..1.0).contains(&self.validation_fraction),
            "validation_fraction must be in [0, 1)",
        )?;
        check(self.units >= 1 && self.layers >= 1, "units and layers must be positive")?;
        check(self.horizon >= 1, "horizon must be at least 1")?;
        check(self.pca_components >= 1, "pca_components must be at least 1")?;
        check(!self.sectors.is_empty(), "sectors must not be empty")?;
        for region in self.overrides.keys() {
            for sector in self.overrides[region].keys() {
                self.train_config(region, *sector)
                    .validate()
                    .map_err(|e| ConfigError::Invalid(format!("override {region}/{sector}: {e}")))?;
            }
        }
        self.train_config("", Sector::Power)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Checks that every override names a selected region and sector that
    /// exist in `ds`.
    pub fn validate_against(&self, ds: &EmissionDataset) -> Result<(), ConfigError> {
        let regions = self.selected_regions(ds)?;
        for (region, by_sector) in &self.overrides {
            for sector in by_sector.keys() {
                let present = regions.contains(region) && self.sectors.contains(sector) && ds.sectors(region).contains(sector);
                if !present {
                    return Err(ConfigError::DanglingOverride {
                        region: region.clone(),
                        sector: *sector,
                    });
                }
            }
        }
        Ok(())
    }

    /// Regions to process: the configured list, or every region in `ds`.
    pub fn selected_regions(&self, ds: &EmissionDataset) -> Result<Vec<String>, ConfigError> {
        let available = ds.regions();
        if self.regions.is_empty() {
            return Ok(available);
        }
        for r in &self.regions {
            if !available.contains(r) {
                return Err(ConfigError::Invalid(format!("region {r:?} is not in the data")));
            }
        }
        Ok(self.regions.clone())
    }

    /// Training settings for one series, with overrides applied.
    pub fn train_config(&self, region: &str, sector: Sector) -> TrainConfig {
        let o = self
            .overrides
            .get(region)
            .and_then(|m| m.get(&sector))
            .cloned()
            .unwrap_or_default();
        TrainConfig {
            batch_size: o.batch_size.unwrap_or(self.batch_size),
            epochs: o.epochs.unwrap_or(self.epochs),
            dropout: o.dropout.unwrap_or(self.dropout),
            lr: o.lr.unwrap_or(self.lr),
            seed: o.seed.unwrap_or(self.seed),
            clip_norm: self.clip_norm,
            validation_fraction: self.validation_fraction,
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn data_path(&self) -> Option<PathBuf> {
        self.data.as_deref().map(|p| self.resolve(p))
    }

    /// SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

fn parse_date(key: &str, v: &str) -> Result<NaiveDate, ConfigError> {
    NaiveDate::parse_from_str(v, ISO_DATE).map_err(|e| bad(key, format!("{v:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.excluded_years, BTreeSet::from([2020]));
        assert_eq!(c.zscore_threshold, 3.0);
        assert_eq!(c.ma_window, 7);
        assert_eq!(c.seq_len, 30);
        assert_eq!(c.train_fraction, 0.8);
        assert_eq!(c.units, 50);
        assert_eq!(c.layers, 3);
        c.validate().unwrap();
    }

    #[test]
    fn parses_file_with_overrides() {
        let text = "\
# test
regions = EU27 & UK, India
sectors = power, ground_transport
epochs = 5
clip_norm = 1.5
override.EU27 & UK.Ground Transport.batch_size = 8
override.EU27 & UK.Ground Transport.dropout = 0.2
";
        let c = PipelineConfig::parse(text).unwrap();
        assert_eq!(c.regions, vec!["EU27 & UK", "India"]);
        assert_eq!(c.sectors, vec![Sector::Power, Sector::GroundTransport]);
        assert_eq!(c.clip_norm, Some(1.5));
        let t = c.train_config("EU27 & UK", Sector::GroundTransport);
        assert_eq!((t.batch_size, t.dropout, t.epochs), (8, 0.2, 5));
        let t = c.train_config("India", Sector::Power);
        assert_eq!((t.batch_size, t.dropout), (32, 0.16));
    }

    #[test]
    fn flags_win_over_file() {
        let mut c = PipelineConfig::parse("epochs = 5\n").unwrap();
        c.apply_flags(["epochs=7", "seed = 3"]).unwrap();
        assert_eq!((c.epochs, c.seed), (7, 3));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = PipelineConfig::parse("epochs = 5\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
        let err = PipelineConfig::parse("epochs five\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
        assert!(PipelineConfig::parse("override.Power.epochs = 3\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.base_dir = Some("/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.epochs = 99;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn dangling_override() {
        let ds = crate::ingest::parse_emissions_csv(
            "region,date,sector,value\nA,2019-01-01,Power,1\n".as_bytes(),
            ISO_DATE,
        )
        .unwrap();
        let c = PipelineConfig::parse("override.B.Power.epochs = 3\n").unwrap();
        assert!(matches!(c.validate_against(&ds), Err(ConfigError::DanglingOverride { .. })));
        let c = PipelineConfig::parse("override.A.Power.epochs = 3\n").unwrap();
        c.validate_against(&ds).unwrap();
    }
}
