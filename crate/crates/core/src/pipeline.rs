//! Batch runs behind the `co2cast` binary.
//!
//! Every command loads the data named in a [`PipelineConfig`], writes its
//! artifacts below an output directory and reports their relative paths.
//! Artifacts carry the config hash and seed: a `# config_hash=.. seed=..`
//! first line in CSV and text files, `config_hash`/`seed` fields in JSON and
//! an XML comment in SVG. Nothing time-dependent is written, so identical
//! inputs give byte-identical outputs.
//!
//! Layout under the output directory:
//!
//! | command    | files |
//! |------------|-------|
//! | `ingest`   | `ingest/canonical.csv`, `ingest/summary.json` |
//! | `clean`    | `clean/<pair>.cleaned.csv`, `clean/<pair>.smoothed.csv`, `clean/summary.json` |
//! | `pca`      | `pca/<region>.json`, `pca/<region>.svg`, `pca/summary.json` |
//! | `train`    | `models/<pair>.json`, `models/<pair>.history.csv` |
//! | `evaluate` | `evaluation/<pair>.json`, `evaluation/<pair>.predictions.csv`, `evaluation/summary.json` |
//! | `forecast` | `forecast/<pair>.csv` |
//! | `energy`   | `energy/report.json`, `energy/report.txt` |
//! | `report`   | all of the above plus `report.json` |
//!
//! `<pair>` is `<region-slug>__<sector-slug>`.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, PcaMode, PipelineConfig};
use crate::energy::{energy_report, EnergyError, EnergyInput};
use crate::ingest::{
    filter_period, parse_emissions_csv_with, pivot_sector_matrix, EmissionDataset, FeatureMatrix, IngestError,
    ParseOptions, Sector, ISO_DATE,
};
use crate::lstm::{init_model, predict_batch, predict_horizon, train, Checkpoint, LstmError, LstmModel, TrainConfig, TrainHistory};
use crate::metrics::{evaluate, MetricsError, MetricsReport, Units};
use crate::pca::{pca_fit_with, PcaError, PcaResult};
use crate::preprocess::{
    clean_outliers, make_supervised, minmax_scale, moving_average, train_test_split, CleanOutcome, PreprocessError,
    Scaler, SupervisedSet,
};
use crate::svg::{bar_chart, Bar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Clean,
    Pca,
    Train,
    Forecast,
    Evaluate,
    Energy,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Clean => "clean",
            Command::Pca => "pca",
            Command::Train => "train",
            Command::Forecast => "forecast",
            Command::Evaluate => "evaluate",
            Command::Energy => "energy",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{region} / {sector}: {source}")]
    Preprocess {
        region: String,
        sector: String,
        source: PreprocessError,
    },
    #[error("{region}: {source}")]
    Pca { region: String, source: PcaError },
    #[error("{region} / {sector}: {source}")]
    Lstm {
        region: String,
        sector: Sector,
        source: LstmError,
    },
    #[error("{region} / {sector}: {source}")]
    Metrics {
        region: String,
        sector: Sector,
        source: MetricsError,
    },
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("missing artifact {0}; run `train` first")]
    MissingArtifact(String),
    #[error("{0}")]
    Invalid(String),
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Preprocess { .. } => "preprocess",
            PipelineError::Pca { .. } => "pca",
            PipelineError::Lstm { .. } => "lstm",
            PipelineError::Metrics { .. } => "metrics",
            PipelineError::Energy(_) => "energy",
            PipelineError::Io { .. } => "io",
            PipelineError::MissingArtifact(_) => "missing_artifact",
            PipelineError::Invalid(_) => "invalid",
        }
    }

    /// `{"error": {"kind": .., "message": ..}}`
    pub fn to_json(&self) -> String {
        json!({"error": {"kind": self.kind(), "message": self.to_string()}}).to_string()
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config_hash: String,
    /// Relative path → SHA-256 of every file written, sorted by path.
    pub artifacts: BTreeMap<String, String>,
}

/// File-name slug: lowercase ASCII alphanumerics joined by single `_`.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    if out.is_empty() {
        out.push_str("region");
    }
    out
}

pub fn pair_slug(region: &str, sector: Sector) -> String {
    format!("{}__{}", slug(region), sector.slug())
}

struct Sink {
    root: PathBuf,
    hash: String,
    written: Mutex<BTreeMap<String, String>>,
}

impl Sink {
    fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        log::debug!("wrote {}", path.display());
        self.written
            .lock()
            .expect("artifact list lock")
            .insert(rel.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn stamp_line(&self, seed: u64) -> String {
        format!("# config_hash={} seed={seed}\n", self.hash)
    }

    fn text(&self, rel: &str, seed: u64, body: &str) -> Result<(), PipelineError> {
        self.write(rel, format!("{}{body}", self.stamp_line(seed)).as_bytes())
    }

    fn json(&self, rel: &str, seed: u64, value: Value) -> Result<(), PipelineError> {
        let mut value = value;
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
            map.insert("seed".into(), json!(seed));
        }
        let mut text = serde_json::to_string_pretty(&value).expect("json serializes");
        text.push('\n');
        self.write(rel, text.as_bytes())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("value serializes")
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// Reads and validates the configured data file.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<EmissionDataset, PipelineError> {
    let path = cfg
        .data_path()
        .ok_or_else(|| ConfigError::Invalid("no data file configured (set `data`)".into()))?;
    let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
    let source = cfg.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    Ok(parse_emissions_csv_with(
        BufReader::new(file),
        &ParseOptions {
            date_format: cfg.date_format.clone(),
            ignore_sectors: cfg.ignore_sectors.clone(),
            source,
        },
    )?)
}

/// Dataset plus the configured region/period selection.
pub struct Selection {
    pub dataset: EmissionDataset,
    /// Records inside the period, excluded years removed.
    pub filtered: EmissionDataset,
    pub regions: Vec<String>,
}

impl Selection {
    pub fn new(cfg: &PipelineConfig, dataset: EmissionDataset) -> Result<Self, PipelineError> {
        cfg.validate()?;
        cfg.validate_against(&dataset)?;
        let regions = cfg.selected_regions(&dataset)?;
        let mut seen = BTreeMap::new();
        for r in &regions {
            if let Some(other) = seen.insert(slug(r), r.clone()) {
                return Err(PipelineError::Invalid(format!(
                    "regions {other:?} and {r:?} map to the same file name"
                )));
            }
        }
        let filtered = filter_period(&dataset, cfg.start, cfg.end, &cfg.excluded_years)?;
        for r in &regions {
            if filtered.sectors(r).is_empty() {
                return Err(PipelineError::Invalid(format!("region {r:?} has no data in the selected period")));
            }
        }
        Ok(Self {
            dataset,
            filtered,
            regions,
        })
    }

    pub fn load(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Self::new(cfg, load_dataset(cfg)?)
    }

    /// Every selected (region, configured sector) pair.
    pub fn pairs(&self, cfg: &PipelineConfig) -> Result<Vec<(String, Sector)>, PipelineError> {
        let mut out = Vec::new();
        for region in &self.regions {
            let present = self.filtered.sectors(region);
            for &sector in &cfg.sectors {
                if !present.contains(&sector) {
                    return Err(PipelineError::Invalid(format!(
                        "region {region:?} has no {sector} data in the selected period"
                    )));
                }
                out.push((region.clone(), sector));
            }
        }
        Ok(out)
    }
}

/// One daily series after outlier replacement and smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSeries {
    pub region: String,
    pub sector: Sector,
    pub dates: Vec<NaiveDate>,
    pub raw: Vec<f64>,
    pub clean: CleanOutcome,
    /// Each smoothed value is labelled with the last date of its window.
    pub smoothed_dates: Vec<NaiveDate>,
    pub smoothed: Vec<f64>,
}

pub fn prepare_series(
    filtered: &EmissionDataset,
    region: &str,
    sector: Sector,
    cfg: &PipelineConfig,
) -> Result<PreparedSeries, PipelineError> {
    let wrap = |source| PipelineError::Preprocess {
        region: region.to_string(),
        sector: sector.to_string(),
        source,
    };
    let (dates, raw): (Vec<NaiveDate>, Vec<f64>) = filtered.series(region, sector).into_iter().unzip();
    let clean = clean_outliers(&raw, cfg.zscore_threshold).map_err(wrap)?;
    if clean.degenerate {
        log::warn!("{region} / {sector}: constant series, nothing cleaned");
    }
    let smoothed = moving_average(&clean.cleaned, cfg.ma_window).map_err(wrap)?;
    let smoothed_dates = dates[cfg.ma_window - 1..].to_vec();
    Ok(PreparedSeries {
        region: region.to_string(),
        sector,
        dates,
        raw,
        clean,
        smoothed_dates,
        smoothed,
    })
}

/// Scaled series and its chronological train/test windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub scaler: Scaler,
    pub scaled: Vec<f64>,
    pub train: SupervisedSet,
    pub test: SupervisedSet,
}

/// Windows the smoothed series. Without a given `scaler`, one is fit on the
/// values the training windows touch and applied to the whole series.
pub fn model_data(ps: &PreparedSeries, cfg: &PipelineConfig, scaler: Option<Scaler>) -> Result<ModelData, PipelineError> {
    let wrap = |source| PipelineError::Preprocess {
        region: ps.region.clone(),
        sector: ps.sector.to_string(),
        source,
    };
    let probe = make_supervised(&ps.smoothed, cfg.seq_len).map_err(wrap)?;
    let (probe_train, _) = train_test_split(&probe, cfg.train_fraction).map_err(wrap)?;
    let scaler = match scaler {
        Some(s) => s,
        None => Scaler::fit(&ps.smoothed[..probe_train.len() + cfg.seq_len]).map_err(wrap)?,
    };
    if scaler.is_degenerate() {
        log::warn!("{} / {}: training values are constant", ps.region, ps.sector);
    }
    let scaled = scaler.transform_all(&ps.smoothed);
    let set = make_supervised(&scaled, cfg.seq_len).map_err(wrap)?;
    let (train, test) = train_test_split(&set, cfg.train_fraction).map_err(wrap)?;
    Ok(ModelData {
        scaler,
        scaled,
        train,
        test,
    })
}

/// A series with a model, either freshly trained or loaded.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub series: PreparedSeries,
    pub data: ModelData,
    pub model: LstmModel,
    pub train_config: TrainConfig,
    pub history: Option<TrainHistory>,
}

pub fn fit_pair(
    filtered: &EmissionDataset,
    region: &str,
    sector: Sector,
    cfg: &PipelineConfig,
) -> Result<Fitted, PipelineError> {
    let series = prepare_series(filtered, region, sector, cfg)?;
    let data = model_data(&series, cfg, None)?;
    let tcfg = cfg.train_config(region, sector);
    let wrap = |source| PipelineError::Lstm {
        region: region.to_string(),
        sector,
        source,
    };
    let model = init_model(&vec![cfg.units; cfg.layers], cfg.seq_len, tcfg.dropout, tcfg.seed).map_err(wrap)?;
    log::info!("training {region} / {sector}: {} windows, {} epochs", data.train.len(), tcfg.epochs);
    let (model, history) = train(model, &data.train, &tcfg).map_err(wrap)?;
    Ok(Fitted {
        series,
        data,
        model,
        train_config: tcfg,
        history: Some(history),
    })
}

fn checkpoint_path(region: &str, sector: Sector) -> String {
    format!("models/{}.json", pair_slug(region, sector))
}

fn load_fitted(
    out: &Path,
    filtered: &EmissionDataset,
    region: &str,
    sector: Sector,
    cfg: &PipelineConfig,
    hash: &str,
) -> Result<Fitted, PipelineError> {
    let rel = checkpoint_path(region, sector);
    let path = out.join(&rel);
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path.display().to_string()));
    }
    let wrap = |source| PipelineError::Lstm {
        region: region.to_string(),
        sector,
        source,
    };
    let ckpt = Checkpoint::load(&path).map_err(wrap)?;
    if ckpt.meta.get("config_hash").map(String::as_str) != Some(hash) {
        log::warn!("{rel} was written under a different configuration");
    }
    if ckpt.seq_len != cfg.seq_len {
        return Err(PipelineError::Invalid(format!(
            "{rel} has seq_len {}, config has {}",
            ckpt.seq_len, cfg.seq_len
        )));
    }
    let model = ckpt.model().map_err(wrap)?;
    let series = prepare_series(filtered, region, sector, cfg)?;
    let data = model_data(&series, cfg, ckpt.scaler)?;
    Ok(Fitted {
        series,
        data,
        model,
        train_config: ckpt.config.unwrap_or_else(|| cfg.train_config(region, sector)),
        history: None,
    })
}

/// Test-set metrics for one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub region: String,
    pub sector: String,
    pub scaled: MetricsReport,
    /// Absent when the scaler is degenerate.
    pub original: Option<MetricsReport>,
    pub n_train: usize,
    pub n_test: usize,
    pub seq_len: usize,
    pub units: usize,
    pub layers: usize,
    pub train_fraction: f64,
    pub train_config: TrainConfig,
}

/// Test-set metrics plus a `date,partition,actual_scaled,predicted_scaled,
/// actual,predicted` CSV body covering every window.
pub fn evaluate_fitted(f: &Fitted, cfg: &PipelineConfig) -> Result<(Evaluation, String), PipelineError> {
    let (region, sector) = (f.series.region.clone(), f.series.sector);
    let lstm = |source| PipelineError::Lstm {
        region: region.clone(),
        sector,
        source,
    };
    let metric = |source| PipelineError::Metrics {
        region: region.clone(),
        sector,
        source,
    };
    let train_pred = predict_batch(&f.model, f.data.train.inputs()).map_err(lstm)?;
    let test_pred = predict_batch(&f.model, f.data.test.inputs()).map_err(lstm)?;
    let scaled = evaluate(f.data.test.targets(), &test_pred).map_err(metric)?;
    let inv = |xs: &[f64]| -> Option<Vec<f64>> { xs.iter().map(|&y| f.data.scaler.inverse(y).ok()).collect() };
    let original = match (inv(f.data.test.targets()), inv(&test_pred)) {
        (Some(a), Some(p)) => Some(evaluate(&a, &p).map_err(metric)?.in_units(Units::Original)),
        _ => None,
    };

    let mut csv = String::from("date,partition,actual_scaled,predicted_scaled,actual,predicted\n");
    let n_train = f.data.train.len();
    let rows = f
        .data
        .train
        .targets()
        .iter()
        .zip(&train_pred)
        .map(|(a, p)| ("train", *a, *p))
        .chain(f.data.test.targets().iter().zip(&test_pred).map(|(a, p)| ("test", *a, *p)));
    for (k, (part, a, p)) in rows.enumerate() {
        let date = f.series.smoothed_dates[k + cfg.seq_len];
        let orig = |y: f64| f.data.scaler.inverse(y).map(fmt6).unwrap_or_default();
        csv.push_str(&format!(
            "{},{part},{},{},{},{}\n",
            date.format(ISO_DATE),
            fmt6(a),
            fmt6(p),
            orig(a),
            orig(p)
        ));
    }
    Ok((
        Evaluation {
            region: region.clone(),
            sector: sector.label().to_string(),
            scaled,
            original,
            n_train,
            n_test: f.data.test.len(),
            seq_len: cfg.seq_len,
            units: cfg.units,
            layers: cfg.layers,
            train_fraction: cfg.train_fraction,
            train_config: f.train_config.clone(),
        },
        csv,
    ))
}

/// One forecast step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastPoint {
    pub step: usize,
    pub date: NaiveDate,
    pub scaled: f64,
    pub value: Option<f64>,
}

/// Closed-loop forecast from the last window of the series.
pub fn forecast_fitted(f: &Fitted, horizon: usize) -> Result<Vec<ForecastPoint>, PipelineError> {
    let seed = &f.data.scaled[f.data.scaled.len() - f.model.seq_len..];
    let preds = predict_horizon(&f.model, seed, horizon).map_err(|source| PipelineError::Lstm {
        region: f.series.region.clone(),
        sector: f.series.sector,
        source,
    })?;
    let last = *f.series.smoothed_dates.last().expect("series is nonempty");
    Ok(preds
        .into_iter()
        .enumerate()
        .map(|(i, y)| ForecastPoint {
            step: i + 1,
            date: last + Days::new(i as u64 + 1),
            scaled: y,
            value: f.data.scaler.inverse(y).ok(),
        })
        .collect())
}

/// Applies the configured PCA input mode to a pivoted region matrix.
pub fn pca_input(m: &FeatureMatrix, cfg: &PipelineConfig) -> Result<FeatureMatrix, PreprocessError> {
    if cfg.pca_mode == PcaMode::Raw {
        return Ok(m.clone());
    }
    let mut cols = Vec::with_capacity(m.n_cols());
    for j in 0..m.n_cols() {
        let cleaned = clean_outliers(&m.column(j), cfg.zscore_threshold)?.cleaned;
        cols.push(match cfg.pca_mode {
            PcaMode::Scaled => minmax_scale(&cleaned)?.0,
            _ => cleaned,
        });
    }
    Ok(FeatureMatrix::from_columns(&cols, m.row_labels().to_vec(), m.col_labels().to_vec())
        .expect("same shape as the input"))
}

fn pca_value(region: &str, r: &PcaResult, k: usize, n_rows: usize, cfg: &PipelineConfig) -> Value {
    let components: Vec<Value> = (0..r.dim())
        .map(|j| {
            json!({
                "index": j + 1,
                "eigenvalue": r.eigenvalues[j],
                "explained_ratio": r.explained_ratio[j],
                "sector": r.sector_attribution[j],
                "loadings": r.loadings(j),
                "selected": j < k,
            })
        })
        .collect();
    json!({
        "region": region,
        "mode": cfg.pca_mode,
        "centered": r.centered,
        "n_rows": n_rows,
        "columns": r.col_labels,
        "mean": r.mean,
        "eigenvalues": r.eigenvalues,
        "explained_ratio": r.explained_ratio,
        "attribution": r.sector_attribution,
        "selected": k,
        "components": components,
    })
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    sink: Sink,
}

impl Ctx<'_> {
    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn ingest(&self, sel: &Selection) -> Result<Value, PipelineError> {
        self.sink
            .text("ingest/canonical.csv", self.seed(), &sel.dataset.to_canonical_csv())?;
        let regions: Vec<Value> = sel
            .dataset
            .regions()
            .iter()
            .map(|r| {
                let sectors = sel.dataset.sectors(r);
                let dates: Vec<NaiveDate> = sectors
                    .iter()
                    .flat_map(|s| sel.dataset.series(r, *s))
                    .map(|(d, _)| d)
                    .collect();
                json!({
                    "region": r,
                    "sectors": sectors.iter().map(|s| s.label()).collect::<Vec<_>>(),
                    "first_date": dates.iter().min(),
                    "last_date": dates.iter().max(),
                    "selected": sel.regions.contains(r),
                    "selected_rows": sel.filtered.records().iter().filter(|x| &x.region == r).count(),
                })
            })
            .collect();
        let v = json!({
            "source": sel.dataset.provenance().source,
            "rows": sel.dataset.len(),
            "selected_rows": sel.filtered.len(),
            "regions": regions,
        });
        self.sink.json("ingest/summary.json", self.seed(), v.clone())?;
        Ok(v)
    }

    fn clean(&self, sel: &Selection) -> Result<Value, PipelineError> {
        let pairs = sel.pairs(self.cfg)?;
        let rows = pairs
            .par_iter()
            .map(|(region, sector)| {
                let ps = prepare_series(&sel.filtered, region, *sector, self.cfg)?;
                let seed = self.cfg.train_config(region, *sector).seed;
                let slug = pair_slug(region, *sector);
                self.sink
                    .text(&format!("clean/{slug}.cleaned.csv"), seed, &series_csv(&ps.dates, &ps.clean.cleaned))?;
                self.sink.text(
                    &format!("clean/{slug}.smoothed.csv"),
                    seed,
                    &series_csv(&ps.smoothed_dates, &ps.smoothed),
                )?;
                Ok(json!({
                    "region": region,
                    "sector": sector.label(),
                    "n": ps.raw.len(),
                    "mean": ps.clean.mean,
                    "sd": ps.clean.sd,
                    "degenerate": ps.clean.degenerate,
                    "flagged": ps.clean.flagged.iter().map(|&i| ps.dates[i]).collect::<Vec<_>>(),
                    "smoothed_len": ps.smoothed.len(),
                }))
            })
            .collect::<Result<Vec<Value>, PipelineError>>()?;
        let v = json!({
            "zscore_threshold": self.cfg.zscore_threshold,
            "ma_window": self.cfg.ma_window,
            "series": rows,
        });
        self.sink.json("clean/summary.json", self.seed(), v.clone())?;
        Ok(v)
    }

    fn pca(&self, sel: &Selection) -> Result<Value, PipelineError> {
        let mut table = Vec::new();
        for region in &sel.regions {
            let wrap = |source| PipelineError::Pca {
                region: region.clone(),
                source,
            };
            let pivot = pivot_sector_matrix(&sel.filtered, region)?;
            let input = pca_input(&pivot, self.cfg).map_err(|source| PipelineError::Preprocess {
                region: region.clone(),
                sector: "all".into(),
                source,
            })?;
            let r = pca_fit_with(&input, self.cfg.pca_center).map_err(wrap)?;
            let k = self.cfg.pca_components.min(r.dim());
            let s = slug(region);
            self.sink
                .json(&format!("pca/{s}.json"), self.seed(), pca_value(region, &r, k, input.n_rows(), self.cfg))?;
            let bars: Vec<Bar> = (0..r.dim())
                .map(|j| Bar {
                    label: format!("PC{} {}", j + 1, r.sector_attribution[j]),
                    value: r.explained_ratio[j],
                    highlight: j < k,
                })
                .collect();
            let header = vec![
                format!("config_hash={} seed={}", self.sink.hash, self.seed()),
                format!("region={region} mode={:?} centered={}", self.cfg.pca_mode, r.centered),
            ];
            let svg = bar_chart(&format!("{region}: explained variance ratio"), "explained ratio", &bars, &header);
            self.sink.write(&format!("pca/{s}.svg"), svg.as_bytes())?;
            table.push(json!({
                "region": region,
                "components": (0..k).map(|j| json!({
                    "sector": r.sector_attribution[j],
                    "explained_ratio": r.explained_ratio[j],
                })).collect::<Vec<_>>(),
                "ratio_sum": r.explained_ratio.iter().sum::<f64>(),
            }));
        }
        let v = json!({"mode": self.cfg.pca_mode, "centered": self.cfg.pca_center, "regions": table});
        self.sink.json("pca/summary.json", self.seed(), v.clone())?;
        Ok(v)
    }

    fn train(&self, sel: &Selection) -> Result<Vec<Fitted>, PipelineError> {
        let pairs = sel.pairs(self.cfg)?;
        pairs
            .par_iter()
            .map(|(region, sector)| {
                let f = fit_pair(&sel.filtered, region, *sector, self.cfg)?;
                let seed = f.train_config.seed;
                let mut ckpt = Checkpoint::new(&f.model, Some(f.data.scaler), Some(f.train_config.clone()));
                ckpt.meta.insert("config_hash".into(), self.sink.hash.clone());
                ckpt.meta.insert("seed".into(), seed.to_string());
                ckpt.meta.insert("region".into(), region.clone());
                ckpt.meta.insert("sector".into(), sector.label().into());
                let mut text = ckpt.to_json();
                text.push('\n');
                self.sink.write(&checkpoint_path(region, *sector), text.as_bytes())?;
                let history = f.history.as_ref().expect("fresh fit has history");
                self.sink.text(
                    &format!("models/{}.history.csv", pair_slug(region, *sector)),
                    seed,
                    &history.to_csv(),
                )?;
                Ok(f)
            })
            .collect()
    }

    fn load_models(&self, sel: &Selection) -> Result<Vec<Fitted>, PipelineError> {
        sel.pairs(self.cfg)?
            .par_iter()
            .map(|(region, sector)| load_fitted(&self.sink.root, &sel.filtered, region, *sector, self.cfg, &self.sink.hash))
            .collect()
    }

    fn evaluate(&self, fitted: &[Fitted]) -> Result<Value, PipelineError> {
        let rows = fitted
            .par_iter()
            .map(|f| {
                let (ev, csv) = evaluate_fitted(f, self.cfg)?;
                let slug = pair_slug(&f.series.region, f.series.sector);
                let seed = f.train_config.seed;
                self.sink.json(&format!("evaluation/{slug}.json"), seed, to_value(&ev))?;
                self.sink
                    .text(&format!("evaluation/{slug}.predictions.csv"), seed, &csv)?;
                Ok(to_value(&ev))
            })
            .collect::<Result<Vec<Value>, PipelineError>>()?;
        let v = json!({ "rows": rows });
        self.sink.json("evaluation/summary.json", self.seed(), v.clone())?;
        Ok(v)
    }

    fn forecast(&self, fitted: &[Fitted]) -> Result<Value, PipelineError> {
        let rows = fitted
            .par_iter()
            .map(|f| {
                let points = forecast_fitted(f, self.cfg.horizon)?;
                let mut csv = String::from("step,date,scaled,value\n");
                for p in &points {
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        p.step,
                        p.date.format(ISO_DATE),
                        fmt6(p.scaled),
                        p.value.map(fmt6).unwrap_or_default()
                    ));
                }
                let slug = pair_slug(&f.series.region, f.series.sector);
                self.sink
                    .text(&format!("forecast/{slug}.csv"), f.train_config.seed, &csv)?;
                Ok(json!({
                    "region": f.series.region,
                    "sector": f.series.sector.label(),
                    "points": points,
                }))
            })
            .collect::<Result<Vec<Value>, PipelineError>>()?;
        Ok(json!({ "horizon": self.cfg.horizon, "series": rows }))
    }

    fn energy(&self) -> Result<Value, PipelineError> {
        let rel = self
            .cfg
            .energy_input
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("no energy input configured (set `energy_input` or pass --input)".into()))?;
        let path = self.cfg.resolve(rel);
        let file = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        let input = if is_csv {
            EnergyInput::from_binding_csv(BufReader::new(file))?
        } else {
            EnergyInput::from_json(BufReader::new(file))?
        };
        let report = energy_report(&input)?;
        for s in report.systems.iter().filter(|s| s.count_mismatch) {
            log::warn!("{}: atom count differs from the normalization count", s.name);
        }
        self.sink.text("energy/report.txt", self.seed(), &report.to_table())?;
        let v = to_value(&report);
        self.sink.json("energy/report.json", self.seed(), v.clone())?;
        Ok(v)
    }
}

fn series_csv(dates: &[NaiveDate], values: &[f64]) -> String {
    let mut s = String::from("date,value\n");
    for (d, v) in dates.iter().zip(values) {
        s.push_str(&format!("{},{}\n", d.format(ISO_DATE), fmt6(*v)));
    }
    s
}

/// Runs `command`, writing artifacts below `out`.
pub fn run(command: Command, cfg: &PipelineConfig, out: &Path) -> Result<RunSummary, PipelineError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let ctx = Ctx {
        cfg,
        sink: Sink {
            root: out.to_path_buf(),
            hash: hash.clone(),
            written: Mutex::new(BTreeMap::new()),
        },
    };
    log::info!("{} with config {hash}", command.name());
    match command {
        Command::Energy => {
            ctx.energy()?;
        }
        Command::Ingest => {
            ctx.ingest(&Selection::load(cfg)?)?;
        }
        Command::Clean => {
            ctx.clean(&Selection::load(cfg)?)?;
        }
        Command::Pca => {
            ctx.pca(&Selection::load(cfg)?)?;
        }
        Command::Train => {
            ctx.train(&Selection::load(cfg)?)?;
        }
        Command::Evaluate => {
            let sel = Selection::load(cfg)?;
            ctx.evaluate(&ctx.load_models(&sel)?)?;
        }
        Command::Forecast => {
            let sel = Selection::load(cfg)?;
            let v = ctx.forecast(&ctx.load_models(&sel)?)?;
            log::debug!("forecast: {v}");
        }
        Command::Report => {
            let sel = Selection::load(cfg)?;
            let ingest = ctx.ingest(&sel)?;
            let clean = ctx.clean(&sel)?;
            let pca = ctx.pca(&sel)?;
            let fitted = ctx.train(&sel)?;
            let evaluation = ctx.evaluate(&fitted)?;
            let forecast = ctx.forecast(&fitted)?;
            let training: Vec<Value> = fitted
                .iter()
                .map(|f| {
                    let last = f.history.as_ref().and_then(|h| h.epochs.last());
                    json!({
                        "region": f.series.region,
                        "sector": f.series.sector.label(),
                        "epochs": f.history.as_ref().map_or(0, TrainHistory::len),
                        "final_train_loss": last.map(|e| e.train_loss),
                        "final_val_loss": last.and_then(|e| e.val_loss),
                    })
                })
                .collect();
            let energy = if cfg.energy_input.is_some() {
                ctx.energy()?
            } else {
                Value::Null
            };
            let artifacts = ctx.sink.written.lock().expect("artifact list lock").clone();
            ctx.sink.json(
                "report.json",
                cfg.seed,
                json!({
                    "config": to_value(cfg),
                    "ingest": ingest,
                    "clean": clean,
                    "pca": pca,
                    "training": training,
                    "evaluation": evaluation,
                    "forecast": forecast,
                    "energy": energy,
                    "artifacts": artifacts,
                }),
            )?;
        }
    }
    let artifacts = ctx.sink.written.into_inner().expect("artifact list lock");
    Ok(RunSummary {
        command: command.name().to_string(),
        config_hash: hash,
        artifacts,
    })
}
