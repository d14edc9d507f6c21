//! Deterministic synthetic emissions data for fixtures, examples and tests.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{EmissionDataset, EmissionRecord, Sector};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub regions: Vec<String>,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub seed: u64,
    /// Every `spike_every` days one sector gets a spike; 0 disables spikes.
    pub spike_every: usize,
    /// Relative noise amplitude.
    pub noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            regions: vec!["Alderney".into(), "Lakes, North".into()],
            start: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2023, 2, 28).unwrap(),
            seed: 7,
            spike_every: 97,
            noise: 0.02,
        }
    }
}

// (base level in Mt/day, yearly amplitude, weekly amplitude, yearly trend)
fn profile(sector: Sector) -> (f64, f64, f64, f64) {
    match sector {
        Sector::Power => (4.0, 0.12, 0.03, -0.02),
        Sector::Industry => (3.0, 0.05, 0.08, 0.01),
        Sector::GroundTransport => (2.0, 0.04, 0.10, 0.015),
        Sector::DomesticAviation => (0.3, 0.10, 0.05, 0.03),
        Sector::InternationalAviation => (0.5, 0.15, 0.02, 0.05),
    }
}

/// Builds a daily dataset with yearly and weekly seasonality, a linear
/// trend, uniform noise and occasional spikes. Values are rounded to six
/// decimals so the canonical CSV round-trips exactly.
pub fn generate(spec: &SyntheticSpec) -> EmissionDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    for (ri, region) in spec.regions.iter().enumerate() {
        let scale = 1.0 + 0.5 * ri as f64;
        for (si, &sector) in Sector::ALL.iter().enumerate() {
            let (base, yearly, weekly, trend) = profile(sector);
            let phase = 0.7 * si as f64 + 0.3 * ri as f64;
            for (t, date) in spec.start.iter_days().take_while(|d| *d <= spec.end).enumerate() {
                let years = t as f64 / 365.25;
                let doy = date.ordinal() as f64;
                let dow = date.weekday().num_days_from_monday() as f64;
                let mut v = base
                    * scale
                    * (1.0 + yearly * (std::f64::consts::TAU * doy / 365.25 + phase).cos()
                        - weekly * (dow >= 5.0) as u8 as f64
                        + trend * years
                        + spec.noise * (rng.gen::<f64>() * 2.0 - 1.0));
                if spec.spike_every > 0 && (t + 13 * si + 31 * ri) % spec.spike_every == 0 && t > 0 {
                    v *= 1.8;
                }
                records.push(EmissionRecord {
                    region: region.clone(),
                    sector,
                    date,
                    value: (v.max(0.0) * 1e6).round() / 1e6,
                });
            }
        }
    }
    EmissionDataset::from_records(records, "synthetic").expect("synthetic data has unique keys")
}

/// `sin(2πt/period) + slope·t` for `t = 0..n`.
pub fn sine_with_trend(n: usize, period: f64, slope: f64) -> Vec<f64> {
    (0..n)
        .map(|t| (std::f64::consts::TAU * t as f64 / period).sin() + slope * t as f64)
        .collect()
}
