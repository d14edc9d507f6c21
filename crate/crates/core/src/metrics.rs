//! Regression metrics: MSE, RMSE, MAE and R².

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("actual has {actual} values, predicted has {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Scaled,
    Original,
}

impl fmt::Display for Units {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Units::Scaled => "scaled",
            Units::Original => "original",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    /// NaN when the actual values have zero variance. Can be negative when
    /// the model is worse than predicting the mean.
    pub r2: f64,
    pub degenerate_variance: bool,
    pub n: usize,
    pub units: Units,
}

impl MetricsReport {
    pub fn in_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }
}

/// Evaluates `predicted` against `actual`. The report is tagged
/// [`Units::Scaled`]; use [`MetricsReport::in_units`] to relabel.
pub fn evaluate(actual: &[f64], predicted: &[f64]) -> Result<MetricsReport, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    let n = actual.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    if let Some(i) = actual
        .iter()
        .zip(predicted)
        .position(|(a, p)| !a.is_finite() || !p.is_finite())
    {
        return Err(MetricsError::NonFinite(i));
    }
    let nf = n as f64;
    let ss_res: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    let abs_err: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum();
    let mean_actual = actual.iter().sum::<f64>() / nf;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean_actual).powi(2)).sum();
    let mse = ss_res / nf;
    let degenerate = ss_tot == 0.0;
    Ok(MetricsReport {
        mse,
        rmse: mse.sqrt(),
        mae: abs_err / nf,
        r2: if degenerate { f64::NAN } else { 1.0 - ss_res / ss_tot },
        degenerate_variance: degenerate,
        n,
        units: Units::Scaled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let r = evaluate(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((r.mse, r.rmse, r.mae, r.r2), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn constant_actual_is_degenerate() {
        let r = evaluate(&[0.0; 4], &[1.0; 4]).unwrap();
        assert_eq!((r.mse, r.rmse, r.mae), (1.0, 1.0, 1.0));
        assert!(r.degenerate_variance);
        assert!(r.r2.is_nan());
    }

    #[test]
    fn hand_computed() {
        // SS_R = 1 + 0 + 1 + 4 = 6, SS_T = 2.25 + 0.25 + 0.25 + 2.25 = 5.
        let r = evaluate(&[1.0, 2.0, 3.0, 4.0], &[2.0; 4]).unwrap();
        assert_eq!(r.mse, 1.5);
        assert_eq!(r.rmse, 1.5f64.sqrt());
        assert_eq!(r.mae, 1.0);
        assert!((r.r2 + 0.2).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(
            evaluate(&[1.0, 2.0], &[1.0]).unwrap_err(),
            MetricsError::LengthMismatch { actual: 2, predicted: 1 }
        );
        assert_eq!(evaluate(&[1.0], &[1.0]).unwrap_err(), MetricsError::TooFewSamples(1));
        assert_eq!(evaluate(&[1.0, f64::NAN], &[1.0, 1.0]).unwrap_err(), MetricsError::NonFinite(1));
    }

    #[test]
    fn nan_r2_serializes_as_null() {
        let r = evaluate(&[0.0; 2], &[1.0; 2]).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["r2"].is_null());
        assert_eq!(json["units"], "scaled");
    }
}
