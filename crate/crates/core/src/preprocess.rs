//! Series conditioning: Z-score outlier replacement, trailing moving
//! average, min-max scaling and supervised windowing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("series has {len} points, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("window and sequence lengths must be positive")]
    ZeroWindow,
    #[error("series contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("scaler is degenerate (min == max == {0})")]
    DegenerateScaler(f64),
    #[error("split of {n} samples at fraction {fraction} leaves an empty partition")]
    EmptyPartition { n: usize, fraction: f64 },
}

/// Population mean and standard deviation (divisor n).
pub fn mean_sd(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanOutcome {
    pub cleaned: Vec<f64>,
    /// Indices whose |z| exceeded the threshold, ascending.
    pub flagged: Vec<usize>,
    pub mean: f64,
    pub sd: f64,
    /// Set when SD = 0; the input is returned unchanged.
    pub degenerate: bool,
}

/// Replaces points whose Z-score against the input's own mean and
/// population SD exceeds `threshold` with the previous day's value.
///
/// Replacement runs left to right over the partially cleaned series, so a
/// run of flagged points collapses onto the last good value. A flagged
/// index 0 takes the first unflagged value.
pub fn clean_outliers(series: &[f64], threshold: f64) -> Result<CleanOutcome, PreprocessError> {
    if series.len() < 2 {
        return Err(PreprocessError::SeriesTooShort {
            len: series.len(),
            min: 2,
        });
    }
    if !(threshold > 0.0) {
        return Err(PreprocessError::InvalidThreshold(threshold));
    }
    check_finite(series)?;
    let (mean, sd) = mean_sd(series);
    if sd == 0.0 {
        log::warn!("degenerate series (SD = 0); outlier cleaning skipped");
        return Ok(CleanOutcome {
            cleaned: series.to_vec(),
            flagged: Vec::new(),
            mean,
            sd,
            degenerate: true,
        });
    }
    let flagged: Vec<usize> = series
        .iter()
        .enumerate()
        .filter(|(_, x)| ((*x - mean) / sd).abs() > threshold)
        .map(|(i, _)| i)
        .collect();
    let mut cleaned = series.to_vec();
    let mut is_flagged = vec![false; series.len()];
    for &i in &flagged {
        is_flagged[i] = true;
    }
    for &i in &flagged {
        cleaned[i] = if i == 0 {
            // Every point can only be flagged when threshold < 1.
            is_flagged
                .iter()
                .position(|f| !f)
                .map_or(series[0], |j| series[j])
        } else {
            cleaned[i - 1]
        };
    }
    Ok(CleanOutcome {
        cleaned,
        flagged,
        mean,
        sd,
        degenerate: false,
    })
}

/// Trailing moving average; `out[k]` covers `series[k..k + window]` and
/// belongs to the date of its last element.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, PreprocessError> {
    if window == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    if window > series.len() {
        return Err(PreprocessError::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    // Direct sums rather than a running total, so rounding does not drift
    // over long series.
    Ok(series
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
}

impl Scaler {
    pub fn fit(series: &[f64]) -> Result<Self, PreprocessError> {
        if series.is_empty() {
            return Err(PreprocessError::SeriesTooShort { len: 0, min: 1 });
        }
        check_finite(series)?;
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { min, max })
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn transform(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.5
        } else {
            (x - self.min) / (self.max - self.min)
        }
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }

    pub fn inverse(&self, y: f64) -> Result<f64, PreprocessError> {
        if self.is_degenerate() {
            return Err(PreprocessError::DegenerateScaler(self.min));
        }
        Ok(self.min + y * (self.max - self.min))
    }
}

/// Maps the series onto [0, 1]; a constant series maps to 0.5.
pub fn minmax_scale(series: &[f64]) -> Result<(Vec<f64>, Scaler), PreprocessError> {
    let scaler = Scaler::fit(series)?;
    Ok((scaler.transform_all(series), scaler))
}

pub fn inverse_scale(scaled: &[f64], scaler: &Scaler) -> Result<Vec<f64>, PreprocessError> {
    scaled.iter().map(|&y| scaler.inverse(y)).collect()
}

/// Sliding windows of `seq_len` inputs, each followed by its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedSet {
    /// `n_samples x seq_len`, row-major.
    inputs: Vec<f64>,
    targets: Vec<f64>,
    seq_len: usize,
}

impl SupervisedSet {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, seq_len: usize) -> Result<Self, PreprocessError> {
        if seq_len == 0 {
            return Err(PreprocessError::ZeroWindow);
        }
        if inputs.len() != targets.len() * seq_len {
            return Err(PreprocessError::SeriesTooShort {
                len: inputs.len(),
                min: targets.len() * seq_len,
            });
        }
        Ok(Self {
            inputs,
            targets,
            seq_len,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.seq_len..(k + 1) * self.seq_len]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Samples `range` as a new set, order preserved.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SupervisedSet {
        SupervisedSet {
            inputs: self.inputs[range.start * self.seq_len..range.end * self.seq_len].to_vec(),
            targets: self.targets[range].to_vec(),
            seq_len: self.seq_len,
        }
    }
}

pub fn make_supervised(series: &[f64], seq_len: usize) -> Result<SupervisedSet, PreprocessError> {
    if seq_len == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    if series.len() < seq_len + 1 {
        return Err(PreprocessError::SeriesTooShort {
            len: series.len(),
            min: seq_len + 1,
        });
    }
    let n = series.len() - seq_len;
    let mut inputs = Vec::with_capacity(n * seq_len);
    for k in 0..n {
        inputs.extend_from_slice(&series[k..k + seq_len]);
    }
    Ok(SupervisedSet {
        inputs,
        targets: series[seq_len..].to_vec(),
        seq_len,
    })
}

/// Chronological split: the first `floor(fraction * n)` samples train.
pub fn train_test_split(
    set: &SupervisedSet,
    train_fraction: f64,
) -> Result<(SupervisedSet, SupervisedSet), PreprocessError> {
    let n = set.len();
    let n_train = split_point(n, train_fraction);
    if !(train_fraction > 0.0 && train_fraction < 1.0) || n_train == 0 || n_train == n {
        return Err(PreprocessError::EmptyPartition {
            n,
            fraction: train_fraction,
        });
    }
    Ok((set.slice(0..n_train), set.slice(n_train..n)))
}

pub(crate) fn split_point(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction).floor() as usize
}

fn check_finite(series: &[f64]) -> Result<(), PreprocessError> {
    match series.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(PreprocessError::NonFinite(i)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_spike_is_not_an_outlier() {
        let s = [1.0, 1.0, 1.0, 1.0, 100.0];
        let out = clean_outliers(&s, 3.0).unwrap();
        assert!(out.flagged.is_empty());
        assert_eq!(out.cleaned, s);
        // Independent z for the spike: mean 20.8, population SD 39.6.
        let z: f64 = (100.0 - 20.8) / 39.6;
        assert!((z - 2.0).abs() < 1e-12);
        assert!(((100.0 - out.mean) / out.sd - z).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let out = clean_outliers(&[5.0, 5.0, 5.0], 3.0).unwrap();
        assert!(out.degenerate);
        assert!(out.flagged.is_empty());
        assert_eq!(out.cleaned, vec![5.0; 3]);
    }

    #[test]
    fn clean_preconditions() {
        assert!(matches!(clean_outliers(&[1.0], 3.0), Err(PreprocessError::SeriesTooShort { .. })));
        assert!(matches!(clean_outliers(&[1.0, 2.0], 0.0), Err(PreprocessError::InvalidThreshold(_))));
        assert!(matches!(clean_outliers(&[1.0, f64::NAN], 3.0), Err(PreprocessError::NonFinite(1))));
    }

    #[test]
    fn flagged_run_collapses_to_last_good_value() {
        let mut s = vec![0.0; 200];
        for (i, v) in s.iter_mut().enumerate() {
            *v = (i % 5) as f64;
        }
        s[50] = 500.0;
        s[51] = 500.0;
        let out = clean_outliers(&s, 3.0).unwrap();
        assert_eq!(out.flagged, vec![50, 51]);
        assert_eq!(out.cleaned[50], s[49]);
        assert_eq!(out.cleaned[51], s[49]);
    }

    #[test]
    fn flagged_first_point_takes_first_unflagged_value() {
        let mut s = vec![2.0; 100];
        s[1] = 3.0;
        s[0] = 1000.0;
        let out = clean_outliers(&s, 3.0).unwrap();
        assert_eq!(out.flagged, vec![0]);
        assert_eq!(out.cleaned[0], 3.0);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1., 2., 3., 4., 5., 6., 7., 8.], 7).unwrap(), vec![4.0, 5.0]);
        assert_eq!(moving_average(&[3.5; 10], 4).unwrap(), vec![3.5; 7]);
        let s = [1.0, -2.0, 7.5];
        assert_eq!(moving_average(&s, 1).unwrap(), s);
        assert!(matches!(moving_average(&s, 4), Err(PreprocessError::WindowTooLarge { .. })));
        assert_eq!(moving_average(&s, 0), Err(PreprocessError::ZeroWindow));
    }

    #[test]
    fn scaling_examples() {
        let (y, sc) = minmax_scale(&[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 1.0]);
        assert_eq!(sc, Scaler { min: 0.0, max: 10.0 });
        let (y, sc) = minmax_scale(&[7.0, 7.0]).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
        assert!(sc.is_degenerate());
        assert!(matches!(inverse_scale(&y, &sc), Err(PreprocessError::DegenerateScaler(_))));
        assert_eq!(inverse_scale(&[0.0, 1.0], &Scaler { min: 0.0, max: 10.0 }).unwrap(), vec![0.0, 10.0]);
        assert_eq!(inverse_scale(&[0.5], &Scaler { min: 2.0, max: 4.0 }).unwrap(), vec![3.0]);
    }

    #[test]
    fn supervised_examples() {
        let s = make_supervised(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.input(0), &[1.0, 2.0]);
        assert_eq!(s.input(1), &[2.0, 3.0]);
        assert_eq!(s.targets(), &[3.0, 4.0]);
        assert_eq!(make_supervised(&[1.0, 2.0, 3.0], 2).unwrap().len(), 1);
        assert!(matches!(make_supervised(&[1.0, 2.0], 2), Err(PreprocessError::SeriesTooShort { .. })));
    }

    #[test]
    fn split_examples() {
        let series: Vec<f64> = (0..11).map(f64::from).collect();
        let set = make_supervised(&series, 1).unwrap();
        let (tr, te) = train_test_split(&set, 0.8).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        assert_eq!(te.targets(), &[9.0, 10.0]);

        let set = make_supervised(&[1.0, 2.0, 3.0], 1).unwrap();
        let (tr, te) = train_test_split(&set, 0.5).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));

        assert!(matches!(train_test_split(&set, 0.1), Err(PreprocessError::EmptyPartition { .. })));
        assert!(matches!(train_test_split(&set, 1.0), Err(PreprocessError::EmptyPartition { .. })));
    }

    proptest! {
        #[test]
        fn moving_average_stays_within_input_range(
            s in prop::collection::vec(-1e3f64..1e3, 1..60),
            w in 1usize..10,
        ) {
            prop_assume!(w <= s.len());
            let out = moving_average(&s, w).unwrap();
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(out.len(), s.len() - w + 1);
            for v in out {
                prop_assert!(v >= lo - 1e-12 * lo.abs().max(1.0));
                prop_assert!(v <= hi + 1e-12 * hi.abs().max(1.0));
            }
        }

        #[test]
        fn minmax_output_in_unit_interval(s in prop::collection::vec(-1e6f64..1e6, 1..50)) {
            let (y, _) = minmax_scale(&s).unwrap();
            prop_assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
