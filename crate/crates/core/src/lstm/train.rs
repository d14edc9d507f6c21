//! Mini-batch training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::model::{backward, forward, mse_loss, predict_batch, LstmModel};
use super::LstmError;
use crate::preprocess::{split_point, SupervisedSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: f64,
    pub lr: f64,
    pub seed: u64,
    /// Global-norm gradient clipping threshold.
    pub clip_norm: Option<f64>,
    /// Trailing share of the training samples held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 100,
            dropout: 0.16,
            lr: 1e-3,
            seed: 0,
            clip_norm: None,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        if self.batch_size == 0 {
            return Err(LstmError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(LstmError::InvalidConfig(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(LstmError::InvalidConfig(format!("lr {} must be finite and >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(LstmError::InvalidConfig(format!(
                "validation_fraction {} not in [0, 1)",
                self.validation_fraction
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(LstmError::InvalidConfig(format!("clip_norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation samples were held out.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLoss>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `epoch,train_loss,val_loss` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:.10e}")).unwrap_or_default();
            out.push_str(&format!("{},{:.10e},{}\n", e.epoch, e.train_loss, val));
        }
        out
    }
}

/// Splits off the chronological validation tail.
pub fn validation_split(data: &SupervisedSet, fraction: f64) -> (SupervisedSet, SupervisedSet) {
    let n = data.len();
    let n_val = split_point(n, fraction);
    (data.slice(0..n - n_val), data.slice(n - n_val..n))
}

/// Trains with shuffled mini-batches (order seeded by `cfg.seed`), MSE loss
/// and Adam. The model's dropout rate is set from `cfg.dropout`.
pub fn train(mut model: LstmModel, data: &SupervisedSet, cfg: &TrainConfig) -> Result<(LstmModel, TrainHistory), LstmError> {
    cfg.validate()?;
    model.check()?;
    if data.is_empty() {
        return Err(LstmError::EmptyData);
    }
    if data.seq_len() != model.seq_len {
        return Err(LstmError::ShapeMismatch(format!(
            "data windows have length {}, model expects {}",
            data.seq_len(),
            model.seq_len
        )));
    }
    if cfg.epochs == 0 {
        return Ok((model, TrainHistory::default()));
    }
    let (fit, val) = validation_split(data, cfg.validation_fraction);
    if fit.is_empty() {
        return Err(LstmError::EmptyData);
    }
    model.dropout_rate = cfg.dropout;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(
        model.params.num_params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let seq_len = model.seq_len;
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut history = TrainHistory::default();
    let mut batch_inputs = Vec::with_capacity(cfg.batch_size * seq_len);
    let mut batch_targets = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            batch_inputs.clear();
            batch_targets.clear();
            for &k in idx {
                batch_inputs.extend_from_slice(fit.input(k));
                batch_targets.push(fit.targets()[k]);
            }
            let (pred, cache) = forward(&model, &batch_inputs, true, &mut rng)?;
            let (loss, grad) = mse_loss(&pred, &batch_targets)?;
            if !loss.is_finite() {
                return Err(LstmError::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += loss * idx.len() as f64;
            let mut grads = backward(&model, &cache, &grad)?;
            if let Some(clip) = cfg.clip_norm {
                let norm = grads.norm();
                if norm > clip {
                    grads.scale(clip / norm);
                }
            }
            adam_step(&mut model.params, &grads, &mut adam)?;
        }
        let train_loss = loss_sum / fit.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            let pred = predict_batch(&model, val.inputs())?;
            Some(mse_loss(&pred, val.targets())?.0)
        };
        if val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(LstmError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {val_loss:?}");
        history.epochs.push(EpochLoss {
            epoch: epoch + 1,
            train_loss,
            val_loss,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::init_model;
    use crate::preprocess::make_supervised;

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.2).sin() * 0.5 + 0.5).collect()
    }

    #[test]
    fn zero_epochs_is_noop() {
        let m = init_model(&[3], 4, 0.0, 1).unwrap();
        let data = make_supervised(&ramp(20), 4).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (m2, h) = train(m.clone(), &data, &cfg).unwrap();
        assert_eq!(m, m2);
        assert!(h.is_empty());
    }

    #[test]
    fn zero_lr_is_noop_on_parameters() {
        let m = init_model(&[3, 3], 4, 0.0, 1).unwrap();
        let data = make_supervised(&ramp(30), 4).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            dropout: 0.0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (m2, h) = train(m.clone(), &data, &cfg).unwrap();
        assert_eq!(m.params, m2.params);
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn history_has_one_entry_per_epoch_and_is_deterministic() {
        let m = init_model(&[4, 4], 5, 0.0, 3).unwrap();
        let data = make_supervised(&ramp(60), 5).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 7,
            dropout: 0.2,
            seed: 9,
            ..TrainConfig::default()
        };
        let (a, ha) = train(m.clone(), &data, &cfg).unwrap();
        let (b, hb) = train(m, &data, &cfg).unwrap();
        assert_eq!(ha.len(), 4);
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert!(ha.epochs.iter().all(|e| e.val_loss.is_some()));
        let csv = ha.to_csv();
        assert!(csv.starts_with("epoch,train_loss,val_loss\n1,"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn rejects_bad_input() {
        let m = init_model(&[3], 4, 0.0, 1).unwrap();
        let data = make_supervised(&ramp(20), 3).unwrap();
        assert!(matches!(
            train(m.clone(), &data, &TrainConfig::default()),
            Err(LstmError::ShapeMismatch(_))
        ));
        let data = make_supervised(&ramp(20), 4).unwrap();
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(m, &data, &cfg), Err(LstmError::InvalidConfig(_))));
    }

    #[test]
    fn exploding_inputs_abort_with_diagnostic() {
        let m = init_model(&[3], 2, 0.0, 1).unwrap();
        let series = vec![1e200, -1e200, 1e200, -1e200, 1e200, -1e200];
        let data = make_supervised(&series, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            validation_fraction: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(m, &data, &cfg), Err(LstmError::NonFiniteLoss { epoch: 0, batch: 0 })));
    }
}
