//! Versioned JSON checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::LstmModel;
use super::params::{LstmLayerParams, ModelParams};
use super::train::TrainConfig;
use super::LstmError;
use crate::preprocess::Scaler;

pub const CHECKPOINT_FORMAT: &str = "co2cast-lstm";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seq_len: usize,
    pub dropout_rate: f64,
    pub layers: Vec<LayerShape>,
    /// All parameters in [`ModelParams::tensors`] order.
    pub params: Vec<f64>,
    pub scaler: Option<Scaler>,
    pub config: Option<TrainConfig>,
    /// Free-form provenance such as the config hash.
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: &LstmModel, scaler: Option<Scaler>, config: Option<TrainConfig>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seq_len: model.seq_len,
            dropout_rate: model.dropout_rate,
            layers: model
                .params
                .layers
                .iter()
                .map(|l| LayerShape {
                    input: l.input_size,
                    hidden: l.hidden,
                })
                .collect(),
            params: model.params.to_flat(),
            scaler,
            config,
            meta: BTreeMap::new(),
        }
    }

    pub fn model(&self) -> Result<LstmModel, LstmError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(LstmError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let last = self
            .layers
            .last()
            .ok_or_else(|| LstmError::Checkpoint("no layers".into()))?;
        let mut params = ModelParams {
            layers: self
                .layers
                .iter()
                .map(|s| LstmLayerParams::zeros(s.input, s.hidden))
                .collect(),
            head_w: vec![0.0; last.hidden],
            head_b: 0.0,
        };
        params.assign_flat(&self.params)?;
        let model = LstmModel {
            params,
            dropout_rate: self.dropout_rate,
            seq_len: self.seq_len,
        };
        model.check()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LstmError> {
        serde_json::from_str(text).map_err(|e| LstmError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), LstmError> {
        std::fs::write(path, self.to_json()).map_err(|e| LstmError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, LstmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LstmError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
