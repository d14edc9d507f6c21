//! Stacked LSTM regressor written from first principles: gated cells,
//! backpropagation through time, inverted dropout and Adam.
//!
//! Gate blocks are ordered `[input, forget, candidate, output]` throughout.
//! All arithmetic is `f64`.

mod adam;
mod cell;
mod checkpoint;
mod model;
mod params;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cell::{cell_backward, cell_forward, CellCache, CellGrads};
pub use checkpoint::{Checkpoint, LayerShape, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use model::{
    backward, draw_masks, forward, forward_with_masks, init_model, mse_loss, predict_batch, predict_horizon,
    ForwardCache, LayerCache, LstmModel, SampleCache,
};
pub use params::{glorot_limit, LstmLayerParams, ModelParams};
pub use train::{train, validation_split, EpochLoss, TrainConfig, TrainHistory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LstmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("pred has {pred} values, target has {target}")]
    LengthMismatch { pred: usize, target: usize },
    #[error("cache does not match the model's layer shapes")]
    StaleCache,
    #[error("seed window has {got} values, model expects {expected}")]
    BadWindow { expected: usize, got: usize },
    #[error("no training data")]
    EmptyData,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
