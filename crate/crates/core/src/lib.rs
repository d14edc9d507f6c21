//! Daily sectoral CO₂ emissions toolkit.
//!
//! The pipeline runs [`ingest`] → [`preprocess`] → [`pca`] → [`lstm`] →
//! [`metrics`]; [`energy`] holds the adsorption energetics arithmetic and
//! [`pipeline`] wires everything into the batch runs behind the `co2cast`
//! binary.

pub mod config;
pub mod energy;
pub mod ingest;
pub mod linalg;
pub mod lstm;
pub mod metrics;
pub mod pca;
pub mod pipeline;
pub mod preprocess;
pub mod svg;
pub mod synthetic;

pub use ingest::{EmissionDataset, EmissionRecord, FeatureMatrix, Sector};
pub use lstm::{LstmModel, TrainConfig};
pub use metrics::MetricsReport;
pub use pca::PcaResult;
