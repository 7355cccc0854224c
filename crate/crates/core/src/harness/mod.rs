//! Training, evaluation, cross-validation and reporting.

mod adam;
mod bins;
mod config;
mod metrics;
mod report;
mod train;
mod xval;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bins::{
    length_bins, length_bins_from_predictions, parse_edges, LengthBin, LengthBinReport,
    DEFAULT_LENGTH_EDGES,
};
pub use config::{LossMode, ModalityMode, TrainConfig};
pub use metrics::{ClassCounts, Metrics};
pub use report::{to_report_json, write_report};
pub use train::{evaluate, model_inputs, predict, train, EpochRecord, Prediction, TrainOutcome};
pub use xval::{fold_config, xval, FoldOutcome, FoldReport, FoldSummary, Stat, XvalOutcome};
