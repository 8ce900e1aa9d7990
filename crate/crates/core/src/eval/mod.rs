//! Nearest-neighbour classification, the one-sample / all-samples accuracy
//! protocols, and ranking metrics.

mod classify;
mod metrics;
mod protocol;

pub use classify::{nn_classify, Metric, Prediction};
pub use metrics::{
    average_precision, evaluate_accuracy, mean_average_precision, rank_by_score, MapAveraging, MapReport,
};
pub use protocol::{
    learn_alignment, run_protocol, AdaptMethod, ProtocolConfig, ProtocolResult, SamplesPerClass, TableRow,
};
