//! Metrics, stratified splits, the train-half cross-validation protocol,
//! permutation importance, model bundles and comparison reports.

mod bundle;
mod dataset;
mod importance;
mod metrics;
mod protocol;
mod report;
mod split;

pub use bundle::{config_hash, split_digest, LayoutDescriptor, ModelBundle, BUNDLE_SCHEMA};
pub use dataset::{
    assemble_dataset, collect_observations, read_dataset_csv, write_dataset_csv, LabeledDataset,
    ObservationPool,
};
pub use importance::{
    gain_importance, permutation_importance, GainEntry, ImportanceEntry, ImportanceReport,
};
pub use metrics::{compute_metrics, weighted_f1, ConfusionMatrix, MetricsReport};
pub use protocol::{
    evaluate_on, run_protocol, train_on, CvLog, FeatureScope, FoldResult, ModelKind,
    ProtocolConfig, ProtocolOutcome, TrainOutcome, TrainedModel,
};
pub use report::{importance_markdown, metrics_markdown, CombinedDelta, ComparisonGrid, COMBINED};
pub use split::{stratified_folds, stratified_split, Split};
