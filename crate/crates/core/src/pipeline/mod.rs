//! End-to-end orchestration: configuration, preprocessing, training,
//! inference with label broadcast, and scoring.

mod config;
mod metrics;
mod preprocess;
mod run;

pub use config::{DataFile, PreprocessConfig, RunConfig, SyntheticConfig};
pub use metrics::{compute_metrics, Metrics};
pub use preprocess::{horizontal_center, input_features, preprocess, uniform_subset, Preprocessed};
pub use run::{
    derive_seed, extract_features, feature_tensors, infer, load_dataset, load_file, predict_voxels, preprocess_all, run_experiment, sweep,
    sweep_csv, synthetic_suite, test_seed, train, ExperimentResult, Prediction, SweepRow, TimingReport, TrainOutcome,
};
