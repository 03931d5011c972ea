//! Measurement noise, trajectory error metrics, feature-expectation
//! diagnostics and the end-to-end benchmark experiment.

mod experiment;
mod matching;
mod metrics;
mod noise;
pub mod reference;

pub use experiment::{
    cell_seed, identify, run_experiment, synthesize, CellResult, DemonstrationRecord, ExperimentConfig,
    ExperimentResults, GridEntry, GridRow, Identification, LqDefinition, Pipeline, Synthesis, SystemSpec,
    BENCHMARK_INVERSE_TEMPERATURE,
};
pub use matching::{feature_matching_report, FeatureMatchingReport, MatchingOptions};
pub use metrics::{nmae, ErrorReport};
pub use noise::{add_noise, NoiseSpec, Snr};
pub use reference::{summarize, Summary};
