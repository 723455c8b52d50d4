//! Experiment orchestration: configs, runs, metrics files, comparison
//! tables and plots.

pub mod compare;
pub mod config;
pub mod plot;
pub mod records;
pub mod run;

pub use compare::{compare, ComparisonRow, ComparisonTable};
pub use config::{CustomStream, DatasetSpec, ExperimentConfig, ExperimentSection, StreamSource, OUTPUT_DIR_ENV};
pub use plot::{accuracy_curves_svg, presence_heatmap_svg};
pub use records::{cell_stem, parse_records, read_records, write_records, MetricsRecord, RunStatus, Timing};
pub use run::{
    build_stream, drive_strategy, experience_data, no_repetition_stream, run_experiment, run_job, Job, JobOutput, RunSummary,
};
