//! Experiment configuration, seeding, orchestration and artifact I/O.

mod config;
mod experiment;
mod persist;
mod seeds;

pub use config::{
    load_config, save_config, Bounds, CmaSection, ComparisonSection, DataConfig,
    EvaluationSection, ExperimentConfig, InvariantsProvided, LossSection, ReservoirSection,
    SearchConfig, SEARCH_NAMES,
};
pub use experiment::{
    generate_to_csv, prepare_data, run_comparison, run_experiment, run_variant, targets_for,
    AttractorCheck, ComparisonReport, ComparisonRow, ExperimentReport, PreparedData, RunReport,
    RunSeeds, FAILURE_MARKER,
};
pub use persist::{
    fmt_f64, load_model, read_matrix_csv, read_metadata, read_series_csv, read_spectrum_csv,
    read_vpt_csv, save_model, write_history_csv, write_matrix_csv, write_series_csv,
    write_spectrum_csv, write_text, write_vpt_csv, Metadata, ModelInfo, VERSION,
};
pub use seeds::{config_hash, derive_seed};
