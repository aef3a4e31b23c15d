//! End-to-end runs: dataset generation, training and the three studies
//! (payload kind, room change, cross-scenario), with results cached on disk
//! by configuration hash.

mod config;
mod generate;
mod report;
mod study;

pub use config::{file_sha256, hash_hex, ArchKind, ExperimentConfig, GenerationKey, Seeds};
pub use generate::{
    initial_links, perturb_links, profiles_for, run_generation, simulate, GenerationReport,
    ReceiverStats, LINKS_FILE, PROFILE_FILE, RECEIVER_FILE,
};
pub use report::{
    claims_for, cross_scenario_claims, emit_report, env_change_claims, env_drop, load_tables,
    report_dir, signal_type_claims, worst_cross, Claim, MARGIN, NOISE_GAP, SUMMARY_FILE,
};
pub use study::{
    evaluate_on, run_cross_scenario_study, run_env_change_study, run_signal_type_study, run_study,
    split_for, train_config, train_model, Log, ResultRow, ResultTable, Study, TrainedModel,
    CHECKPOINT_FILE, HISTORY_FILE, TEST_ENV_CHANGE, TEST_OWN,
};
