//! Campaign layer over the probing core: strict JSON configuration, suite
//! generation, matrix execution with byte-reproducible record streams, report
//! assembly, offline re-clustering, and single-case replay.

pub mod config;
pub mod records;
pub mod report;
pub mod runner;
pub mod suite;

pub use config::{load_config, ArmChoice, CampaignConfig, ConfigError, FilterArm};
pub use records::{read_records, CampaignRecord, RecordStatus, RecordsError};
pub use report::{
    build_report, compute_vd_pools, render_csv, render_text, CampaignReport, ClusterPool,
};
pub use runner::{
    load_semantic_table, replay_source, run_campaign, run_case, verify_stored_suite,
    write_outputs, write_suite, CampaignError, CampaignOutcome, CaseOutput, RunManifest,
    SourceFailure,
};
pub use suite::{
    classify_complexity, generate_case, generate_suite, step_budget, ComplexityClass, SuiteCase,
    SuiteError,
};
