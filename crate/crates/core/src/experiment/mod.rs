//! Configuration, orchestration and export of reproducible runs.

mod config;
mod export;
mod run;

pub use config::{
    parse_config, parse_config_with, preset_values, resolve_config, LoadedConfig, Mode, ObjectiveFamily,
    Overrides, RunConfig, Source, OUTPUT_DIR_ENV, PRESETS, REQUIRED_FIELDS,
};
pub use export::{export_results, write_csv, write_json, Format, LossCurve, Tabular};
pub use run::{
    lemma_report, load_reference, read_manifest, run_experiment, sweep_config, synthesize_dataset, CheckResult,
    LemmaReport, RunManifest,
};
