//! Orchestration of the analysis: configs, the per-command stages, the
//! synthetic demo and the report writers.

mod analysis;
mod config;
mod demo;
pub mod plot;
mod report;

pub use analysis::{
    extract_measures, fit_layers, pearson_table, rcv_stem, rsquared_table, run_extract, run_fit,
    run_score, run_stats, score_layers, significance_at, ExtractConfig, ExtractOutput,
    SkippedMeasure,
};
pub use config::{AnalysisConfig, AnalysisInputs, LayerData, LayerPaths};
pub use demo::{run_demo, DemoConfig, DemoRun, DemoVerdict};
pub use report::{
    config_hash, PearsonEntry, RSquaredEntry, RelevanceReport, ReportMeta, ScoreEntry,
    SignificanceEntry, TOOL_NAME, TOOL_VERSION,
};
