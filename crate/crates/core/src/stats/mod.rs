//! Repetition protocol and significance testing.

mod repetitions;
pub mod special;
mod ttest;

pub use repetitions::{
    corrected_threshold, evaluate_significance, repetition_subset, run_repetitions,
    run_repetitions_with, test_scores, ConceptRepetitions, RepetitionConfig, RepetitionDumps,
    RepetitionInputs, ScoreKind, SignificanceResult, BR_NULL, TCAV_NULL,
};
pub use ttest::{one_sample_ttest, TTest};
