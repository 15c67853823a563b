//! Repeated RCV fitting on random concept subsets and significance testing of
//! the resulting TCAV and Br score distributions.

use std::borrow::Cow;
use std::fmt;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rcvfit::{fit_rcv, ActivationSet, FitOptions};
use crate::scoring::{br_score, sensitivity, GradientSet};
use crate::seed::{derive_seed, rng};
use crate::stats::ttest::one_sample_ttest;
use crate::tensorio::ConceptMeasures;

/// Null mean for TCAV scores of a random direction.
pub const TCAV_NULL: f64 = 0.5;
/// Null mean for Br scores of a random direction.
pub const BR_NULL: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepetitionConfig {
    pub n_repetitions: usize,
    pub resample_fraction: f64,
    pub seed: u64,
    pub alpha: f64,
    /// Bonferroni family size; `None` means the number of concepts tested.
    pub n_comparisons: Option<usize>,
}

impl Default for RepetitionConfig {
    fn default() -> Self {
        RepetitionConfig {
            n_repetitions: 30,
            resample_fraction: 0.8,
            seed: 0,
            alpha: 0.01,
            n_comparisons: None,
        }
    }
}

impl RepetitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_repetitions < 2 {
            return Err(Error::InvalidArgument(
                "n_repetitions must be at least 2".into(),
            ));
        }
        if !(self.resample_fraction > 0.0 && self.resample_fraction <= 1.0) {
            return Err(Error::InvalidArgument(
                "resample_fraction must be in (0, 1]".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("alpha must be in (0, 1)".into()));
        }
        if self.n_comparisons == Some(0) {
            return Err(Error::InvalidArgument(
                "n_comparisons must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Inputs of one repetition run: concept-set activations and measures at
/// one layer, plus the fixed test-set gradients at the same layer.
#[derive(Debug, Clone)]
pub struct RepetitionInputs<'a> {
    pub concept_acts: &'a ActivationSet,
    pub measures: &'a [ConceptMeasures],
    pub test_grads: &'a GradientSet,
    pub fit: FitOptions,
}

/// Per-repetition scores of one concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptRepetitions {
    pub concept_name: String,
    pub tcav: Vec<f64>,
    pub br_raw: Vec<f64>,
    pub r_squared: Vec<f64>,
}

/// Row indices used by repetition `r`, ascending.
pub fn repetition_subset(k: usize, cfg: &RepetitionConfig, r: usize) -> Result<Vec<usize>> {
    let size = ((cfg.resample_fraction * k as f64).round() as usize).min(k);
    if size < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: size,
        });
    }
    if size == k {
        return Ok((0..k).collect());
    }
    let mut rng = rng(derive_seed(cfg.seed, r as u64));
    let mut idx = sample(&mut rng, k, size).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Concept-set activations and test-set gradients used by one repetition.
#[derive(Debug, Clone)]
pub struct RepetitionDumps<'a> {
    pub concept_acts: Cow<'a, ActivationSet>,
    pub test_grads: Cow<'a, GradientSet>,
}

/// For each repetition: draw a seeded subset of the concept samples, refit
/// every concept's RCV on it, score on the fixed test gradients, and record
/// TCAV and raw Br.
pub fn run_repetitions(
    inputs: &RepetitionInputs<'_>,
    cfg: &RepetitionConfig,
) -> Result<Vec<ConceptRepetitions>> {
    run_repetitions_with(inputs.measures, inputs.fit, cfg, |_| {
        Ok(RepetitionDumps {
            concept_acts: Cow::Borrowed(inputs.concept_acts),
            test_grads: Cow::Borrowed(inputs.test_grads),
        })
    })
}

/// Like [`run_repetitions`], but asks `dumps` for the activations and
/// gradients of every repetition, so that the model itself may change
/// between repetitions. The concept subset of repetition `r` is still
/// [`repetition_subset`]`(K, cfg, r)`.
pub fn run_repetitions_with<'a>(
    measures: &[ConceptMeasures],
    fit: FitOptions,
    cfg: &RepetitionConfig,
    mut dumps: impl FnMut(usize) -> Result<RepetitionDumps<'a>>,
) -> Result<Vec<ConceptRepetitions>> {
    cfg.validate()?;
    if measures.is_empty() {
        return Err(Error::InvalidArgument("no concepts to evaluate".into()));
    }
    let mut out: Vec<ConceptRepetitions> = measures
        .iter()
        .map(|m| ConceptRepetitions {
            concept_name: m.concept_name.clone(),
            tcav: Vec::with_capacity(cfg.n_repetitions),
            br_raw: Vec::with_capacity(cfg.n_repetitions),
            r_squared: Vec::with_capacity(cfg.n_repetitions),
        })
        .collect();

    for r in 0..cfg.n_repetitions {
        let d = dumps(r)?;
        let subset = repetition_subset(d.concept_acts.len(), cfg, r)?;
        let acts = d.concept_acts.select(&subset);
        for (m, rec) in measures.iter().zip(out.iter_mut()) {
            let rcv = fit_rcv(&acts, &m.select(&subset), fit)?;
            let s = sensitivity(&d.test_grads, &rcv)?;
            let scores = br_score(&s, rcv.r_squared)?;
            rec.tcav.push(scores.tcav);
            rec.br_raw.push(scores.br_raw);
            rec.r_squared.push(rcv.r_squared);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Tcav,
    Br,
}

impl ScoreKind {
    pub fn null_mean(self) -> f64 {
        match self {
            ScoreKind::Tcav => TCAV_NULL,
            ScoreKind::Br => BR_NULL,
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Tcav => "tcav",
            ScoreKind::Br => "br",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub concept_name: String,
    pub score_kind: ScoreKind,
    pub t_statistic: f64,
    pub p_value: f64,
    pub corrected_threshold: f64,
    pub reject_null: bool,
    pub degenerate: bool,
    pub scores: Vec<f64>,
}

/// Bonferroni-corrected significance level.
pub fn corrected_threshold(alpha: f64, n_comparisons: usize) -> f64 {
    alpha / n_comparisons as f64
}

/// Tests each concept's TCAV list against 0.5 and its Br list against 0 at
/// `alpha / n_comparisons`. Results are ordered all-TCAV, then all-Br.
pub fn evaluate_significance(
    reps: &[ConceptRepetitions],
    cfg: &RepetitionConfig,
) -> Result<Vec<SignificanceResult>> {
    if reps.is_empty() {
        return Err(Error::InvalidArgument("no concepts to evaluate".into()));
    }
    let m = cfg.n_comparisons.unwrap_or(reps.len());
    let threshold = corrected_threshold(cfg.alpha, m);
    let mut out = Vec::with_capacity(2 * reps.len());
    for kind in [ScoreKind::Tcav, ScoreKind::Br] {
        for rep in reps {
            let scores = match kind {
                ScoreKind::Tcav => &rep.tcav,
                ScoreKind::Br => &rep.br_raw,
            };
            out.push(test_scores(&rep.concept_name, kind, scores, threshold)?);
        }
    }
    Ok(out)
}

/// Tests one list of scores against the null mean for `kind`.
pub fn test_scores(
    concept_name: &str,
    kind: ScoreKind,
    scores: &[f64],
    corrected_threshold: f64,
) -> Result<SignificanceResult> {
    let t = one_sample_ttest(scores, kind.null_mean())?;
    Ok(SignificanceResult {
        concept_name: concept_name.to_string(),
        score_kind: kind,
        t_statistic: t.t,
        p_value: t.p,
        corrected_threshold,
        reject_null: t.p <= corrected_threshold,
        degenerate: t.degenerate,
        scores: scores.to_vec(),
    })
}
