//! The analysis stages: concept extraction, RCV fitting, scoring and
//! significance testing, and the reports of the corresponding commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::morpho::{patch_concept_measures_partial, ExtractOptions, CONCEPTS};
use crate::pipeline::config::{embedded_config, read_json_value, AnalysisConfig, AnalysisInputs};
use crate::pipeline::report::{
    PearsonEntry, RSquaredEntry, RelevanceReport, ReportMeta, ScoreEntry, SignificanceEntry,
};
use crate::rcvfit::{fit_rcv, FitOptions, Rcv};
use crate::scoring::{br_score, normalize_br, pearson, sensitivity};
use crate::stats::{evaluate_significance, run_repetitions, RepetitionConfig, RepetitionInputs};
use crate::tensorio::{read_manifest, MaskedImageSet, MeasureRow, MeasureTable};

/// A measure that could not be produced for a patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedMeasure {
    pub sample_id: String,
    /// `None` when the whole patch was skipped.
    pub concept: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOutput {
    pub table: MeasureTable,
    pub skipped: Vec<SkippedMeasure>,
}

impl ExtractOutput {
    pub fn skipped_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sample_id", "concept", "reason"])?;
        for s in &self.skipped {
            w.write_record([
                s.sample_id.as_str(),
                s.concept.as_deref().unwrap_or(""),
                s.reason.as_str(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))
    }
}

/// Concept measures of every patch, in manifest order and [`CONCEPTS`]
/// order. Patches without nuclei and concepts undefined for every nucleus of
/// a patch are skipped with a warning.
pub fn extract_measures(set: &MaskedImageSet, opts: &ExtractOptions) -> Result<ExtractOutput> {
    let mut table = MeasureTable::new();
    let mut skipped = Vec::new();
    for patch in &set.entries {
        let values = match patch_concept_measures_partial(patch, set.max_value, opts) {
            Ok(v) => v,
            Err(Error::EmptyRegion) => {
                warn!("patch '{}': no nucleus, skipped", patch.sample_id);
                skipped.push(SkippedMeasure {
                    sample_id: patch.sample_id.clone(),
                    concept: None,
                    reason: "no nucleus in mask".into(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        for concept in CONCEPTS {
            match values[concept] {
                Some(value) => table.push(MeasureRow {
                    sample_id: patch.sample_id.clone(),
                    concept: concept.to_string(),
                    value,
                })?,
                None => {
                    warn!("patch '{}': {concept} undefined, skipped", patch.sample_id);
                    skipped.push(SkippedMeasure {
                        sample_id: patch.sample_id.clone(),
                        concept: Some(concept.to_string()),
                        reason: "undefined for every nucleus".into(),
                    });
                }
            }
        }
    }
    Ok(ExtractOutput { table, skipped })
}

/// Where the patches of an extraction come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// A `P×H×W` npy stack, or a directory of `<sample_id>.png` files.
    pub images: PathBuf,
    /// Instance masks, in the same layout as `images`.
    pub masks: PathBuf,
    pub manifest: PathBuf,
    /// Largest raw intensity for npy stacks; PNG inputs use their bit depth.
    pub max_value: Option<u32>,
    pub options: ExtractOptions,
}

impl ExtractConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let value = read_json_value(path.as_ref())?;
        Ok(serde_json::from_value(embedded_config(value))?)
    }

    pub fn load_patches(&self) -> Result<MaskedImageSet> {
        let manifest = read_manifest(&self.manifest)?;
        if self.images.is_dir() {
            MaskedImageSet::from_png_dirs(&self.images, &self.masks, &manifest)
        } else {
            MaskedImageSet::from_npy(
                &self.images,
                &self.masks,
                &manifest,
                self.max_value.unwrap_or(255),
            )
        }
    }
}

pub fn run_extract(cfg: &ExtractConfig) -> Result<ExtractOutput> {
    let set = cfg.load_patches().stage("load patches")?;
    extract_measures(&set, &cfg.options).stage("extract")
}

/// One RCV per (layer, concept), layer-major.
pub fn fit_layers(inputs: &AnalysisInputs, fit: FitOptions) -> Result<Vec<Rcv>> {
    let mut out = Vec::with_capacity(inputs.layers.len() * inputs.measures.len());
    for layer in &inputs.layers {
        for m in &inputs.measures {
            out.push(fit_rcv(&layer.concept_acts, m, fit)?);
        }
    }
    Ok(out)
}

pub fn rsquared_table(rcvs: &[Rcv]) -> Vec<RSquaredEntry> {
    rcvs.iter()
        .map(|r| RSquaredEntry {
            layer_id: r.layer_id.clone(),
            concept_name: r.concept_name.clone(),
            r_squared: r.r_squared,
            k_samples: r.k_samples,
            rank: r.solver.rank,
            degenerate: r.degenerate,
        })
        .collect()
}

/// Correlation of each concept with the network output on the concept set;
/// empty without predictions.
pub fn pearson_table(inputs: &AnalysisInputs) -> Result<Vec<PearsonEntry>> {
    let Some(f) = &inputs.predictions else {
        return Ok(Vec::new());
    };
    inputs
        .measures
        .iter()
        .map(|m| {
            let (rho, p_value) = match pearson(&m.values, f) {
                Ok(c) => (Some(c.rho), Some(c.p_value)),
                Err(Error::Degenerate(_)) => {
                    warn!(
                        "concept '{}': constant input, correlation undefined",
                        m.concept_name
                    );
                    (None, None)
                }
                Err(e) => return Err(e),
            };
            Ok(PearsonEntry {
                concept_name: m.concept_name.clone(),
                rho,
                p_value,
                n: m.len(),
            })
        })
        .collect()
}

/// TCAV and Br of every RCV whose layer has test gradients; Br is
/// normalized over the concepts of each layer.
pub fn score_layers(inputs: &AnalysisInputs, rcvs: &[Rcv]) -> Result<Vec<ScoreEntry>> {
    let mut out = Vec::new();
    for layer in &inputs.layers {
        let Some(grads) = &layer.test_grads else {
            continue;
        };
        let mut entries = Vec::new();
        for rcv in rcvs.iter().filter(|r| r.layer_id == layer.layer_id()) {
            let s = sensitivity(grads, rcv)?;
            let sc = br_score(&s, rcv.r_squared)?;
            entries.push(ScoreEntry {
                layer_id: rcv.layer_id.clone(),
                concept_name: rcv.concept_name.clone(),
                tcav: sc.tcav,
                br_raw: sc.br_raw,
                br_normalized: sc.br_normalized,
                mean: sc.mean,
                std: sc.std,
                r_squared: sc.r_squared,
                n: sc.n,
                degenerate: sc.degenerate,
            });
        }
        if entries.is_empty() {
            continue;
        }
        let raw: BTreeMap<String, f64> = entries
            .iter()
            .map(|e| (e.concept_name.clone(), e.br_raw))
            .collect();
        if raw.len() != entries.len() {
            return Err(Error::InvalidArgument(format!(
                "layer '{}': duplicate concept names",
                layer.layer_id()
            )));
        }
        let norm = normalize_br(&raw)?;
        if norm.all_zero {
            warn!(
                "layer '{}': every Br is zero, normalization skipped",
                layer.layer_id()
            );
        }
        for e in &mut entries {
            e.br_normalized = norm.scores[&e.concept_name];
        }
        out.extend(entries);
    }
    Ok(out)
}

/// Repetition-based significance tests at one layer.
pub fn significance_at(
    inputs: &AnalysisInputs,
    layer_id: &str,
    fit: FitOptions,
    cfg: &RepetitionConfig,
) -> Result<Vec<SignificanceEntry>> {
    let layer = inputs.layer(layer_id)?;
    let reps = run_repetitions(
        &RepetitionInputs {
            concept_acts: &layer.concept_acts,
            measures: &inputs.measures,
            test_grads: layer.grads()?,
            fit,
        },
        cfg,
    )?;
    Ok(evaluate_significance(&reps, cfg)?
        .into_iter()
        .map(|r| SignificanceEntry::new(layer_id, r))
        .collect())
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// File stem of the saved RCV of (`layer_id`, `concept`) inside `dir`.
pub fn rcv_stem(dir: &Path, layer_id: &str, concept: &str) -> PathBuf {
    dir.join(format!("{}__{}", sanitize(layer_id), sanitize(concept)))
}

fn meta(command: &str, cfg: &AnalysisConfig) -> Result<ReportMeta> {
    ReportMeta::new(command, cfg.repetitions.seed, cfg)
}

/// The `fit` command: RCVs and the R² layer sweep, plus the correlation
/// pre-analysis when predictions are configured.
pub fn run_fit(cfg: &AnalysisConfig) -> Result<(RelevanceReport, Vec<Rcv>)> {
    let inputs = AnalysisInputs::load(cfg).stage("load")?;
    let rcvs = fit_layers(&inputs, cfg.fit).stage("fit")?;
    let mut report = RelevanceReport::new(meta("fit", cfg)?);
    report.pearson = pearson_table(&inputs).stage("pearson")?;
    report.rsquared = rsquared_table(&rcvs);
    Ok((report, rcvs))
}

/// The `score` command: TCAV and Br per (layer, concept), either from saved
/// RCVs (`rcv_dir`) or from a fresh fit.
pub fn run_score(cfg: &AnalysisConfig) -> Result<RelevanceReport> {
    let inputs = AnalysisInputs::load(cfg).stage("load")?;
    let rcvs = match &cfg.rcv_dir {
        Some(dir) => load_rcvs(dir, &inputs).stage("load rcvs")?,
        None => fit_layers(&inputs, cfg.fit).stage("fit")?,
    };
    let mut report = RelevanceReport::new(meta("score", cfg)?);
    report.pearson = pearson_table(&inputs).stage("pearson")?;
    report.rsquared = rsquared_table(&rcvs);
    report.scores = score_layers(&inputs, &rcvs).stage("score")?;
    Ok(report)
}

fn load_rcvs(dir: &Path, inputs: &AnalysisInputs) -> Result<Vec<Rcv>> {
    let mut out = Vec::new();
    for layer in &inputs.layers {
        for m in &inputs.measures {
            let stem = rcv_stem(dir, layer.layer_id(), &m.concept_name);
            let mut sidecar = stem.clone().into_os_string();
            sidecar.push(".json");
            let rcv = Rcv::load(PathBuf::from(sidecar))?;
            if rcv.layer_id != layer.layer_id() || rcv.concept_name != m.concept_name {
                return Err(Error::InvalidArgument(format!(
                    "{} holds ({}, {}), expected ({}, {})",
                    stem.display(),
                    rcv.layer_id,
                    rcv.concept_name,
                    layer.layer_id(),
                    m.concept_name
                )));
            }
            if rcv.v.len() != layer.concept_acts.dim() {
                return Err(Error::Dimension(format!(
                    "{}: {} components for a {}-wide layer",
                    stem.display(),
                    rcv.v.len(),
                    layer.concept_acts.dim()
                )));
            }
            out.push(rcv);
        }
    }
    Ok(out)
}

/// The `stats` command: significance of TCAV and Br at the stats layer.
pub fn run_stats(cfg: &AnalysisConfig) -> Result<RelevanceReport> {
    let inputs = AnalysisInputs::load(cfg).stage("load")?;
    let layer = cfg.stats_layer_id()?;
    let mut report = RelevanceReport::new(meta("stats", cfg)?);
    report.significance =
        significance_at(&inputs, layer, cfg.fit, &cfg.repetitions).stage("stats")?;
    Ok(report)
}
