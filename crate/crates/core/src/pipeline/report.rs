//! The relevance report and its plot-ready side outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::plot;
use crate::stats::{ScoreKind, SignificanceResult};

pub const TOOL_NAME: &str = "rcv";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the compact JSON serialization of `config`.
    pub config_hash: String,
    pub config: serde_json::Value,
}

impl ReportMeta {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(ReportMeta {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            command: command.into(),
            seed,
            config_hash: config_hash(&config)?,
            config,
        })
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Correlation between a concept's measures and the network output on the
/// concept set. `rho` and `p_value` are null when either side is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonEntry {
    pub concept_name: String,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RSquaredEntry {
    pub layer_id: String,
    pub concept_name: String,
    pub r_squared: f64,
    pub k_samples: usize,
    pub rank: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub layer_id: String,
    pub concept_name: String,
    pub tcav: f64,
    pub br_raw: f64,
    pub br_normalized: f64,
    pub mean: f64,
    pub std: f64,
    pub r_squared: f64,
    pub n: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceEntry {
    pub layer_id: String,
    pub concept_name: String,
    pub score_kind: ScoreKind,
    pub t_statistic: f64,
    pub p_value: f64,
    pub corrected_threshold: f64,
    pub reject_null: bool,
    pub degenerate: bool,
    pub scores: Vec<f64>,
}

impl SignificanceEntry {
    pub fn new(layer_id: &str, r: SignificanceResult) -> Self {
        SignificanceEntry {
            layer_id: layer_id.to_string(),
            concept_name: r.concept_name,
            score_kind: r.score_kind,
            t_statistic: r.t_statistic,
            p_value: r.p_value,
            corrected_threshold: r.corrected_threshold,
            reject_null: r.reject_null,
            degenerate: r.degenerate,
            scores: r.scores,
        }
    }

    pub fn mean_score(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    pub meta: ReportMeta,
    pub pearson: Vec<PearsonEntry>,
    pub rsquared: Vec<RSquaredEntry>,
    pub scores: Vec<ScoreEntry>,
    pub significance: Vec<SignificanceEntry>,
}

impl RelevanceReport {
    pub fn new(meta: ReportMeta) -> Self {
        RelevanceReport {
            meta,
            pearson: Vec::new(),
            rsquared: Vec::new(),
            scores: Vec::new(),
            significance: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn significance_of(&self, concept: &str, kind: ScoreKind) -> Option<&SignificanceEntry> {
        self.significance
            .iter()
            .find(|s| s.concept_name == concept && s.score_kind == kind)
    }

    /// Writes `<stem>.json` plus every non-empty side output as
    /// `<stem>.<kind>.<ext>`; returns the written paths.
    pub fn write(&self, out_dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let mut written = Vec::new();
        let mut put = |kind: Option<&str>, ext: &str, body: String| -> Result<()> {
            let name = match kind {
                Some(k) => format!("{stem}.{k}.{ext}"),
                None => format!("{stem}.{ext}"),
            };
            let path = out_dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put(None, "json", self.to_json()?)?;
        if !self.pearson.is_empty() {
            put(Some("pearson"), "csv", self.pearson_csv()?)?;
        }
        if !self.rsquared.is_empty() {
            put(Some("rsquared"), "csv", self.rsquared_csv()?)?;
            put(Some("rsquared"), "svg", plot::rsquared_svg(&self.rsquared))?;
        }
        if !self.scores.is_empty() {
            put(Some("scores"), "csv", self.scores_csv()?)?;
            put(Some("scores"), "svg", plot::scores_svg(&self.scores))?;
        }
        if !self.significance.is_empty() {
            put(Some("significance"), "csv", self.significance_csv()?)?;
        }
        Ok(written)
    }

    pub fn pearson_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["concept_name", "rho", "p_value", "n"])?;
        for e in &self.pearson {
            w.write_record([
                e.concept_name.clone(),
                opt_num(e.rho),
                opt_num(e.p_value),
                e.n.to_string(),
            ])?;
        }
        finish(w)
    }

    /// Long format: one row per (layer, concept), layers in analysis order.
    pub fn rsquared_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["layer_id", "concept_name", "r_squared", "k_samples", "rank"])?;
        for e in &self.rsquared {
            w.write_record([
                e.layer_id.clone(),
                e.concept_name.clone(),
                num(e.r_squared),
                e.k_samples.to_string(),
                e.rank.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn scores_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "layer_id",
            "concept_name",
            "tcav",
            "br_raw",
            "br_normalized",
            "r_squared",
        ])?;
        for e in &self.scores {
            w.write_record([
                e.layer_id.clone(),
                e.concept_name.clone(),
                num(e.tcav),
                num(e.br_raw),
                num(e.br_normalized),
                num(e.r_squared),
            ])?;
        }
        finish(w)
    }

    /// p-values with one row per (layer, score kind) and one column per
    /// concept.
    pub fn significance_csv(&self) -> Result<String> {
        let mut concepts: Vec<&str> = Vec::new();
        let mut rows: Vec<(&str, ScoreKind)> = Vec::new();
        for s in &self.significance {
            if !concepts.contains(&s.concept_name.as_str()) {
                concepts.push(&s.concept_name);
            }
            if !rows.contains(&(s.layer_id.as_str(), s.score_kind)) {
                rows.push((&s.layer_id, s.score_kind));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = ["layer_id", "score_kind"]
            .into_iter()
            .chain(concepts.iter().copied());
        w.write_record(header)?;
        for (layer, kind) in rows {
            let mut record = vec![layer.to_string(), kind.to_string()];
            for c in &concepts {
                let p = self
                    .significance
                    .iter()
                    .find(|s| s.layer_id == layer && s.score_kind == kind && s.concept_name == *c)
                    .map(|s| num(s.p_value))
                    .unwrap_or_default();
                record.push(p);
            }
            w.write_record(record)?;
        }
        finish(w)
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))
}
