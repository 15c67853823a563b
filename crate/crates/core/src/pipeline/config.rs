//! Analysis configuration and loading of the files it references.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rcvfit::{ActivationSet, FitOptions};
use crate::scoring::GradientSet;
use crate::stats::RepetitionConfig;
use crate::tensorio::{
    read_manifest, read_measures, read_tensor_with, ConceptMeasures, ReadOptions,
};

/// Dump files of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerPaths {
    pub layer_id: String,
    /// Concept-set activations, one row per concept manifest entry.
    pub activations: PathBuf,
    /// Test-set output gradients, one row per test manifest entry.
    #[serde(default)]
    pub gradients: Option<PathBuf>,
}

impl LayerPaths {
    /// Parses `ID=ACTIVATIONS[,GRADIENTS]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (id, files) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("layer '{spec}': expected ID=FILE")))?;
        if id.is_empty() || files.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "layer '{spec}': expected ID=FILE"
            )));
        }
        let (acts, grads) = match files.split_once(',') {
            Some((a, g)) => (a, Some(PathBuf::from(g))),
            None => (files, None),
        };
        Ok(LayerPaths {
            layer_id: id.to_string(),
            activations: acts.into(),
            gradients: grads,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Order-defining sample ids of the concept set.
    pub concept_manifest: PathBuf,
    /// Order-defining sample ids of the test set.
    pub test_manifest: Option<PathBuf>,
    pub measures: PathBuf,
    /// Network outputs on the concept set, for the correlation pre-analysis.
    pub predictions: Option<PathBuf>,
    pub layers: Vec<LayerPaths>,
    /// Concepts to analyse; empty means every concept in the measures file.
    pub concepts: Vec<String>,
    pub fit: FitOptions,
    pub repetitions: RepetitionConfig,
    /// Layer tested for significance; defaults to the last listed layer.
    pub stats_layer: Option<String>,
    /// Directory of saved RCVs to score instead of refitting.
    pub rcv_dir: Option<PathBuf>,
    pub allow_nonfinite: bool,
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file. A report is accepted too, in which case the
    /// config embedded in its metadata is used.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let value = read_json_value(path.as_ref())?;
        Ok(serde_json::from_value(embedded_config(value))?)
    }

    pub fn stats_layer_id(&self) -> Result<&str> {
        match &self.stats_layer {
            Some(id) => Ok(id),
            None => self
                .layers
                .last()
                .map(|l| l.layer_id.as_str())
                .ok_or_else(|| Error::InvalidArgument("no layers configured".into())),
        }
    }
}

pub(crate) fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// `meta.config` of a report, or the value itself.
pub(crate) fn embedded_config(value: serde_json::Value) -> serde_json::Value {
    match value {
        serde_json::Value::Object(mut map) if map.contains_key("meta") => map
            .remove("meta")
            .and_then(|mut m| m.get_mut("config").map(serde_json::Value::take))
            .unwrap_or(serde_json::Value::Null),
        v => v,
    }
}

/// Activations of the concept set and, if available, gradients of the test
/// set at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerData {
    pub concept_acts: ActivationSet,
    pub test_grads: Option<GradientSet>,
}

impl LayerData {
    pub fn layer_id(&self) -> &str {
        self.concept_acts.layer_id()
    }

    pub fn grads(&self) -> Result<&GradientSet> {
        self.test_grads.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("layer '{}' has no gradient dump", self.layer_id()))
        })
    }
}

/// Everything an analysis needs, aligned on the manifests.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisInputs {
    /// One entry per analysed concept, rows in concept manifest order.
    pub measures: Vec<ConceptMeasures>,
    pub predictions: Option<Vec<f64>>,
    pub layers: Vec<LayerData>,
}

impl AnalysisInputs {
    /// Reads and cross-checks every referenced file before any computation.
    pub fn load(cfg: &AnalysisConfig) -> Result<Self> {
        if cfg.layers.is_empty() {
            return Err(Error::InvalidArgument("no layers configured".into()));
        }
        let opts = ReadOptions {
            allow_nonfinite: cfg.allow_nonfinite,
        };
        let concept_ids = read_manifest(&cfg.concept_manifest)?;
        let test_ids = cfg.test_manifest.as_ref().map(read_manifest).transpose()?;

        let table = read_measures(&cfg.measures)?;
        let names = if cfg.concepts.is_empty() {
            table.concepts()
        } else {
            cfg.concepts.clone()
        };
        let measures = names
            .iter()
            .map(|c| table.aligned(c, &concept_ids))
            .collect::<Result<Vec<_>>>()?;

        let predictions = match &cfg.predictions {
            Some(path) => {
                let t = read_tensor_with(path, opts)?;
                if t.data().len() != concept_ids.len() {
                    return Err(Error::Misaligned(format!(
                        "{} predictions for {} concept samples",
                        t.data().len(),
                        concept_ids.len()
                    )));
                }
                Some(t.into_data())
            }
            None => None,
        };

        let mut seen = BTreeSet::new();
        let mut layers = Vec::with_capacity(cfg.layers.len());
        for l in &cfg.layers {
            if !seen.insert(l.layer_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "layer '{}' listed twice",
                    l.layer_id
                )));
            }
            let acts = read_tensor_with(&l.activations, opts)?;
            let concept_acts = ActivationSet::from_tensor(&l.layer_id, concept_ids.clone(), &acts)?;
            let test_grads = match (&l.gradients, &test_ids) {
                (Some(path), Some(ids)) => {
                    let g = read_tensor_with(path, opts)?;
                    let grads = GradientSet::from_tensor(&l.layer_id, ids.clone(), &g)?;
                    if grads.dim() != concept_acts.dim() {
                        return Err(Error::Dimension(format!(
                            "layer '{}': {} activation columns vs {} gradient columns",
                            l.layer_id,
                            concept_acts.dim(),
                            grads.dim()
                        )));
                    }
                    Some(grads)
                }
                (Some(_), None) => {
                    return Err(Error::InvalidArgument(
                        "gradient dumps need a test manifest".into(),
                    ))
                }
                (None, _) => None,
            };
            layers.push(LayerData {
                concept_acts,
                test_grads,
            });
        }
        let inputs = AnalysisInputs {
            measures,
            predictions,
            layers,
        };
        if let Some(id) = &cfg.stats_layer {
            inputs.layer(id)?;
        }
        Ok(inputs)
    }

    pub fn layer(&self, layer_id: &str) -> Result<&LayerData> {
        self.layers
            .iter()
            .find(|l| l.layer_id() == layer_id)
            .ok_or_else(|| Error::UnknownLayer(layer_id.to_string()))
    }
}
