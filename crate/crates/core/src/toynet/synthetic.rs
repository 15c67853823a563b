//! Synthetic classification data with one concept that causally drives the
//! label and any number of distractor concepts independent of it.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seed::rng;
use crate::toynet::net::logistic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptKind {
    /// Mean of the block.
    Mean,
    /// Population variance of the block.
    Variance,
}

/// A concept computed from a contiguous block of input features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptDef {
    pub name: String,
    pub start: usize,
    pub len: usize,
    pub kind: ConceptKind,
}

impl ConceptDef {
    pub fn mean(name: &str, start: usize, len: usize) -> Self {
        ConceptDef {
            name: name.into(),
            start,
            len,
            kind: ConceptKind::Mean,
        }
    }

    pub fn variance(name: &str, start: usize, len: usize) -> Self {
        ConceptDef {
            name: name.into(),
            start,
            len,
            kind: ConceptKind::Variance,
        }
    }

    /// The concept value of one input row.
    pub fn value(&self, x: &[f64]) -> f64 {
        let block = &x[self.start..self.start + self.len];
        let n = self.len as f64;
        let mean = block.iter().sum::<f64>() / n;
        match self.kind {
            ConceptKind::Mean => mean,
            ConceptKind::Variance => block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n,
        }
    }

    /// Maps the value to zero mean and unit variance under i.i.d. standard
    /// normal inputs.
    pub fn standardize(&self, value: f64) -> f64 {
        let n = self.len as f64;
        match self.kind {
            ConceptKind::Mean => value * n.sqrt(),
            ConceptKind::Variance => {
                let mean = (n - 1.0) / n;
                let sd = (2.0 * (n - 1.0)).sqrt() / n;
                (value - mean) / sd
            }
        }
    }
}

/// Generator settings: `P(y = 1 | x) = logistic(slope · z + intercept)` with
/// `z` the standardized causal concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub input_dim: usize,
    pub concepts: Vec<ConceptDef>,
    pub causal: String,
    pub slope: f64,
    pub intercept: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            input_dim: 64,
            concepts: vec![
                ConceptDef::mean("causal", 0, 8),
                ConceptDef::mean("distractor", 8, 8),
            ],
            causal: "causal".into(),
            slope: 4.0,
            intercept: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.concepts.len() < 2 {
            return Err(Error::InvalidArgument(
                "at least two concepts are required".into(),
            ));
        }
        let causal = self
            .concepts
            .iter()
            .filter(|c| c.name == self.causal)
            .count();
        if causal != 1 {
            return Err(Error::InvalidArgument(format!(
                "causal concept '{}' must name exactly one concept",
                self.causal
            )));
        }
        let mut names: Vec<&str> = self.concepts.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate concept names".into()));
        }
        for c in &self.concepts {
            if c.len == 0 || c.start + c.len > self.input_dim {
                return Err(Error::InvalidArgument(format!(
                    "concept '{}' block [{}, {}) outside {} inputs",
                    c.name,
                    c.start,
                    c.start + c.len,
                    self.input_dim
                )));
            }
            if c.kind == ConceptKind::Variance && c.len < 2 {
                return Err(Error::InvalidArgument(format!(
                    "variance concept '{}' needs at least two features",
                    c.name
                )));
            }
        }
        if !self.slope.is_finite() || !self.intercept.is_finite() {
            return Err(Error::InvalidArgument(
                "slope and intercept must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn causal_concept(&self) -> &ConceptDef {
        self.concepts
            .iter()
            .find(|c| c.name == self.causal)
            .expect("validated spec")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub inputs: Matrix,
    pub labels: Vec<f64>,
    pub concept_values: BTreeMap<String, Vec<f64>>,
    pub spec: SyntheticSpec,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws `m` samples with i.i.d. standard normal inputs.
pub fn make_synthetic(spec: &SyntheticSpec, m: usize, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut r = rng(seed);
    let d = spec.input_dim;
    let data: Vec<f64> = (0..m * d).map(|_| r.sample(StandardNormal)).collect();
    let inputs = Matrix::new(m, d, data);
    let causal = spec.causal_concept();
    let labels = (0..m)
        .map(|i| {
            let z = causal.standardize(causal.value(inputs.row(i)));
            let p = logistic(spec.slope * z + spec.intercept);
            let u: f64 = r.random();
            if u < p {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let concept_values = spec
        .concepts
        .iter()
        .map(|c| {
            (
                c.name.clone(),
                (0..m).map(|i| c.value(inputs.row(i))).collect(),
            )
        })
        .collect();
    Ok(SyntheticDataset {
        inputs,
        labels,
        concept_values,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_specs() {
        let mut s = SyntheticSpec::default();
        s.concepts.truncate(1);
        assert!(make_synthetic(&s, 10, 0).is_err());
        let s = SyntheticSpec {
            causal: "nope".into(),
            ..SyntheticSpec::default()
        };
        assert!(make_synthetic(&s, 10, 0).is_err());
        let mut s = SyntheticSpec::default();
        s.concepts[1].start = 60;
        assert!(make_synthetic(&s, 10, 0).is_err());
        let mut s = SyntheticSpec::default();
        s.concepts[1].name = "causal".into();
        assert!(make_synthetic(&s, 10, 0).is_err());
    }

    #[test]
    fn concept_values_are_functions_of_input() {
        let data = make_synthetic(&SyntheticSpec::default(), 20, 3).unwrap();
        for i in 0..20 {
            let x = data.inputs.row(i);
            let expected = x[0..8].iter().sum::<f64>() / 8.0;
            assert!((data.concept_values["causal"][i] - expected).abs() < 1e-15);
        }
        assert!(data.labels.iter().all(|&y| y == 0.0 || y == 1.0));
    }

    #[test]
    fn variance_standardization() {
        let c = ConceptDef {
            name: "v".into(),
            start: 0,
            len: 4,
            kind: ConceptKind::Variance,
        };
        assert_eq!(c.value(&[1.0, 1.0, 1.0, 1.0]), 0.0);
        assert_eq!(c.value(&[1.0, -1.0, 1.0, -1.0]), 1.0);
        assert!((c.standardize(0.75)).abs() < 1e-15);
    }

    #[test]
    fn seeded() {
        let a = make_synthetic(&SyntheticSpec::default(), 50, 9).unwrap();
        assert_eq!(a, make_synthetic(&SyntheticSpec::default(), 50, 9).unwrap());
        assert_ne!(
            a.inputs,
            make_synthetic(&SyntheticSpec::default(), 50, 10)
                .unwrap()
                .inputs
        );
    }
}
