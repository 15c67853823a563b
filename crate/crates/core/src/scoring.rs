//! Directional-derivative sensitivities along a concept vector and the
//! global TCAV-style and bidirectional relevance (Br) scores built from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rcvfit::{unit_direction, Rcv};
use crate::stats::special::student_t_two_sided;
use crate::tensorio::Tensor;

/// Cap on `μ̂/σ̂` used when every sensitivity is identical (σ̂ = 0).
pub const CV_CAP: f64 = 1e6;

/// Per-input gradients `∂f(x_i)/∂Φ(x_i)` at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    grads: Matrix,
    layer_id: String,
    sample_ids: Vec<String>,
}

impl GradientSet {
    pub fn new(
        layer_id: impl Into<String>,
        sample_ids: Vec<String>,
        grads: Matrix,
    ) -> Result<Self> {
        if grads.rows() != sample_ids.len() {
            return Err(Error::Misaligned(format!(
                "{} gradient rows but {} sample ids",
                grads.rows(),
                sample_ids.len()
            )));
        }
        Ok(GradientSet {
            grads,
            layer_id: layer_id.into(),
            sample_ids,
        })
    }

    pub fn from_tensor(
        layer_id: impl Into<String>,
        sample_ids: Vec<String>,
        t: &Tensor,
    ) -> Result<Self> {
        if t.shape().is_empty() {
            return Err(Error::Dimension(
                "gradient tensor must have a sample axis".into(),
            ));
        }
        GradientSet::new(
            layer_id,
            sample_ids,
            Matrix::new(t.rows(), t.row_len(), t.data().to_vec()),
        )
    }

    pub fn from_rows(
        layer_id: impl Into<String>,
        sample_ids: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        GradientSet::from_tensor(layer_id, sample_ids, &Tensor::from_rows(rows)?)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.grads.rows(), self.grads.cols()],
            self.grads.data().to_vec(),
        )
        .expect("matrix shape is consistent")
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn len(&self) -> usize {
        self.grads.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.grads.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.grads.row(i)
    }
}

/// Sensitivities `S_i` of one concept at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySet {
    pub values: Vec<f64>,
    pub concept_name: String,
    pub layer_id: String,
    pub sample_ids: Vec<String>,
}

/// Aggregate relevance of one concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptScores {
    pub tcav: f64,
    pub br_raw: f64,
    pub br_normalized: f64,
    pub mean: f64,
    pub std: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Set when σ̂ = 0 and the capped ratio was used.
    pub degenerate: bool,
}

/// `S_i = ∇_Φ f(x_i) · v̂` with `v̂` the unit RCV direction.
pub fn sensitivity(grads: &GradientSet, rcv: &Rcv) -> Result<SensitivitySet> {
    if grads.layer_id() != rcv.layer_id {
        return Err(Error::LayerMismatch {
            expected: rcv.layer_id.clone(),
            found: grads.layer_id().to_string(),
        });
    }
    if grads.dim() != rcv.v.len() {
        return Err(Error::Dimension(format!(
            "gradients have {} components, RCV has {}",
            grads.dim(),
            rcv.v.len()
        )));
    }
    let u = unit_direction(rcv)?;
    Ok(SensitivitySet {
        values: (0..grads.len()).map(|i| dot(grads.row(i), &u)).collect(),
        concept_name: rcv.concept_name.clone(),
        layer_id: rcv.layer_id.clone(),
        sample_ids: grads.sample_ids().to_vec(),
    })
}

/// Fraction of strictly positive sensitivities.
pub fn tcav_score(s: &SensitivitySet) -> Result<f64> {
    if s.values.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let positive = s.values.iter().filter(|&&v| v > 0.0).count();
    Ok(positive as f64 / s.values.len() as f64)
}

/// Sample mean and (N − 1) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// `Br = R² · μ̂/σ̂` with the TCAV score filled in; `br_normalized` is left
/// equal to `br_raw` until [`normalize_br`] runs over the concept set.
pub fn br_score(s: &SensitivitySet, r_squared: f64) -> Result<ConceptScores> {
    let n = s.values.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let (mean, std) = mean_std(&s.values);
    let (br_raw, degenerate) = if std > 0.0 {
        let br = if r_squared == 0.0 {
            0.0
        } else {
            mean / (std / r_squared)
        };
        (br, false)
    } else if mean == 0.0 {
        (0.0, true)
    } else {
        (mean.signum() * r_squared * CV_CAP, true)
    };
    Ok(ConceptScores {
        tcav: tcav_score(s)?,
        br_raw,
        br_normalized: br_raw,
        mean,
        std,
        r_squared,
        n,
        degenerate,
    })
}

/// Result of [`normalize_br`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBr {
    pub scores: BTreeMap<String, f64>,
    /// All inputs were zero; values returned unchanged.
    pub all_zero: bool,
}

/// Divides every raw Br by the largest absolute value across the concept set.
pub fn normalize_br(raw: &BTreeMap<String, f64>) -> Result<NormalizedBr> {
    if raw.is_empty() {
        return Err(Error::InvalidArgument("no concepts to normalize".into()));
    }
    let max_abs = raw.values().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return Ok(NormalizedBr {
            scores: raw.clone(),
            all_zero: true,
        });
    }
    Ok(NormalizedBr {
        scores: raw.iter().map(|(k, v)| (k.clone(), v / max_abs)).collect(),
        all_zero: false,
    })
}

/// Pearson correlation with its two-sided p-value (t distribution, n − 2 df).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p_value: f64,
}

pub fn pearson(c: &[f64], f: &[f64]) -> Result<Correlation> {
    if c.len() != f.len() {
        return Err(Error::Misaligned(format!(
            "{} concept values vs {} predictions",
            c.len(),
            f.len()
        )));
    }
    let n = c.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    let mc = c.iter().sum::<f64>() / n as f64;
    let mf = f.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in c.iter().zip(f) {
        let (dx, dy) = (x - mc, y - mf);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("constant input to pearson".into()));
    }
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if rho.abs() == 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        student_t_two_sided(t, df)
    };
    Ok(Correlation { rho, p_value })
}
