//! Fitting regression concept vectors: the minimal-norm least-squares
//! direction in activation space along which a concept measure increases.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, lstsq_min_norm, norm, Matrix, SolveInfo};
use crate::tensorio::{read_tensor, write_tensor, ConceptMeasures, Tensor};

/// Singular values at or below this fraction of the largest are treated as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Flattened activations of one layer, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    phi: Matrix,
    sample_ids: Vec<String>,
    layer_id: String,
}

impl ActivationSet {
    pub fn new(layer_id: impl Into<String>, sample_ids: Vec<String>, phi: Matrix) -> Result<Self> {
        if phi.rows() != sample_ids.len() {
            return Err(Error::Misaligned(format!(
                "{} activation rows but {} sample ids",
                phi.rows(),
                sample_ids.len()
            )));
        }
        Ok(ActivationSet {
            phi,
            sample_ids,
            layer_id: layer_id.into(),
        })
    }

    /// Wraps a tensor whose leading axis indexes samples; trailing axes are flattened.
    pub fn from_tensor(
        layer_id: impl Into<String>,
        sample_ids: Vec<String>,
        t: &Tensor,
    ) -> Result<Self> {
        if t.shape().is_empty() {
            return Err(Error::Dimension(
                "activation tensor must have a sample axis".into(),
            ));
        }
        let phi = Matrix::new(t.rows(), t.row_len(), t.data().to_vec());
        ActivationSet::new(layer_id, sample_ids, phi)
    }

    pub fn from_rows(
        layer_id: impl Into<String>,
        sample_ids: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let t = Tensor::from_rows(rows)?;
        ActivationSet::from_tensor(layer_id, sample_ids, &t)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.phi.rows(), self.phi.cols()],
            self.phi.data().to_vec(),
        )
        .expect("matrix shape is consistent")
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.phi.row(i)
    }

    pub fn len(&self) -> usize {
        self.phi.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    /// Keeps the rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ActivationSet {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.phi.row(i));
        }
        ActivationSet {
            phi: Matrix::new(indices.len(), d, data),
            sample_ids: indices
                .iter()
                .map(|&i| self.sample_ids[i].clone())
                .collect(),
            layer_id: self.layer_id.clone(),
        }
    }
}

/// Regression options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Fit an intercept by centering (otherwise `c = v·Φ` literally).
    pub intercept: bool,
    /// Scale each centered activation column to unit variance before fitting.
    pub standardize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            intercept: true,
            standardize: false,
        }
    }
}

/// A fitted regression concept vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rcv {
    #[serde(skip)]
    pub v: Vec<f64>,
    pub intercept: f64,
    pub r_squared: f64,
    pub layer_id: String,
    pub concept_name: String,
    pub k_samples: usize,
    /// Set when the target was constant (`v = 0`, `r_squared = 0`).
    pub degenerate: bool,
    pub solver: SolveInfo,
}

impl Rcv {
    pub fn predict(&self, phi_row: &[f64]) -> f64 {
        dot(&self.v, phi_row) + self.intercept
    }

    /// Writes `<stem>.npy` (direction) and `<stem>.json` (everything else).
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let with_ext = |ext: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(".");
            s.push(ext);
            PathBuf::from(s)
        };
        let t = Tensor::new(vec![self.v.len()], self.v.clone())?;
        write_tensor(&t, with_ext("npy"))?;
        let json = serde_json::to_string_pretty(self)?;
        let path = with_ext("json");
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))
    }

    /// Loads an RCV from its JSON sidecar; the direction is read from the
    /// `.npy` next to it.
    pub fn load(sidecar: impl AsRef<Path>) -> Result<Rcv> {
        let sidecar = sidecar.as_ref();
        let text = std::fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
        let mut rcv: Rcv = serde_json::from_str(&text)?;
        rcv.v = read_tensor(sidecar.with_extension("npy"))?.into_data();
        Ok(rcv)
    }
}

fn check_alignment(acts: &ActivationSet, c: &ConceptMeasures) -> Result<()> {
    if acts.len() != c.len() {
        return Err(Error::Misaligned(format!(
            "{} activation rows vs {} concept values",
            acts.len(),
            c.len()
        )));
    }
    if let Some((a, b)) = acts
        .sample_ids()
        .iter()
        .zip(&c.sample_ids)
        .find(|(a, b)| a != b)
    {
        return Err(Error::Misaligned(format!(
            "activation sample '{a}' paired with measure sample '{b}'"
        )));
    }
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Fits `c_j ≈ v·Φ(x_j) + b` by minimal-norm least squares on centered data.
pub fn fit_rcv(acts: &ActivationSet, c: &ConceptMeasures, opts: FitOptions) -> Result<Rcv> {
    check_alignment(acts, c)?;
    let (k, d) = (acts.len(), acts.dim());
    if k < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: k });
    }

    let c_mean = mean(&c.values);
    let mut rcv = Rcv {
        v: vec![0.0; d],
        intercept: c_mean,
        r_squared: 0.0,
        layer_id: acts.layer_id().to_string(),
        concept_name: c.concept_name.clone(),
        k_samples: k,
        degenerate: false,
        solver: SolveInfo::default(),
    };
    if c.values.iter().all(|&v| v == c.values[0]) {
        rcv.degenerate = true;
        if !opts.intercept {
            rcv.intercept = 0.0;
        }
        return Ok(rcv);
    }

    let col_mean: Vec<f64> = if opts.intercept {
        (0..d)
            .map(|j| (0..k).map(|i| acts.phi().get(i, j)).sum::<f64>() / k as f64)
            .collect()
    } else {
        vec![0.0; d]
    };
    let mut x = Matrix::zeros(k, d);
    for i in 0..k {
        for (j, (xe, m)) in x.row_mut(i).iter_mut().zip(&col_mean).enumerate() {
            *xe = acts.phi().get(i, j) - m;
        }
    }
    let scale: Vec<f64> = if opts.standardize {
        (0..d)
            .map(|j| {
                let ss: f64 = (0..k).map(|i| x.get(i, j).powi(2)).sum();
                let sd = (ss / (k - 1) as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect()
    } else {
        vec![1.0; d]
    };
    if opts.standardize {
        for i in 0..k {
            x.row_mut(i)
                .iter_mut()
                .zip(&scale)
                .for_each(|(xe, s)| *xe /= s);
        }
    }
    let y: Vec<f64> = if opts.intercept {
        c.values.iter().map(|v| v - c_mean).collect()
    } else {
        c.values.clone()
    };

    let (v_scaled, info) = lstsq_min_norm(&x, &y, RANK_RTOL);
    rcv.v = v_scaled.iter().zip(&scale).map(|(v, s)| v / s).collect();
    rcv.intercept = if opts.intercept {
        c_mean - dot(&rcv.v, &col_mean)
    } else {
        0.0
    };
    rcv.solver = info;
    rcv.r_squared = r_squared_on(&rcv, acts, c)?;
    Ok(rcv)
}

/// Coefficient of determination of `rcv` on `(acts, c)`; negative on
/// held-out data that the fit predicts worse than the mean.
pub fn r_squared_on(rcv: &Rcv, acts: &ActivationSet, c: &ConceptMeasures) -> Result<f64> {
    check_alignment(acts, c)?;
    if rcv.v.len() != acts.dim() {
        return Err(Error::Dimension(format!(
            "RCV has {} components, activations have {}",
            rcv.v.len(),
            acts.dim()
        )));
    }
    if c.is_empty() || c.values.iter().all(|&v| v == c.values[0]) {
        return Err(Error::Degenerate("constant concept target".into()));
    }
    let m = mean(&c.values);
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (i, &cv) in c.values.iter().enumerate() {
        ss_res += (cv - rcv.predict(acts.row(i))).powi(2);
        ss_tot += (cv - m).powi(2);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// `v / ‖v‖₂`.
pub fn unit_direction(rcv: &Rcv) -> Result<Vec<f64>> {
    let n = norm(&rcv.v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Degenerate(format!(
            "zero RCV for concept '{}' at layer '{}'",
            rcv.concept_name, rcv.layer_id
        )));
    }
    Ok(rcv.v.iter().map(|x| x / n).collect())
}
