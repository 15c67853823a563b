//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rcv_core::linalg::Matrix;
use rcv_core::rcvfit::ActivationSet;
use rcv_core::scoring::GradientSet;
use rcv_core::tensorio::{ConceptMeasures, Grid};
use rcv_core::toynet::{logistic, Dense, ToyNet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn acts(rows: &[Vec<f64>]) -> ActivationSet {
    ActivationSet::from_rows("layer", ids("c", rows.len()), rows).unwrap()
}

pub fn grads(rows: &[Vec<f64>]) -> GradientSet {
    GradientSet::from_rows("layer", ids("t", rows.len()), rows).unwrap()
}

pub fn measures(name: &str, values: &[f64]) -> ConceptMeasures {
    ConceptMeasures::new(name, ids("c", values.len()), values.to_vec())
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Minimal-norm solution `pinv(X) y` from the normal equations: a symmetric
/// eigendecomposition of the smaller Gram matrix (`X Xᵀ` or `Xᵀ X`), keeping
/// eigenvalues above `gap² · λ_max`.
///
/// Returns the solution, the retained rank and the ratio of the smallest
/// retained to the largest discarded singular value.
pub fn pinv_solve(x: &[Vec<f64>], y: &[f64], gap: f64) -> (Vec<f64>, usize, f64) {
    let (k, d) = (x.len(), x[0].len());
    let m = DMatrix::from_fn(k, d, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let wide = k <= d;
    let gram = if wide {
        &m * m.transpose()
    } else {
        m.transpose() * &m
    };
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.max().max(0.0);
    let cut = gap * gap * lmax;
    let mut inv = DMatrix::zeros(eig.eigenvalues.len(), eig.eigenvalues.len());
    let (mut rank, mut kept_min, mut dropped_max) = (0, f64::INFINITY, 0.0f64);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > cut {
            inv[(i, i)] = 1.0 / l;
            rank += 1;
            kept_min = kept_min.min(l);
        } else {
            dropped_max = dropped_max.max(l.max(0.0));
        }
    }
    let ginv = &eig.eigenvectors * inv * eig.eigenvectors.transpose();
    let v = if wide {
        m.transpose() * (ginv * yv)
    } else {
        ginv * (m.transpose() * yv)
    };
    let ratio = if dropped_max > 0.0 {
        (kept_min / dropped_max).sqrt()
    } else {
        f64::INFINITY
    };
    (v.iter().copied().collect(), rank, ratio)
}

/// Orthonormal basis of the null space of `X`.
pub fn null_space(x: &[Vec<f64>], rtol: f64) -> Vec<Vec<f64>> {
    let (k, d) = (x.len(), x[0].len());
    let m = DMatrix::from_fn(k, d, |i, j| x[i][j]);
    // Pad to at least d rows so the thin SVD returns all d right singular vectors.
    let padded = if k < d {
        let mut p = DMatrix::zeros(d, d);
        p.view_mut((0, 0), (k, d)).copy_from(&m);
        p
    } else {
        m
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.max();
    (0..d)
        .filter(|&i| svd.singular_values[i] <= rtol * smax)
        .map(|i| vt.row(i).iter().copied().collect())
        .collect()
}

/// Random `k × d` matrix of rank at most `r`.
pub fn low_rank(rng: &mut ChaCha8Rng, k: usize, d: usize, r: usize) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..r).map(|_| normal(rng)).collect())
        .collect();
    let c: Vec<Vec<f64>> = (0..r)
        .map(|_| (0..d).map(|_| normal(rng)).collect())
        .collect();
    (0..k)
        .map(|i| {
            (0..d)
                .map(|j| (0..r).map(|t| b[i][t] * c[t][j]).sum())
                .collect()
        })
        .collect()
}

pub fn center_columns(x: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = x.len() as f64;
    let d = x[0].len();
    let means: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / k)
        .collect();
    let centered = x
        .iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect();
    (centered, means)
}

/// GLCM counts by listing every ordered pixel pair explicitly.
pub fn brute_glcm(
    image: &Grid<u32>,
    mask: &Grid<bool>,
    levels: usize,
    offset: (isize, isize),
    symmetric: bool,
) -> Vec<u64> {
    let mut pixels = Vec::new();
    for r in 0..image.height() as isize {
        for c in 0..image.width() as isize {
            if mask.get(r as usize, c as usize) {
                pixels.push((r, c));
            }
        }
    }
    let mut counts = vec![0u64; levels * levels];
    for &(r1, c1) in &pixels {
        for &(r2, c2) in &pixels {
            if (r2 - r1, c2 - c1) == offset {
                let i = image.get(r1 as usize, c1 as usize) as usize;
                let j = image.get(r2 as usize, c2 as usize) as usize;
                counts[i * levels + j] += 1;
                if symmetric {
                    counts[j * levels + i] += 1;
                }
            }
        }
    }
    counts
}

/// ASM, contrast and correlation from pair lists rather than from the matrix:
/// every pair contributes its own `(i, j)`.
pub fn brute_haralick(counts: &[u64], levels: usize) -> (f64, f64, Option<f64>) {
    let total: u64 = counts.iter().sum();
    let mut pairs = Vec::new();
    for i in 0..levels {
        for j in 0..levels {
            for _ in 0..counts[i * levels + j] {
                pairs.push((i as f64, j as f64));
            }
        }
    }
    let n = total as f64;
    let asm = counts.iter().map(|&c| (c as f64 / n).powi(2)).sum();
    let contrast = pairs.iter().map(|(i, j)| (i - j).powi(2)).sum::<f64>() / n;
    let mi = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mj = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let vi = pairs.iter().map(|p| (p.0 - mi).powi(2)).sum::<f64>() / n;
    let vj = pairs.iter().map(|p| (p.1 - mj).powi(2)).sum::<f64>() / n;
    let distinct = |f: fn(&(f64, f64)) -> f64| {
        let first = f(&pairs[0]);
        pairs.iter().any(|p| f(p) != first)
    };
    let corr = if distinct(|p| p.0) && distinct(|p| p.1) {
        let cov = pairs.iter().map(|p| (p.0 - mi) * (p.1 - mj)).sum::<f64>() / n;
        Some(cov / (vi * vj).sqrt())
    } else {
        None
    };
    (asm, contrast, corr)
}

/// Two-sided Student-t p-value for integer degrees of freedom by the finite
/// trigonometric series for `P(|T| ≤ t)`.
pub fn t_two_sided_series(t: f64, df: u32) -> f64 {
    let nu = df as f64;
    let theta = (t.abs() / nu.sqrt()).atan();
    let (s, c) = (theta.sin(), theta.cos());
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 3;
            while k < df {
                term *= (k - 1) as f64 / k as f64 * c * c;
                sum += term;
                k += 2;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 2;
        while k < df {
            term *= (k - 1) as f64 / k as f64 * c * c;
            sum += term;
            k += 2;
        }
        s * sum
    };
    1.0 - a
}

/// A sample of size `n` whose one-sample t statistic against `null` is `t`.
pub fn sample_with_t(n: usize, t: f64, null: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|i| i as f64 - (n - 1) as f64 / 2.0).collect();
    let sd = (e.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
    let shift = t * sd / (n as f64).sqrt();
    e.iter().map(|v| null + shift + v).collect()
}

/// Plain forward pass written out layer by layer.
pub fn forward_oracle(net: &ToyNet, x: &[f64]) -> (Vec<Vec<f64>>, f64) {
    let mut h = x.to_vec();
    let mut acts = Vec::new();
    for layer in net.hidden() {
        let w = &layer.weights;
        let mut out = Vec::with_capacity(w.rows());
        for i in 0..w.rows() {
            let mut z = layer.bias[i];
            for (j, hj) in h.iter().enumerate() {
                z += w.get(i, j) * hj;
            }
            out.push(if z > 0.0 { z } else { 0.0 });
        }
        acts.push(out.clone());
        h = out;
    }
    let o = net.output();
    let mut z = o.bias[0];
    for (j, hj) in h.iter().enumerate() {
        z += o.weights.get(0, j) * hj;
    }
    (acts, logistic(z))
}

/// Central finite-difference gradient of `f` with respect to the activation
/// of `layer_id` at input `x`.
pub fn fd_grad(net: &ToyNet, x: &[f64], layer_id: &str, step: f64) -> Vec<f64> {
    let l = net.layer_index(layer_id).unwrap();
    let h = net.forward(x).unwrap().activations[l].clone();
    (0..h.len())
        .map(|i| {
            let mut up = h.clone();
            let mut dn = h.clone();
            up[i] += step;
            dn[i] -= step;
            (net.forward_from_layer(&up, layer_id).unwrap()
                - net.forward_from_layer(&dn, layer_id).unwrap())
                / (2.0 * step)
        })
        .collect()
}

fn random_dense(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Dense {
    let scale = (2.0 / inputs as f64).sqrt();
    let w: Vec<f64> = (0..inputs * outputs).map(|_| scale * normal(rng)).collect();
    let b: Vec<f64> = (0..outputs).map(|_| 0.5 * normal(rng)).collect();
    Dense::new(Matrix::new(outputs, inputs, w), b).unwrap()
}

/// He-scaled weights with nonzero biases, so that dead layers do not leave
/// the next layer's pre-activations exactly on the ReLU kink.
pub fn random_net(rng: &mut ChaCha8Rng) -> ToyNet {
    let mut width = rng.random_range(2..=8);
    let depth = rng.random_range(1..=4);
    let mut hidden = Vec::new();
    for _ in 0..depth {
        let next = rng.random_range(2..=10);
        hidden.push(random_dense(rng, width, next));
        width = next;
    }
    let output = random_dense(rng, width, 1);
    ToyNet::from_layers(hidden, output).unwrap()
}

/// Filled ellipse with the given semi-axes, centered in a square grid.
pub fn ellipse_mask(a: f64, b: f64) -> Grid<bool> {
    let size = (2.0 * a.max(b)).ceil() as usize + 5;
    let c = (size as f64 - 1.0) / 2.0;
    Grid::from_fn(size, size, |r, col| {
        let (y, x) = (r as f64 - c, col as f64 - c);
        (x / a).powi(2) + (y / b).powi(2) <= 1.0
    })
}

pub fn mask_from(rows: &[&str]) -> Grid<bool> {
    Grid::from_fn(rows.len(), rows[0].len(), |r, c| {
        rows[r].as_bytes()[c] == b'#'
    })
}

pub fn matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::new(rows.len(), rows[0].len(), rows.concat())
}
