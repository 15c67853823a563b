//! A small fully connected binary classifier: rectifier hidden layers and a
//! logistic output unit, with exact gradients of the output with respect to
//! every hidden activation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rcvfit::ActivationSet;
use crate::scoring::GradientSet;
use crate::seed::rng;
use crate::tensorio::{read_tensor, write_tensor, Tensor};

/// Affine map `z = W h + b`; `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::Dimension(format!(
                "{} weight rows vs {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        Ok(Dense { weights, bias })
    }

    fn apply(&self, h: &[f64]) -> Vec<f64> {
        self.weights
            .mul_vec(h)
            .into_iter()
            .zip(&self.bias)
            .map(|(z, b)| z + b)
            .collect()
    }

    fn inputs(&self) -> usize {
        self.weights.cols()
    }

    fn outputs(&self) -> usize {
        self.weights.rows()
    }

    /// `Wᵀ g`
    fn backward(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs()];
        for (i, &gi) in g.iter().enumerate() {
            if gi == 0.0 {
                continue;
            }
            out.iter_mut()
                .zip(self.weights.row(i))
                .for_each(|(o, w)| *o += gi * w);
        }
        out
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// The network. Hidden layer `i` (1-based) is identified as `h{i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    hidden: Vec<Dense>,
    output: Dense,
    layer_ids: Vec<String>,
    rng_seed: u64,
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub f: f64,
    /// Post-rectifier activations per hidden layer.
    pub activations: Vec<Vec<f64>>,
    /// Pre-rectifier values per hidden layer.
    pub pre_activations: Vec<Vec<f64>>,
}

impl ToyNet {
    /// He-initialized network with the given hidden widths.
    pub fn new(input_dim: usize, hidden_widths: &[usize], seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_widths.contains(&0) {
            return Err(Error::InvalidArgument(
                "layer widths must be positive".into(),
            ));
        }
        let mut r = rng(seed);
        let mut layers = Vec::with_capacity(hidden_widths.len() + 1);
        let mut fan_in = input_dim;
        for &w in hidden_widths.iter().chain(std::iter::once(&1)) {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let data = (0..w * fan_in).map(|_| normal.sample(&mut r)).collect();
            layers.push(Dense::new(Matrix::new(w, fan_in, data), vec![0.0; w])?);
            fan_in = w;
        }
        let output = layers.pop().expect("output layer");
        let mut net = ToyNet::from_layers(layers, output)?;
        net.rng_seed = seed;
        Ok(net)
    }

    /// Assembles a network from explicit layers; `output` must have one unit.
    pub fn from_layers(hidden: Vec<Dense>, output: Dense) -> Result<Self> {
        if output.outputs() != 1 {
            return Err(Error::Dimension("output layer must have one unit".into()));
        }
        let mut prev = None;
        for layer in hidden.iter().chain(std::iter::once(&output)) {
            if let Some(p) = prev {
                if layer.inputs() != p {
                    return Err(Error::Dimension(format!(
                        "layer expects {} inputs, previous layer has {p} outputs",
                        layer.inputs()
                    )));
                }
            }
            prev = Some(layer.outputs());
        }
        let layer_ids = (1..=hidden.len()).map(|i| format!("h{i}")).collect();
        Ok(ToyNet {
            hidden,
            output,
            layer_ids,
            rng_seed: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.first().unwrap_or(&self.output).inputs()
    }

    pub fn layer_ids(&self) -> &[String] {
        &self.layer_ids
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn hidden(&self) -> &[Dense] {
        &self.hidden
    }

    pub fn output(&self) -> &Dense {
        &self.output
    }

    pub fn layer_index(&self, layer_id: &str) -> Result<usize> {
        self.layer_ids
            .iter()
            .position(|l| l == layer_id)
            .ok_or_else(|| Error::UnknownLayer(layer_id.to_string()))
    }

    pub fn layer_width(&self, layer_id: &str) -> Result<usize> {
        Ok(self.hidden[self.layer_index(layer_id)?].outputs())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.hidden.len());
        let mut pre_activations = Vec::with_capacity(self.hidden.len());
        let mut h = x.to_vec();
        for layer in &self.hidden {
            let z = layer.apply(&h);
            h = z.iter().map(|&v| relu(v)).collect();
            pre_activations.push(z);
            activations.push(h.clone());
        }
        let f = logistic(self.output.apply(&h)[0]);
        Ok(Forward {
            f,
            activations,
            pre_activations,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.f)
    }

    /// `∂f/∂h` for every hidden layer, deepest last.
    fn layer_grads(&self, fwd: &Forward) -> Vec<Vec<f64>> {
        let n = self.hidden.len();
        let mut grads = vec![Vec::new(); n];
        if n == 0 {
            return grads;
        }
        let dlogit = fwd.f * (1.0 - fwd.f);
        let mut g: Vec<f64> = self
            .output
            .weights
            .row(0)
            .iter()
            .map(|w| dlogit * w)
            .collect();
        for l in (0..n).rev() {
            grads[l] = g.clone();
            if l == 0 {
                break;
            }
            let masked: Vec<f64> = g
                .iter()
                .zip(&fwd.pre_activations[l])
                .map(|(gi, z)| if *z > 0.0 { *gi } else { 0.0 })
                .collect();
            g = self.hidden[l].backward(&masked);
        }
        grads
    }

    /// Exact gradient of `f(x)` with respect to the activation of `layer_id`.
    pub fn grad_wrt_layer(&self, x: &[f64], layer_id: &str) -> Result<Vec<f64>> {
        let l = self.layer_index(layer_id)?;
        let fwd = self.forward(x)?;
        Ok(self.layer_grads(&fwd).swap_remove(l))
    }

    /// `f` evaluated with the activation of `layer_id` replaced by `h`.
    pub fn forward_from_layer(&self, h: &[f64], layer_id: &str) -> Result<f64> {
        let l = self.layer_index(layer_id)?;
        if h.len() != self.hidden[l].outputs() {
            return Err(Error::Dimension("activation width mismatch".into()));
        }
        let mut h = h.to_vec();
        for layer in &self.hidden[l + 1..] {
            h = layer.apply(&h).into_iter().map(relu).collect();
        }
        Ok(logistic(self.output.apply(&h)[0]))
    }

    /// Activations and output gradients of every row of `inputs` at `layer_id`.
    pub fn dump_layer(
        &self,
        inputs: &Matrix,
        sample_ids: &[String],
        layer_id: &str,
    ) -> Result<(ActivationSet, GradientSet)> {
        let l = self.layer_index(layer_id)?;
        let width = self.hidden[l].outputs();
        let mut acts = Vec::with_capacity(inputs.rows() * width);
        let mut grads = Vec::with_capacity(inputs.rows() * width);
        for i in 0..inputs.rows() {
            let fwd = self.forward(inputs.row(i))?;
            acts.extend_from_slice(&fwd.activations[l]);
            grads.extend(self.layer_grads(&fwd).swap_remove(l));
        }
        Ok((
            ActivationSet::new(
                layer_id,
                sample_ids.to_vec(),
                Matrix::new(inputs.rows(), width, acts),
            )?,
            GradientSet::new(
                layer_id,
                sample_ids.to_vec(),
                Matrix::new(inputs.rows(), width, grads),
            )?,
        ))
    }

    pub fn predict_all(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        (0..inputs.rows())
            .map(|i| self.predict(inputs.row(i)))
            .collect()
    }

    fn all_layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain(std::iter::once(&self.output))
    }

    fn all_layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.output))
    }

    /// Mean binary cross-entropy over a dataset.
    pub fn loss(&self, inputs: &Matrix, labels: &[f64]) -> Result<f64> {
        if inputs.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            total += bce(self.predict(inputs.row(i))?, y);
        }
        Ok(total / inputs.rows() as f64)
    }

    /// Adds `scale · ∂loss/∂θ` of one sample into `acc` (layout of `params`).
    fn accumulate_param_grads(
        &self,
        x: &[f64],
        y: f64,
        scale: f64,
        acc: &mut [Dense],
    ) -> Result<()> {
        let fwd = self.forward(x)?;
        // d bce / d logit = f − y
        let mut delta = vec![scale * (fwd.f - y)];
        let n = self.hidden.len();
        for l in (0..=n).rev() {
            let input: &[f64] = if l == 0 { x } else { &fwd.activations[l - 1] };
            let layer = if l == n {
                &self.output
            } else {
                &self.hidden[l]
            };
            let a = &mut acc[l];
            for (i, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                a.bias[i] += d;
                a.weights
                    .row_mut(i)
                    .iter_mut()
                    .zip(input)
                    .for_each(|(w, h)| *w += d * h);
            }
            if l == 0 {
                break;
            }
            let back = layer.backward(&delta);
            delta = back
                .iter()
                .zip(&fwd.pre_activations[l - 1])
                .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
                .collect();
        }
        Ok(())
    }

    fn zeros_like(&self) -> Vec<Dense> {
        self.all_layers()
            .map(|d| Dense {
                weights: Matrix::zeros(d.outputs(), d.inputs()),
                bias: vec![0.0; d.outputs()],
            })
            .collect()
    }

    /// Mini-batch SGD with Nesterov momentum on the mean binary cross-entropy.
    /// `seed` drives the per-epoch shuffling.
    pub fn train(
        &mut self,
        inputs: &Matrix,
        labels: &[f64],
        opts: &TrainOptions,
        seed: u64,
    ) -> Result<TrainReport> {
        if inputs.rows() == 0 || inputs.rows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} training rows with {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if opts.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        let mut velocity = self.zeros_like();
        let mut order: Vec<usize> = (0..inputs.rows()).collect();
        let mut r = rng(seed);
        let mut losses = vec![self.loss(inputs, labels)?];

        for epoch in 0..opts.epochs {
            order.shuffle(&mut r);
            for batch in order.chunks(opts.batch_size) {
                let mut grad = self.zeros_like();
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    self.accumulate_param_grads(inputs.row(i), labels[i], scale, &mut grad)?;
                }
                // v ← μv + g ;  θ ← θ − lr (g + μv)
                for ((layer, vel), g) in self.all_layers_mut().zip(velocity.iter_mut()).zip(&grad) {
                    let pairs = layer
                        .weights
                        .data_mut()
                        .iter_mut()
                        .zip(vel.weights.data_mut().iter_mut())
                        .zip(g.weights.data())
                        .chain(layer.bias.iter_mut().zip(vel.bias.iter_mut()).zip(&g.bias));
                    for ((p, v), gi) in pairs {
                        *v = opts.momentum * *v + gi;
                        *p -= opts.lr * (gi + opts.momentum * *v);
                    }
                }
            }
            let loss = self.loss(inputs, labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            losses.push(loss);
        }
        Ok(TrainReport { losses })
    }

    /// Writes parameters as `<dir>/<layer>.weight.npy` and `<dir>/<layer>.bias.npy`
    /// (`out` for the output unit).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let names = self
            .layer_ids
            .iter()
            .map(String::as_str)
            .chain(std::iter::once("out"));
        for (name, layer) in names.zip(self.all_layers()) {
            let w = Tensor::new(
                vec![layer.outputs(), layer.inputs()],
                layer.weights.data().to_vec(),
            )?;
            write_tensor(&w, dir.join(format!("{name}.weight.npy")))?;
            let b = Tensor::new(vec![layer.outputs()], layer.bias.clone())?;
            write_tensor(&b, dir.join(format!("{name}.bias.npy")))?;
        }
        Ok(())
    }

    /// Loads a network with `n_hidden` hidden layers saved by [`ToyNet::save`].
    pub fn load(dir: impl AsRef<Path>, n_hidden: usize) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<Dense> {
            let w = read_tensor(dir.join(format!("{name}.weight.npy")))?;
            let b = read_tensor(dir.join(format!("{name}.bias.npy")))?;
            if w.shape().len() != 2 {
                return Err(Error::Dimension(format!("{name}.weight must be 2-D")));
            }
            Dense::new(
                Matrix::new(w.shape()[0], w.shape()[1], w.into_data()),
                b.into_data(),
            )
        };
        let hidden = (1..=n_hidden)
            .map(|i| read(&format!("h{i}")))
            .collect::<Result<Vec<_>>>()?;
        ToyNet::from_layers(hidden, read("out")?)
    }
}

fn bce(f: f64, y: f64) -> f64 {
    let f = f.clamp(1e-15, 1.0 - 1e-15);
    -(y * f.ln() + (1.0 - y) * (1.0 - f).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 32,
        }
    }
}

/// Mean training loss before training and after each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}
