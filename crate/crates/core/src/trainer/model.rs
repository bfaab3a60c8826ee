//! Softmax regression and a one-hidden-layer ReLU network.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its `in × out` weight matrix (row-major) followed by its `out` biases.
//! The optimizer and the finite-difference checker both work on that vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{LogitBatch, Matrix};
use crate::rng::RngSeed;

pub const DEFAULT_HIDDEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Linear,
    Mlp1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Layer {
    fn weights_len(&self) -> usize {
        self.inputs * self.outputs
    }

    fn len(&self) -> usize {
        self.weights_len() + self.outputs
    }

    fn weights<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.offset..self.offset + self.weights_len()]
    }

    fn bias<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.offset + self.weights_len()..self.offset + self.len()]
    }

    /// `input · W + b`
    fn apply(&self, theta: &[f64], input: &Matrix) -> Matrix {
        let (w, b) = (self.weights(theta), self.bias(theta));
        let mut out = Matrix::zeros(input.rows(), self.outputs);
        for (r, x) in input.row_iter().enumerate() {
            let o = out.row_mut(r);
            o.copy_from_slice(b);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let wrow = &w[i * self.outputs..(i + 1) * self.outputs];
                for (oj, &wij) in o.iter_mut().zip(wrow) {
                    *oj += xi * wij;
                }
            }
        }
        out
    }

    /// Accumulate `dW = inputᵀ·g` and `db = Σ_rows g` into `grad`; return `g·Wᵀ` if asked.
    fn backward(
        &self,
        theta: &[f64],
        input: &Matrix,
        upstream: &Matrix,
        grad: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Matrix> {
        let nw = self.weights_len();
        let (gw, gb) = grad[self.offset..self.offset + self.len()].split_at_mut(nw);
        for (x, g) in input.row_iter().zip(upstream.row_iter()) {
            for (i, &xi) in x.iter().enumerate() {
                let gw_row = &mut gw[i * self.outputs..(i + 1) * self.outputs];
                for (a, &gj) in gw_row.iter_mut().zip(g) {
                    *a += xi * gj;
                }
            }
            for (a, &gj) in gb.iter_mut().zip(g) {
                *a += gj;
            }
        }
        if !want_input_grad {
            return None;
        }
        let w = self.weights(theta);
        let mut dx = Matrix::zeros(input.rows(), self.inputs);
        for (r, g) in upstream.row_iter().enumerate() {
            let out = dx.row_mut(r);
            for (i, o) in out.iter_mut().enumerate() {
                let wrow = &w[i * self.outputs..(i + 1) * self.outputs];
                *o = wrow.iter().zip(g).map(|(a, b)| a * b).sum();
            }
        }
        Some(dx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    architecture: Architecture,
    d: usize,
    hidden: usize,
    k: usize,
    theta: Vec<f64>,
}

/// Intermediate values kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// Hidden pre-activations (MLP1 only).
    pre_activation: Option<Matrix>,
    hidden: Option<Matrix>,
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(architecture: Architecture, d: usize, hidden: usize, k: usize) -> Result<Self> {
        if d == 0 || k < 2 || (architecture == Architecture::Mlp1 && hidden == 0) {
            return Err(Error::Parameter(format!(
                "invalid model shape d={d}, hidden={hidden}, k={k}"
            )));
        }
        let hidden = if architecture == Architecture::Linear {
            0
        } else {
            hidden
        };
        let mut p = Self {
            architecture,
            d,
            hidden,
            k,
            theta: Vec::new(),
        };
        p.theta = vec![0.0; p.layers().iter().map(Layer::len).sum()];
        Ok(p)
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(architecture: Architecture, d: usize, hidden: usize, k: usize, seed: RngSeed) -> Result<Self> {
        let mut p = Self::zeros(architecture, d, hidden, k)?;
        let mut rng = seed.rng();
        for layer in p.layers() {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut p.theta[layer.offset..layer.offset + layer.weights_len()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    fn layers(&self) -> Vec<Layer> {
        match self.architecture {
            Architecture::Linear => vec![Layer {
                inputs: self.d,
                outputs: self.k,
                offset: 0,
            }],
            Architecture::Mlp1 => {
                let first = Layer {
                    inputs: self.d,
                    outputs: self.hidden,
                    offset: 0,
                };
                vec![
                    first,
                    Layer {
                        inputs: self.hidden,
                        outputs: self.k,
                        offset: first.len(),
                    },
                ]
            }
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    /// Set the weight matrix and bias of layer `index` (0 = input layer).
    pub fn set_layer(&mut self, index: usize, weights: &Matrix, bias: &[f64]) -> Result<()> {
        let layer = *self
            .layers()
            .get(index)
            .ok_or_else(|| Error::Parameter(format!("no layer {index}")))?;
        if (weights.rows(), weights.cols()) != (layer.inputs, layer.outputs) || bias.len() != layer.outputs {
            return Err(Error::Dimension(format!(
                "layer {index} expects {}x{} weights and {} biases",
                layer.inputs, layer.outputs, layer.outputs
            )));
        }
        let (w, b) = self.theta[layer.offset..layer.offset + layer.len()].split_at_mut(layer.weights_len());
        w.copy_from_slice(weights.as_slice());
        b.copy_from_slice(bias);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    fn check_features(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.d {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {}",
                self.d,
                features.cols()
            )));
        }
        if features.rows() == 0 {
            return Err(Error::Dimension("no samples to evaluate".into()));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, features: &Matrix) -> Result<(LogitBatch, ForwardCache)> {
        self.check_features(features)?;
        let layers = self.layers();
        match self.architecture {
            Architecture::Linear => {
                let logits = LogitBatch::new(layers[0].apply(&self.theta, features))?;
                Ok((
                    logits,
                    ForwardCache {
                        pre_activation: None,
                        hidden: None,
                    },
                ))
            }
            Architecture::Mlp1 => {
                let pre = layers[0].apply(&self.theta, features);
                let hidden = pre.map(|v| v.max(0.0));
                let logits = LogitBatch::new(layers[1].apply(&self.theta, &hidden))?;
                Ok((
                    logits,
                    ForwardCache {
                        pre_activation: Some(pre),
                        hidden: Some(hidden),
                    },
                ))
            }
        }
    }

    /// Gradient of the loss w.r.t. `theta`, given `∂loss/∂logits`.
    pub(crate) fn backward(&self, features: &Matrix, cache: &ForwardCache, grad_logits: &Matrix) -> Vec<f64> {
        let layers = self.layers();
        let mut grad = vec![0.0; self.theta.len()];
        match self.architecture {
            Architecture::Linear => {
                layers[0].backward(&self.theta, features, grad_logits, &mut grad, false);
            }
            Architecture::Mlp1 => {
                let hidden = cache.hidden.as_ref().expect("MLP1 forward keeps its activations");
                let pre = cache
                    .pre_activation
                    .as_ref()
                    .expect("MLP1 forward keeps its activations");
                let mut dh = layers[1]
                    .backward(&self.theta, hidden, grad_logits, &mut grad, true)
                    .expect("input gradient was requested");
                for (g, &z) in dh.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
                layers[0].backward(&self.theta, features, &dh, &mut grad, false);
            }
        }
        grad
    }

    /// Hidden pre-activations, for kink detection in gradient checks.
    pub(crate) fn pre_activations(&self, features: &Matrix) -> Option<Matrix> {
        match self.architecture {
            Architecture::Linear => None,
            Architecture::Mlp1 => Some(self.layers()[0].apply(&self.theta, features)),
        }
    }
}

/// LINEAR: `X·W + b`. MLP1: `ReLU(X·W1 + b1)·W2 + b2`.
pub fn forward(params: &ModelParams, features: &Matrix) -> Result<LogitBatch> {
    params.forward_cached(features).map(|(logits, _)| logits)
}
