//! Trainable pieces: an MLP backbone producing penultimate features, a bias-free
//! linear classifier over those features, and the auxiliary radius head.
//!
//! Backward passes are written by hand. Every one of them is checked against
//! [`crate::numeric::finite_diff_grad`] in the tests below and in the
//! crate-level gradient suite.

use crate::error::{Error, Result};
use crate::numeric::{Matrix, SeededRng};

/// One affine layer, `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weight: Matrix::zeros(out, inp),
            bias: vec![0.0; out],
        }
    }

    /// Weights ~ N(0, 1/fan_in), zero bias.
    pub fn init(inp: usize, out: usize, rng: &mut SeededRng) -> Self {
        let scale = 1.0 / (inp as f64).sqrt();
        let mut layer = Self::zeros(inp, out);
        for w in layer.weight.as_mut_slice() {
            *w = rng.normal() * scale;
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_t(&self.weight);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }

    /// Returns (parameter gradient, input gradient) for upstream gradient `dy`.
    fn backward(&self, x: &Matrix, dy: &Matrix) -> (Dense, Matrix) {
        let weight = dy.t_matmul(x);
        let mut bias = vec![0.0; self.out_dim()];
        for r in dy.iter_rows() {
            for (b, g) in bias.iter_mut().zip(r) {
                *b += g;
            }
        }
        (Dense { weight, bias }, dy.matmul(&self.weight))
    }
}

/// Feed-forward network `R^d → R^m`, tanh between layers and linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub layers: Vec<Dense>,
}

/// Activations retained by [`Backbone::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct TapeCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
}

impl Backbone {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("backbone needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dims("Backbone::new", pair[0].out_dim(), pair[1].in_dim()));
            }
        }
        Ok(Self { layers })
    }

    /// `widths = [d, h_1, ..., m]`.
    pub fn init(widths: &[usize], rng: &mut SeededRng) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig("backbone needs input and output widths".into()));
        }
        Self::new(widths.windows(2).map(|w| Dense::init(w[0], w[1], rng)).collect())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::out_dim)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, TapeCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::dims("backbone_forward", self.input_dim(), x.cols()));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&cur);
            let next = if l == last { z.clone() } else { z.map(f64::tanh) };
            inputs.push(cur);
            pre.push(z);
            cur = next;
        }
        Ok((cur, TapeCache { inputs, pre }))
    }

    /// Features only.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x).map(|(h, _)| h)
    }

    /// Backpropagates `dh` (gradient w.r.t. the features). Returns per-layer
    /// parameter gradients and the gradient w.r.t. the input batch.
    pub fn backward(&self, cache: &TapeCache, dh: &Matrix) -> (Backbone, Matrix) {
        assert_eq!(cache.pre.len(), self.layers.len(), "cache/layer count");
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = dh.clone();
        for l in (0..self.layers.len()).rev() {
            if l != last {
                // d tanh(z) = 1 - tanh(z)^2; the activation equals the next layer's input.
                let act = &cache.inputs[l + 1];
                for (g, a) in upstream.as_mut_slice().iter_mut().zip(act.as_slice()) {
                    *g *= 1.0 - a * a;
                }
            }
            let (g, dx) = self.layers[l].backward(&cache.inputs[l], &upstream);
            grads.push(g);
            upstream = dx;
        }
        grads.reverse();
        (Backbone { layers: grads }, upstream)
    }
}

/// Linear classifier `z = W h` with `W` of shape `C × m` and no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub weight: Matrix,
}

impl Classifier {
    pub fn new(weight: Matrix) -> Result<Self> {
        if weight.rows() < 2 {
            return Err(Error::InvalidConfig(format!(
                "classifier needs at least 2 classes, got {}",
                weight.rows()
            )));
        }
        Ok(Self { weight })
    }

    pub fn init(feature_dim: usize, classes: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(Dense::init(feature_dim, classes, rng).weight)
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, h: &Matrix) -> Result<Matrix> {
        if h.cols() != self.weight.cols() {
            return Err(Error::dims("classifier_forward", self.weight.cols(), h.cols()));
        }
        Ok(h.matmul_t(&self.weight))
    }

    /// Returns (dW, dh).
    pub fn backward(&self, h: &Matrix, dz: &Matrix) -> (Matrix, Matrix) {
        (dz.t_matmul(h), dz.matmul(&self.weight))
    }
}

/// Single affine map from unit-normalized pseudo-OOD features to `K` shell logits.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusHead {
    pub layer: Dense,
}

impl RadiusHead {
    pub fn init(feature_dim: usize, k: usize, rng: &mut SeededRng) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        Ok(Self {
            layer: Dense::init(feature_dim, k, rng),
        })
    }

    pub fn zeros(feature_dim: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidK(k));
        }
        Ok(Self {
            layer: Dense::zeros(feature_dim, k),
        })
    }

    pub fn shells(&self) -> usize {
        self.layer.out_dim()
    }

    pub fn forward(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.layer.in_dim() {
            return Err(Error::dims("radius_head_forward", self.layer.in_dim(), features.cols()));
        }
        Ok(self.layer.forward(features))
    }

    /// Returns (parameter gradient, gradient w.r.t. the input features).
    pub fn backward(&self, features: &Matrix, dlogits: &Matrix) -> (RadiusHead, Matrix) {
        let (g, dx) = self.layer.backward(features, dlogits);
        (RadiusHead { layer: g }, dx)
    }
}

/// Optimizer group a parameter tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    /// Backbone and classifier.
    Main,
    /// Radius head.
    Head,
}

/// Everything trainable. The same type doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub backbone: Backbone,
    pub classifier: Classifier,
    pub head: RadiusHead,
}

impl ModelState {
    pub fn init(widths: &[usize], classes: usize, k: usize, rng: &mut SeededRng) -> Result<Self> {
        let backbone = Backbone::init(widths, rng)?;
        let m = backbone.feature_dim();
        let classifier = Classifier::init(m, classes, rng)?;
        let head = RadiusHead::init(m, k, rng)?;
        Ok(Self {
            backbone,
            classifier,
            head,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let zero = |d: &Dense| Dense::zeros(d.in_dim(), d.out_dim());
        Self {
            backbone: Backbone {
                layers: self.backbone.layers.iter().map(zero).collect(),
            },
            classifier: Classifier {
                weight: Matrix::zeros(self.classifier.weight.rows(), self.classifier.weight.cols()),
            },
            head: RadiusHead {
                layer: zero(&self.head.layer),
            },
        }
    }

    /// Parameter tensors in declaration order: backbone layers (weight, bias),
    /// classifier weight, head weight, head bias.
    pub fn tensors(&self) -> Vec<(ParamGroup, &[f64])> {
        let mut out = Vec::new();
        for l in &self.backbone.layers {
            out.push((ParamGroup::Main, l.weight.as_slice()));
            out.push((ParamGroup::Main, l.bias.as_slice()));
        }
        out.push((ParamGroup::Main, self.classifier.weight.as_slice()));
        out.push((ParamGroup::Head, self.head.layer.weight.as_slice()));
        out.push((ParamGroup::Head, self.head.layer.bias.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out = Vec::new();
        for l in &mut self.backbone.layers {
            out.push((ParamGroup::Main, l.weight.as_mut_slice()));
            out.push((ParamGroup::Main, l.bias.as_mut_slice()));
        }
        out.push((ParamGroup::Main, self.classifier.weight.as_mut_slice()));
        out.push((ParamGroup::Head, self.head.layer.weight.as_mut_slice()));
        out.push((ParamGroup::Head, self.head.layer.bias.as_mut_slice()));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|(_, t)| t.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::dims("ModelState::set_flat", n, flat.len()));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Euclidean norm over every tensor.
    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Rescales so that the global norm is at most `max_norm`. Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}

/// Hyperparameters of one optimizer group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdGroup {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Momentum SGD on one tensor: `v ← m·v + (g + wd·p)`, `p ← p − lr·v`.
pub fn sgd_update(params: &mut [f64], grads: &[f64], velocity: &mut [f64], group: SgdGroup) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::dims("sgd_update grads", params.len(), grads.len()));
    }
    if velocity.len() != params.len() {
        return Err(Error::dims("sgd_update velocity", params.len(), velocity.len()));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let g = g + group.weight_decay * *p;
        *v = group.momentum * *v + g;
        *p -= group.lr * *v;
    }
    Ok(())
}

/// Two-group momentum SGD over a [`ModelState`].
#[derive(Debug, Clone)]
pub struct Sgd {
    pub main: SgdGroup,
    pub head: SgdGroup,
    velocity: ModelState,
}

impl Sgd {
    pub fn new(model: &ModelState, main: SgdGroup, head: SgdGroup) -> Self {
        Self {
            main,
            head,
            velocity: model.zeros_like(),
        }
    }

    pub fn step(&mut self, model: &mut ModelState, grads: &ModelState) -> Result<()> {
        let grad_tensors = grads.tensors();
        let params = model.tensors_mut();
        if params.len() != grad_tensors.len() {
            return Err(Error::dims("Sgd::step tensors", params.len(), grad_tensors.len()));
        }
        let velocity = self.velocity.tensors_mut();
        for (((group, p), (_, g)), (_, v)) in params.into_iter().zip(grad_tensors).zip(velocity) {
            let hp = match group {
                ParamGroup::Main => self.main,
                ParamGroup::Head => self.head,
            };
            sgd_update(p, g, v, hp)?;
        }
        Ok(())
    }
}
