//! Multilayer perceptron with explicit forward and backward passes.
//!
//! All parameters live in one flat vector so optimizers, penalties and
//! checkpoints can treat the network as a single parameter block. Layout:
//! backbone layers in order, then the classification head, then the optional
//! projection head; every layer stores its `out x in` weight matrix row-major
//! followed by its `out` biases.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn gain(self) -> f64 {
        match self {
            Activation::Relu => 2.0,
            Activation::Tanh => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Architecture of an [`MlpNetwork`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    /// `[input, hidden_1, ..., feature]`; every transition is a linear layer
    /// followed by the activation.
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub n_outputs: usize,
    pub projection_dim: Option<usize>,
}

impl NetSpec {
    pub fn new(layer_dims: Vec<usize>, n_outputs: usize) -> Self {
        NetSpec {
            layer_dims,
            activation: Activation::Relu,
            n_outputs,
            projection_dim: None,
        }
    }

    pub fn with_projection(mut self, dim: usize) -> Self {
        self.projection_dim = Some(dim);
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn feature_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }

    fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 || self.layer_dims.contains(&0) {
            return Err(Error::config(
                "network needs an input and at least one non-empty hidden layer",
            ));
        }
        if self.n_outputs == 0 || self.projection_dim == Some(0) {
            return Err(Error::config("network heads must have at least one output"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Layer {
    fn weights(self) -> Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    fn biases(self) -> Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }

    fn span(self) -> Range<usize> {
        self.offset..self.offset + (self.inputs + 1) * self.outputs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpNetwork {
    spec: NetSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `activations[0]` is the input, `activations[l + 1]` the output of
    /// backbone layer `l`; the last entry holds the features.
    activations: Vec<Matrix>,
    pub logits: Matrix,
    pub projection: Option<Matrix>,
}

impl Forward {
    /// Penultimate activations (input of the heads).
    pub fn features(&self) -> &Matrix {
        self.activations.last().expect("at least the input")
    }

    pub fn into_parts(self) -> (Matrix, Matrix, Option<Matrix>) {
        let Forward {
            mut activations,
            logits,
            projection,
        } = self;
        (activations.pop().expect("non-empty"), logits, projection)
    }
}

fn linear(x: &Matrix, params: &[f64], layer: Layer) -> Matrix {
    let w = &params[layer.weights()];
    let b = &params[layer.biases()];
    let mut out = Matrix::zeros(x.rows(), layer.outputs);
    for (i, row) in x.iter_rows().enumerate() {
        let y = out.row_mut(i);
        for (o, y_o) in y.iter_mut().enumerate() {
            *y_o = dot(&w[o * layer.inputs..(o + 1) * layer.inputs], row) + b[o];
        }
    }
    out
}

/// Accumulates weight/bias gradients of a linear layer into `grad` and
/// returns the gradient with respect to its input when `want_input` is set.
fn linear_backward(
    x: &Matrix,
    grad_out: &Matrix,
    params: &[f64],
    layer: Layer,
    grad: &mut [f64],
    want_input: bool,
) -> Option<Matrix> {
    let (w_range, b_range) = (layer.weights(), layer.biases());
    {
        let (gw, gb) = grad[w_range.start..b_range.end].split_at_mut(w_range.len());
        for (i, x_row) in x.iter_rows().enumerate() {
            for (o, &g) in grad_out.row(i).iter().enumerate() {
                if g != 0.0 {
                    axpy(g, x_row, &mut gw[o * layer.inputs..(o + 1) * layer.inputs]);
                    gb[o] += g;
                }
            }
        }
    }
    want_input.then(|| {
        let w = &params[w_range];
        let mut gx = Matrix::zeros(x.rows(), layer.inputs);
        for i in 0..x.rows() {
            let gx_row = gx.row_mut(i);
            for (o, &g) in grad_out.row(i).iter().enumerate() {
                if g != 0.0 {
                    axpy(g, &w[o * layer.inputs..(o + 1) * layer.inputs], gx_row);
                }
            }
        }
        gx
    })
}

impl MlpNetwork {
    /// A network with every parameter set to zero.
    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |inputs: usize, outputs: usize| {
            layers.push(Layer {
                inputs,
                outputs,
                offset,
            });
            offset += (inputs + 1) * outputs;
        };
        for pair in spec.layer_dims.windows(2) {
            push(pair[0], pair[1]);
        }
        let feature = spec.feature_dim();
        push(feature, spec.n_outputs);
        if let Some(p) = spec.projection_dim {
            push(feature, p);
        }
        Ok(MlpNetwork {
            spec,
            layers,
            params: vec![0.0; offset],
        })
    }

    /// Weights drawn uniformly with variance `gain / fan_in`; biases zero.
    pub fn init<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let n_backbone = net.n_backbone_layers();
        for (l, layer) in net.layers.clone().into_iter().enumerate() {
            let gain = if l < n_backbone {
                net.spec.activation.gain()
            } else {
                1.0
            };
            let bound = (3.0 * gain / layer.inputs as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for w in &mut net.params[layer.weights()] {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from a spec and a flat parameter vector.
    pub fn from_params(spec: NetSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        if params.len() != net.params.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn n_backbone_layers(&self) -> usize {
        self.spec.layer_dims.len() - 1
    }

    fn head_layer(&self) -> Layer {
        self.layers[self.n_backbone_layers()]
    }

    fn projection_layer(&self) -> Option<Layer> {
        self.spec
            .projection_dim
            .map(|_| self.layers[self.n_backbone_layers() + 1])
    }

    pub fn backbone_range(&self) -> Range<usize> {
        0..self.head_layer().offset
    }

    pub fn head_range(&self) -> Range<usize> {
        self.head_layer().span()
    }

    pub fn projection_range(&self) -> Option<Range<usize>> {
        self.projection_layer().map(Layer::span)
    }

    /// Backbone forward pass only.
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for &layer in &self.layers[..self.n_backbone_layers()] {
            h = linear(&h, &self.params, layer);
            let act = self.spec.activation;
            h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Ok(h)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim() {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                x.cols(),
                self.spec.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Forward> {
        self.check_input(x)?;
        let act = self.spec.activation;
        let mut activations = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        for &layer in &self.layers[..self.n_backbone_layers()] {
            let mut h = linear(activations.last().expect("non-empty"), &self.params, layer);
            h.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            activations.push(h);
        }
        let features = activations.last().expect("non-empty");
        let logits = linear(features, &self.params, self.head_layer());
        let projection = self
            .projection_layer()
            .map(|layer| linear(features, &self.params, layer));
        Ok(Forward {
            activations,
            logits,
            projection,
        })
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.logits)
    }

    /// Gradient of a loss with respect to every parameter, given the loss
    /// gradient at the heads and optionally directly at the features.
    pub fn backward(
        &self,
        fwd: &Forward,
        grad_logits: Option<&Matrix>,
        grad_projection: Option<&Matrix>,
        grad_features: Option<&Matrix>,
    ) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        let features = fwd.features();
        let mut g_feat = match grad_features {
            Some(g) if g.shape() == features.shape() => g.clone(),
            Some(_) => return Err(Error::shape("feature gradient has the wrong shape")),
            None => Matrix::zeros(features.rows(), features.cols()),
        };
        if let Some(g) = grad_logits {
            if g.shape() != fwd.logits.shape() {
                return Err(Error::shape("logit gradient has the wrong shape"));
            }
            let gx = linear_backward(features, g, &self.params, self.head_layer(), &mut grad, true)
                .expect("requested");
            axpy(1.0, gx.as_slice(), g_feat.as_mut_slice());
        }
        if let Some(g) = grad_projection {
            let layer = self
                .projection_layer()
                .ok_or_else(|| Error::shape("network has no projection head"))?;
            if g.shape() != (features.rows(), layer.outputs) {
                return Err(Error::shape("projection gradient has the wrong shape"));
            }
            let gx = linear_backward(features, g, &self.params, layer, &mut grad, true)
                .expect("requested");
            axpy(1.0, gx.as_slice(), g_feat.as_mut_slice());
        }
        let act = self.spec.activation;
        let mut g = g_feat;
        for l in (0..self.n_backbone_layers()).rev() {
            let out = &fwd.activations[l + 1];
            g.as_mut_slice()
                .iter_mut()
                .zip(out.as_slice())
                .for_each(|(g, &y)| *g *= act.derivative_from_output(y));
            let gx = linear_backward(&fwd.activations[l], &g, &self.params, self.layers[l], &mut grad, l > 0);
            match gx {
                Some(gx) => g = gx,
                None => break,
            }
        }
        Ok(grad)
    }

    /// Returns a copy whose classification head has `n_outputs` rows; the
    /// first `min(old, new)` rows are kept and new rows start at zero.
    pub fn with_head_outputs(&self, n_outputs: usize) -> Result<Self> {
        let mut spec = self.spec.clone();
        spec.n_outputs = n_outputs;
        let mut grown = MlpNetwork::zeros(spec)?;
        grown.params[self.backbone_range()].copy_from_slice(&self.params[self.backbone_range()]);
        let (old, new) = (self.head_layer(), grown.head_layer());
        let keep = old.outputs.min(new.outputs);
        let width = old.inputs;
        grown.params[new.offset..new.offset + keep * width]
            .copy_from_slice(&self.params[old.offset..old.offset + keep * width]);
        let (ob, nb) = (old.biases().start, new.biases().start);
        grown.params[nb..nb + keep].copy_from_slice(&self.params[ob..ob + keep]);
        if let (Some(op), Some(np)) = (self.projection_range(), grown.projection_range()) {
            grown.params[np].copy_from_slice(&self.params[op]);
        }
        Ok(grown)
    }

    /// The backbone alone, with a single-output dummy head and no projection.
    pub fn strip_heads(&self) -> Result<Self> {
        let spec = NetSpec {
            n_outputs: 1,
            projection_dim: None,
            ..self.spec.clone()
        };
        let mut stripped = MlpNetwork::zeros(spec)?;
        let range = self.backbone_range();
        stripped.params[range.clone()].copy_from_slice(&self.params[range]);
        Ok(stripped)
    }
}
