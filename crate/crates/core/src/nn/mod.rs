//! Minimal dense neural-network engine.
//!
//! Everything the learning stack needs and nothing more: fully-connected
//! layers with a fixed activation set, exact reverse-mode gradients, Huber
//! loss, and RMSProp. All arithmetic is `f64`; the networks are small enough
//! that the precision buys us tight finite-difference tests.
//!
//! The one non-standard activation is [`Activation::SignSte`]: the layer
//! computes `sign(tanh(W·x + b))`, emitting exactly ±1, while its backward
//! pass differentiates only the `tanh` — the sign is treated as the identity
//! (the straight-through estimator). This keeps binary quantization trainable
//! with a single affine map inside the quantizer.

pub mod io;

use rand::Rng;

use crate::error::{Error, Result};

/// Hyperbolic tangent via its logistic closed form, `2/(1+e^(−2x)) − 1`.
pub fn tanh_act(x: f64) -> f64 {
    2.0 / (1.0 + (-2.0 * x).exp()) - 1.0
}

/// Rectifier, `max(0, x)`.
pub fn relu_act(x: f64) -> f64 {
    x.max(0.0)
}

/// Total sign: −1 below zero, +1 at and above zero.
pub fn sign_act(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    /// Binary quantizer: forward `sign(tanh(z))`, backward `tanh'(z)`;
    /// the sign itself backpropagates as the identity.
    SignSte,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => relu_act(z),
            Activation::Tanh => tanh_act(z),
            Activation::SignSte => sign_act(tanh_act(z)),
        }
    }

    /// Derivative with respect to the pre-activation. For `Relu` the kink at
    /// zero takes the left value 0; for `SignSte` this is the straight-through
    /// surrogate `tanh'(z)`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh | Activation::SignSte => {
                let t = tanh_act(z);
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::SignSte => "sign_ste",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "sign_ste" => Some(Activation::SignSte),
            _ => None,
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `y = self · x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(y.len(), self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            y[r] = acc;
        }
    }

    /// `y = selfᵀ · x`.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        y.fill(0.0);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let xr = x[r];
            for (acc, w) in y.iter_mut().zip(row) {
                *acc += w * xr;
            }
        }
    }
}

/// One fully-connected layer: `a = activation(weights · x + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Fan-balanced uniform initialization in `±sqrt(6/(fan_in+fan_out))`,
    /// biases zero. Weights are drawn row-major so a seeded RNG reproduces
    /// the exact same layer.
    pub fn xavier<R: Rng + ?Sized>(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (input_dim + output_dim) as f64).sqrt();
        DenseLayer {
            weights: Mat::from_fn(output_dim, input_dim, |_, _| {
                rng.random_range(-limit..=limit)
            }),
            bias: vec![0.0; output_dim],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

/// Cached intermediate values from one [`Network::forward`] pass, consumed by
/// [`Network::backward`]. `inputs[i]` and `pre_activations[i]` belong to
/// layer `i`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Per-layer inputs, exposed so tests can check how close pre-activation
    /// values sit to activation kinks.
    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Per-layer pre-activation values `z = W·x + b`.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations
    }
}

/// Gradient of one layer's parameters, shape-congruent with the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub d_weights: Mat,
    pub d_bias: Vec<f64>,
}

/// Gradients for a whole network, layer-ordered.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(network: &Network) -> Self {
        GradientSet {
            layers: network
                .layers
                .iter()
                .map(|l| LayerGradient {
                    d_weights: Mat::zeros(l.output_dim(), l.input_dim()),
                    d_bias: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    /// Elementwise accumulation; shapes must be congruent.
    pub fn add_assign(&mut self, other: &GradientSet) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.d_weights.data_mut().iter_mut().zip(b.d_weights.data()) {
                *x += y;
            }
            for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for x in layer.d_weights.data_mut() {
                *x *= factor;
            }
            for x in &mut layer.d_bias {
                *x *= factor;
            }
        }
    }
}

/// A stack of dense layers with compatible shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::ShapeMismatch {
                    context: "consecutive layer dimensions",
                    expected: w[0].output_dim(),
                    actual: w[1].input_dim(),
                });
            }
        }
        for layer in &layers {
            let finite = layer.weights.data().iter().chain(&layer.bias).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Config("layer parameters must be finite".into()));
            }
        }
        Ok(Network { layers })
    }

    /// Build from `(in, out, activation)` specs with fan-balanced init.
    pub fn xavier<R: Rng + ?Sized>(
        dims: &[(usize, usize, Activation)],
        rng: &mut R,
    ) -> Result<Self> {
        Network::new(
            dims.iter()
                .map(|&(i, o, a)| DenseLayer::xavier(i, o, a, rng))
                .collect(),
        )
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass without gradient bookkeeping.
    pub fn feedforward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut a = input.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.output_dim()];
            layer.weights.matvec(&a, &mut z);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            for zi in &mut z {
                *zi = layer.activation.apply(*zi);
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that records everything backward needs.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut a = input.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.output_dim()];
            layer.weights.matvec(&a, &mut z);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            inputs.push(a);
            a = z.iter().map(|&zi| layer.activation.apply(zi)).collect();
            pre_activations.push(z);
        }
        Ok((
            a,
            ForwardTrace {
                inputs,
                pre_activations,
            },
        ))
    }

    /// Reverse-mode gradients for a forward trace. Returns the parameter
    /// gradients and the gradient with respect to the network input (needed
    /// to chain encoder networks below the Q-network).
    pub fn backward(&self, trace: &ForwardTrace, output_gradient: &[f64]) -> (GradientSet, Vec<f64>) {
        debug_assert_eq!(trace.inputs.len(), self.layers.len());
        debug_assert_eq!(output_gradient.len(), self.output_dim());
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_gradient.to_vec();
        for (layer, (x, z)) in self
            .layers
            .iter()
            .zip(trace.inputs.iter().zip(&trace.pre_activations))
            .rev()
        {
            // dz = upstream ⊙ activation'(z)
            let dz: Vec<f64> = upstream
                .iter()
                .zip(z)
                .map(|(g, &zi)| g * layer.activation.derivative(zi))
                .collect();
            let mut d_weights = Mat::zeros(layer.output_dim(), layer.input_dim());
            for (r, &dzr) in dz.iter().enumerate() {
                for (c, &xc) in x.iter().enumerate() {
                    *d_weights.at_mut(r, c) = dzr * xc;
                }
            }
            let mut dx = vec![0.0; layer.input_dim()];
            layer.weights.matvec_transpose(&dz, &mut dx);
            grads.push(LayerGradient {
                d_weights,
                d_bias: dz,
            });
            upstream = dx;
        }
        grads.reverse();
        (GradientSet { layers: grads }, upstream)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().len() + l.bias.len())
            .sum()
    }

    /// All parameters flattened layer by layer, weights row-major then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Inverse of [`Network::flat_params`].
    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch {
                context: "flat parameter vector",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.data().len();
            layer.weights.data_mut().copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// Flatten a gradient set in the same order as [`Network::flat_params`].
    pub fn flat_gradient(&self, grads: &GradientSet) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for g in &grads.layers {
            out.extend_from_slice(g.d_weights.data());
            out.extend_from_slice(&g.d_bias);
        }
        out
    }
}

/// Huber loss of a scalar prediction against a target: `½e²` inside `|e| ≤ δ`,
/// `δ(|e| − δ/2)` outside. Returns `(loss, dloss/dprediction)`; the gradient
/// saturates at ±δ.
pub fn huber(prediction: f64, target: f64, delta: f64) -> (f64, f64) {
    debug_assert!(delta > 0.0);
    let e = prediction - target;
    if e.abs() <= delta {
        (0.5 * e * e, e)
    } else {
        (delta * (e.abs() - 0.5 * delta), delta * e.signum())
    }
}

/// RMSProp state for one network: a running mean square per parameter.
///
/// Update rule: `acc ← ρ·acc + (1−ρ)·g²`, `param ← param − lr·g/√(acc+ε)`.
#[derive(Debug, Clone)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    acc: Vec<Vec<f64>>,
}

impl RmsProp {
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-7;

    pub fn new(network: &Network, learning_rate: f64) -> Self {
        RmsProp::with_hyperparams(
            network,
            learning_rate,
            Self::DEFAULT_DECAY,
            Self::DEFAULT_EPSILON,
        )
    }

    pub fn with_hyperparams(
        network: &Network,
        learning_rate: f64,
        decay: f64,
        epsilon: f64,
    ) -> Self {
        RmsProp {
            learning_rate,
            decay,
            epsilon,
            acc: network
                .layers()
                .iter()
                .map(|l| vec![0.0; l.weights.data().len() + l.bias.len()])
                .collect(),
        }
    }

    /// Apply one descent step in place.
    pub fn step(&mut self, network: &mut Network, grads: &GradientSet) {
        debug_assert_eq!(self.acc.len(), grads.layers.len());
        for ((layer, grad), acc) in network
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.acc)
        {
            let (w_acc, b_acc) = acc.split_at_mut(grad.d_weights.data().len());
            for ((p, &g), a) in layer
                .weights
                .data_mut()
                .iter_mut()
                .zip(grad.d_weights.data())
                .zip(w_acc)
            {
                *a = self.decay * *a + (1.0 - self.decay) * g * g;
                *p -= self.learning_rate * g / (*a + self.epsilon).sqrt();
            }
            for ((p, &g), a) in layer.bias.iter_mut().zip(&grad.d_bias).zip(b_acc) {
                *a = self.decay * *a + (1.0 - self.decay) * g * g;
                *p -= self.learning_rate * g / (*a + self.epsilon).sqrt();
            }
        }
    }
}
