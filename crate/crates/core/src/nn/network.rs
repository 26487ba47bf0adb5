use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OfiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative expressed through the pre-activation `x` and the output
    /// `y = apply(x)`. ReLU's derivative at exactly 0 is 0.
    #[inline]
    fn derivative(&self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = OfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(OfiError::invalid("activation", format!("`{other}`"))),
        }
    }
}

/// Layer widths and the hidden activation. The output layer is always linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnnTopology {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl FnnTopology {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: Activation) -> Result<Self> {
        let t = Self {
            input_dim,
            hidden,
            output_dim,
            activation,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(OfiError::invalid("topology", "all layer widths must be at least 1"));
        }
        if !(1..=2).contains(&self.output_dim) {
            return Err(OfiError::invalid(
                "topology",
                format!("output width {} (must be 1 or 2)", self.output_dim),
            ));
        }
        Ok(())
    }

    /// `[input, hidden..., output]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    /// Dash-joined widths, e.g. `4-32-16-2`.
    pub fn label(&self) -> String {
        self.widths()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn glorot<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.biases[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Gradient with the same shape as the network parameters.
pub type Gradients = Vec<Dense>;

/// The parameter set of a multilayer perceptron, operating in whatever
/// space its inputs are given in (no scaling).
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub topology: FnnTopology,
    pub layers: Vec<Dense>,
}

/// Per-sample activations kept for the backward pass.
pub(crate) struct Workspace {
    /// `pre[l]`: pre-activations of layer `l`.
    pre: Vec<Vec<f64>>,
    /// `post[0]` is the input; `post[l + 1]` the output of layer `l`.
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(topology: &FnnTopology) -> Self {
        let widths = topology.widths();
        Self {
            pre: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            post: widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    pub(crate) fn output(&self) -> &[f64] {
        self.post.last().expect("output layer")
    }
}

impl Network {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng>(topology: FnnTopology, rng: &mut R) -> Result<Self> {
        topology.validate()?;
        let widths = topology.widths();
        let layers = widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], rng))
            .collect();
        Ok(Self { topology, layers })
    }

    pub fn zeros(topology: FnnTopology) -> Result<Self> {
        topology.validate()?;
        let layers = topology
            .widths()
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Ok(Self { topology, layers })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.topology.validate()?;
        let widths = self.topology.widths();
        if self.layers.len() != widths.len() - 1 {
            return Err(OfiError::ModelFormat(format!(
                "{} layers for topology {}",
                self.layers.len(),
                self.topology.label()
            )));
        }
        for (l, (layer, w)) in self.layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.inputs != w[0]
                || layer.outputs != w[1]
                || layer.weights.len() != w[0] * w[1]
                || layer.biases.len() != w[1]
            {
                return Err(OfiError::ModelFormat(format!(
                    "layer {l} does not match topology {}",
                    self.topology.label()
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.topology.input_dim {
            return Err(OfiError::DimensionMismatch {
                expected: self.topology.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_into(&self, x: &[f64], ws: &mut Workspace) {
        ws.post[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.post.split_at_mut(l + 1);
            let pre = &mut ws.pre[l];
            layer.affine(&head[l], pre);
            let out = &mut tail[0];
            if l == last {
                out.copy_from_slice(pre);
            } else {
                for (o, &z) in out.iter_mut().zip(pre.iter()) {
                    *o = self.topology.activation.apply(z);
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = Workspace::new(&self.topology);
        self.forward_into(x, &mut ws);
        Ok(ws.post.last().expect("output layer").clone())
    }

    /// Smallest |pre-activation| over all hidden units for input `x`; tells
    /// how close a ReLU network sits to a kink.
    pub fn min_hidden_preactivation(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut ws = Workspace::new(&self.topology);
        self.forward_into(x, &mut ws);
        Ok(ws.pre[..ws.pre.len() - 1]
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, v| m.min(v.abs())))
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect()
    }

    /// Adds the gradient of `Σ (y − t)² · scale` for one sample into `grads`
    /// and returns the sample's summed squared error.
    pub(crate) fn accumulate(
        &self,
        x: &[f64],
        target: &[f64],
        scale: f64,
        ws: &mut Workspace,
        grads: &mut Gradients,
    ) -> f64 {
        self.forward_into(x, ws);
        let last = self.layers.len() - 1;
        let output = &ws.post[last + 1];
        let mut sse = 0.0;
        for ((d, &y), &t) in ws.delta[last].iter_mut().zip(output).zip(target) {
            let e = y - t;
            sse += e * e;
            *d = 2.0 * e * scale;
        }
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let g = &mut grads[l];
            let input = &ws.post[l];
            for (o, &d) in ws.delta[l].iter().enumerate() {
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, &v) in row.iter_mut().zip(input) {
                    *w += d * v;
                }
            }
            if l > 0 {
                let (below, above) = ws.delta.split_at_mut(l);
                let next = &above[0];
                let prev = &mut below[l - 1];
                for (i, p) in prev.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (o, &d) in next.iter().enumerate() {
                        acc += layer.weights[o * layer.inputs + i] * d;
                    }
                    *p = acc
                        * self
                            .topology
                            .activation
                            .derivative(ws.pre[l - 1][i], ws.post[l][i]);
                }
            }
        }
        sse
    }

    /// Mean-squared-error loss over a batch and its exact gradient with
    /// respect to every weight and bias.
    pub fn backward(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Gradients)> {
        if inputs.is_empty() {
            return Err(OfiError::EmptyInput);
        }
        if inputs.len() != targets.len() {
            return Err(OfiError::LengthMismatch {
                left: inputs.len(),
                right: targets.len(),
            });
        }
        for (x, t) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            if t.len() != self.topology.output_dim {
                return Err(OfiError::DimensionMismatch {
                    expected: self.topology.output_dim,
                    got: t.len(),
                });
            }
        }
        let count = (inputs.len() * self.topology.output_dim) as f64;
        let mut grads = self.zero_gradients();
        let mut ws = Workspace::new(&self.topology);
        let mut sse = 0.0;
        for (x, t) in inputs.iter().zip(targets) {
            sse += self.accumulate(x, t, 1.0 / count, &mut ws, &mut grads);
        }
        Ok((sse / count, grads))
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(OfiError::DimensionMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

/// Same layout as [`Network::params`].
pub fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
        .collect()
}

/// Mean squared error over every output element.
pub fn loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(OfiError::EmptyInput);
    }
    if predictions.len() != targets.len() {
        return Err(OfiError::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    let sse: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / predictions.len() as f64)
}
