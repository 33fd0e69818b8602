//! Dense feed-forward networks with hand-written backpropagation.
//!
//! All parameters live in one flat [`ParameterVector`]. The layout is
//! canonical: for each layer, input to output, the `fan_in x fan_out` weight
//! matrix in row-major order followed by that layer's bias vector. The
//! hybridization protocol swaps positions of this vector between owners, so
//! the layout must be identical for every network built from one config.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamId};

/// Probabilities are clipped into `[PROB_CLIP, 1 - PROB_CLIP]` before logs.
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    /// max(0, z)
    #[default]
    Relu,
    Tanh,
}

impl HiddenActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => z.max(0.0),
            HiddenActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed in terms of the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            HiddenActivation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NeuralNet,
    Logistic,
}

/// Layer sizes and activations. The output layer is always a single sigmoid unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    layer_sizes: Vec<usize>,
    hidden_activation: HiddenActivation,
    kind: ModelKind,
}

impl ModelConfig {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        kind: ModelKind,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config("a model needs at least an input and an output layer"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::config("the output layer must have exactly one unit"));
        }
        if kind == ModelKind::Logistic && layer_sizes.len() != 2 {
            return Err(Error::config("logistic regression takes layer sizes [d, 1]"));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation,
            kind,
        })
    }

    /// The default `[d, 4, 2, 1]` rectifier network.
    pub fn neural_net(input_dim: usize) -> Result<Self> {
        Self::new(
            vec![input_dim, 4, 2, 1],
            HiddenActivation::Relu,
            ModelKind::NeuralNet,
        )
    }

    pub fn logistic(input_dim: usize) -> Result<Self> {
        Self::new(vec![input_dim, 1], HiddenActivation::Relu, ModelKind::Logistic)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden_activation
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    fn layers(&self) -> Vec<LayerShape> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset = shape.bias_offset + shape.fan_out;
                shape
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl LayerShape {
    #[inline]
    fn weight(&self, params: &[f64], i: usize, j: usize) -> f64 {
        params[self.weight_offset + i * self.fan_out + j]
    }

    fn weight_row<'a>(&self, params: &'a [f64], i: usize) -> &'a [f64] {
        let start = self.weight_offset + i * self.fan_out;
        &params[start..start + self.fan_out]
    }

    fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.bias_offset..self.bias_offset + self.fan_out]
    }
}

/// Number of weights and biases: the sum of `fan_in * fan_out + fan_out` over layers.
pub fn param_count(config: &ModelConfig) -> usize {
    config
        .layer_sizes
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

/// Flat vector of every weight and bias, in canonical layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    /// Wraps `values`, rejecting NaN and infinities.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {pos} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: ModelConfig,
    params: ParameterVector,
}

impl Network {
    pub fn from_params(config: ModelConfig, params: ParameterVector) -> Result<Self> {
        let expected = param_count(&config);
        if params.len() != expected {
            return Err(Error::input(format!(
                "parameter vector has length {}, config needs {expected}",
                params.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    pub fn into_params(self) -> ParameterVector {
        self.params
    }

    /// Replaces the parameters, keeping the config.
    pub fn with_params(&self, params: ParameterVector) -> Result<Self> {
        Self::from_params(self.config.clone(), params)
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    fn check_row(&self, features: &[u8]) -> Result<()> {
        if features.len() != self.input_dim() {
            return Err(Error::input(format!(
                "feature vector has length {}, model expects {}",
                features.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, rows: &[&[u8]], labels: &[u8]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::input("empty batch"));
        }
        if rows.len() != labels.len() {
            return Err(Error::input(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        rows.iter().try_for_each(|r| self.check_row(r))
    }

    /// Runs one sample forward, returning every layer's pre-activations.
    /// The last entry holds the single output logit.
    fn trace(&self, layers: &[LayerShape], features: &[u8]) -> Vec<Vec<f64>> {
        let params = self.params.as_slice();
        let act = self.config.hidden_activation;
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate() {
            let mut z = layer.bias(params).to_vec();
            if l == 0 {
                // Binary inputs: only active features contribute.
                for (i, _) in features.iter().enumerate().filter(|(_, &x)| x != 0) {
                    for (zj, w) in z.iter_mut().zip(layer.weight_row(params, i)) {
                        *zj += w;
                    }
                }
            } else {
                for (i, &zi) in pre[l - 1].iter().enumerate() {
                    let a = act.apply(zi);
                    if a == 0.0 {
                        continue;
                    }
                    for (zj, w) in z.iter_mut().zip(layer.weight_row(params, i)) {
                        *zj += a * w;
                    }
                }
            }
            pre.push(z);
        }
        pre
    }

    /// Output logit for one sample.
    pub fn logit(&self, features: &[u8]) -> Result<f64> {
        self.check_row(features)?;
        let layers = self.config.layers();
        Ok(self.trace(&layers, features).last().unwrap()[0])
    }

    /// Predicted probability of the positive class, clipped into
    /// `[PROB_CLIP, 1 - PROB_CLIP]`.
    pub fn forward(&self, features: &[u8]) -> Result<f64> {
        Ok(clip(sigmoid(self.logit(features)?)))
    }

    /// Mean binary cross-entropy over the batch.
    pub fn batch_loss(&self, rows: &[&[u8]], labels: &[u8]) -> Result<f64> {
        self.check_batch(rows, labels)?;
        let layers = self.config.layers();
        let total: f64 = rows
            .iter()
            .zip(labels)
            .map(|(row, &y)| {
                let z = self.trace(&layers, row).last().unwrap()[0];
                sample_loss(clip(sigmoid(z)), y)
            })
            .sum();
        Ok(total / rows.len() as f64)
    }

    /// Exact gradient of [`Network::batch_loss`] with respect to every parameter.
    pub fn gradient(&self, rows: &[&[u8]], labels: &[u8]) -> Result<ParameterVector> {
        self.check_batch(rows, labels)?;
        let layers = self.config.layers();
        let params = self.params.as_slice();
        let act = self.config.hidden_activation;
        let scale = 1.0 / rows.len() as f64;
        let mut grad = vec![0.0; params.len()];

        for (row, &y) in rows.iter().zip(labels) {
            let pre = self.trace(&layers, row);
            let p = sigmoid(pre.last().unwrap()[0]);
            // The clip has zero slope outside its range.
            let dz_out = if (PROB_CLIP..=1.0 - PROB_CLIP).contains(&p) {
                p - f64::from(y)
            } else {
                0.0
            };
            let mut delta = vec![dz_out * scale];

            for l in (0..layers.len()).rev() {
                let layer = &layers[l];
                for (g, d) in grad[layer.bias_offset..layer.bias_offset + layer.fan_out]
                    .iter_mut()
                    .zip(&delta)
                {
                    *g += d;
                }
                if l == 0 {
                    for (i, _) in row.iter().enumerate().filter(|(_, &x)| x != 0) {
                        let start = layer.weight_offset + i * layer.fan_out;
                        for (g, d) in grad[start..start + layer.fan_out].iter_mut().zip(&delta) {
                            *g += d;
                        }
                    }
                    break;
                }
                let below = &pre[l - 1];
                let mut next_delta = vec![0.0; layer.fan_in];
                for (i, &zi) in below.iter().enumerate() {
                    let a = act.apply(zi);
                    let start = layer.weight_offset + i * layer.fan_out;
                    let mut back = 0.0;
                    for (j, d) in delta.iter().enumerate() {
                        grad[start + j] += a * d;
                        back += layer.weight(params, i, j) * d;
                    }
                    next_delta[i] = back * act.derivative(zi);
                }
                delta = next_delta;
            }
        }
        ParameterVector::new(grad)
    }
}

/// Glorot-uniform weights (bound `sqrt(6 / (fan_in + fan_out))` per layer), zero biases.
pub fn init_network(config: &ModelConfig, seed: u64) -> Network {
    init_with_rng(config, &mut StreamId::root(seed, Purpose::Init).rng())
}

pub fn init_with_rng<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Network {
    let mut params = vec![0.0; param_count(config)];
    for layer in config.layers() {
        let limit = glorot_limit(layer.fan_in, layer.fan_out);
        for w in &mut params[layer.weight_offset..layer.bias_offset] {
            *w = rng.gen_range(-limit..=limit);
        }
    }
    Network {
        config: config.clone(),
        params: ParameterVector(params),
    }
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

fn sample_loss(p: f64, y: u8) -> f64 {
    if y != 0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}
