use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, BatchMatrix};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
    Sigmoid,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
            Activation::Sigmoid => sigmoid(v),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// One affine layer followed by an activation. `weights` is row-major
/// `[n_out x n_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    n_in: usize,
    n_out: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    activation: Activation,
}

impl Dense {
    pub fn new(
        n_in: usize,
        n_out: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        if weights.len() != n_in * n_out || bias.len() != n_out {
            return Err(Error::Shape(format!(
                "{n_out}x{n_in} layer given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            n_in,
            n_out,
            weights,
            bias,
            activation,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.n_in + inp]
    }

    /// Pre-activations `W x + b` for a whole batch.
    fn affine(&self, x: &BatchMatrix) -> BatchMatrix {
        let batch = x.batch();
        let mut z = BatchMatrix::zeros(self.n_out, batch);
        for j in 0..self.n_out {
            let row = z.row_mut(j);
            row.fill(self.bias[j]);
            let w_row = &self.weights[j * self.n_in..(j + 1) * self.n_in];
            for (i, &w) in w_row.iter().enumerate() {
                for (acc, &xv) in row.iter_mut().zip(x.row(i)) {
                    *acc += w * xv;
                }
            }
        }
        z
    }
}

/// A dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Dense>,
}

impl NetworkParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].n_out,
                    k + 1,
                    pair[1].n_in
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    /// `[in, hidden..., out]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.n_out))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn zeros_like(&self) -> NetworkGrads {
        NetworkGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }
}

/// Glorot-uniform weights, zero biases, drawn from the `Init` stream of `seed`.
pub fn init_network(
    layer_sizes: &[usize],
    activations: &[Activation],
    seed: u64,
) -> Result<NetworkParams> {
    init_network_with(layer_sizes, activations, &mut rng::stream(seed, Stream::Init))
}

pub fn init_network_with<R: Rng + ?Sized>(
    layer_sizes: &[usize],
    activations: &[Activation],
    rng: &mut R,
) -> Result<NetworkParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(
            "layer sizes need an input and an output entry".into(),
        ));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(Error::Config(format!(
            "{} layers but {} activations",
            layer_sizes.len() - 1,
            activations.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config("layer sizes must be positive".into()));
    }
    let layers = layer_sizes
        .windows(2)
        .zip(activations)
        .map(|(dims, &act)| {
            let (n_in, n_out) = (dims[0], dims[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let weights = (0..n_in * n_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Dense::new(n_in, n_out, weights, vec![0.0; n_out], act)
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkParams::new(layers)
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: BatchMatrix,
    pre: Vec<BatchMatrix>,
    post: Vec<BatchMatrix>,
}

impl ForwardTrace {
    pub fn input(&self) -> &BatchMatrix {
        &self.input
    }

    pub fn pre_activations(&self) -> &[BatchMatrix] {
        &self.pre
    }

    pub fn activations(&self) -> &[BatchMatrix] {
        &self.post
    }

    pub fn output(&self) -> &BatchMatrix {
        self.post.last().expect("trace has at least one layer")
    }

    pub fn into_output(mut self) -> BatchMatrix {
        self.post.pop().expect("trace has at least one layer")
    }
}

pub fn forward(params: &NetworkParams, input: &[f64]) -> Result<ForwardTrace> {
    forward_batch(params, BatchMatrix::from_column(input))
}

pub fn forward_batch(params: &NetworkParams, input: BatchMatrix) -> Result<ForwardTrace> {
    if input.dim() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input has dimension {}, network expects {}",
            input.dim(),
            params.input_dim()
        )));
    }
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut post: Vec<BatchMatrix> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let z = layer.affine(post.last().unwrap_or(&input));
        let mut a = z.clone();
        if layer.activation != Activation::Identity {
            for v in a.as_mut_slice() {
                *v = layer.activation.apply(*v);
            }
        }
        pre.push(z);
        post.push(a);
    }
    Ok(ForwardTrace { input, pre, post })
}

/// Output only, without keeping the trace.
pub fn predict_batch(params: &NetworkParams, input: BatchMatrix) -> Result<BatchMatrix> {
    Ok(forward_batch(params, input)?.into_output())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients with the same shapes as a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub layers: Vec<LayerGrads>,
}

/// Reverse-mode pass. Gradients are summed over the batch; scale
/// `output_grad` beforehand to get a mean.
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    output_grad: &BatchMatrix,
) -> Result<(NetworkGrads, BatchMatrix)> {
    if trace.post.len() != params.layers.len() {
        return Err(Error::Shape(format!(
            "trace has {} layers, network has {}",
            trace.post.len(),
            params.layers.len()
        )));
    }
    let batch = trace.input.batch();
    if output_grad.dim() != params.output_dim() || output_grad.batch() != batch {
        return Err(Error::Shape(format!(
            "output gradient is {}x{}, expected {}x{batch}",
            output_grad.dim(),
            output_grad.batch(),
            params.output_dim()
        )));
    }
    for (layer, a) in params.layers.iter().zip(&trace.post) {
        if a.dim() != layer.n_out || a.batch() != batch {
            return Err(Error::Shape("trace was not produced by these parameters".into()));
        }
    }

    let mut layer_grads = Vec::with_capacity(params.layers.len());
    let mut delta = output_grad.clone();
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let out = &trace.post[l];
        if layer.activation != Activation::Identity {
            for (d, &o) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *d *= layer.activation.derivative_from_output(o);
            }
        }
        let x = if l == 0 { &trace.input } else { &trace.post[l - 1] };

        let mut w_grad = vec![0.0; layer.weights.len()];
        let mut b_grad = vec![0.0; layer.n_out];
        for j in 0..layer.n_out {
            let dj = delta.row(j);
            b_grad[j] = dj.iter().sum();
            for i in 0..layer.n_in {
                w_grad[j * layer.n_in + i] = dot(dj, x.row(i));
            }
        }

        let mut next = BatchMatrix::zeros(layer.n_in, batch);
        for i in 0..layer.n_in {
            let dst = next.row_mut(i);
            for j in 0..layer.n_out {
                let w = layer.weights[j * layer.n_in + i];
                for (acc, &dv) in dst.iter_mut().zip(delta.row(j)) {
                    *acc += w * dv;
                }
            }
        }
        layer_grads.push(LayerGrads {
            weights: w_grad,
            bias: b_grad,
        });
        delta = next;
    }
    layer_grads.reverse();
    Ok((NetworkGrads { layers: layer_grads }, delta))
}

/// Encoder/decoder pair. The encoder maps data to the latent code and the
/// decoder maps it back.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    encoder: NetworkParams,
    decoder: NetworkParams,
}

impl AutoencoderParams {
    pub fn new(encoder: NetworkParams, decoder: NetworkParams) -> Result<Self> {
        if encoder.output_dim() != decoder.input_dim() {
            return Err(Error::Shape(format!(
                "encoder emits a {}-dim code but decoder reads {}",
                encoder.output_dim(),
                decoder.input_dim()
            )));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::Shape(format!(
                "decoder reconstructs {} dims, data has {}",
                decoder.output_dim(),
                encoder.input_dim()
            )));
        }
        Ok(Self { encoder, decoder })
    }

    /// Symmetric tanh autoencoder: `data -> hidden... -> latent -> reversed hidden... -> data`.
    /// The code layer and the reconstruction are linear.
    pub fn init<R: Rng + ?Sized>(
        data_dim: usize,
        hidden: &[usize],
        latent: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut enc_sizes = vec![data_dim];
        enc_sizes.extend_from_slice(hidden);
        enc_sizes.push(latent);
        let mut dec_sizes = enc_sizes.clone();
        dec_sizes.reverse();
        let acts = |n: usize| {
            let mut a = vec![Activation::Tanh; n - 2];
            a.push(Activation::Identity);
            a
        };
        let encoder = init_network_with(&enc_sizes, &acts(enc_sizes.len()), rng)?;
        let decoder = init_network_with(&dec_sizes, &acts(dec_sizes.len()), rng)?;
        Self::new(encoder, decoder)
    }

    pub fn encoder(&self) -> &NetworkParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &NetworkParams {
        &self.decoder
    }

    pub fn data_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn reconstruct_batch(&self, x: BatchMatrix) -> Result<BatchMatrix> {
        let z = predict_batch(&self.encoder, x)?;
        predict_batch(&self.decoder, z)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .reconstruct_batch(BatchMatrix::from_column(x))?
            .column(0))
    }

    pub fn zeros_like(&self) -> AutoencoderGrads {
        AutoencoderGrads {
            encoder: self.encoder.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderGrads {
    pub encoder: NetworkGrads,
    pub decoder: NetworkGrads,
}

/// Flat, named views over parameter (or gradient) buffers, in a fixed order.
pub trait ParamSet {
    fn named_slices(&self) -> Vec<(String, &[f64])>;
    fn slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn flat(&self) -> Vec<f64> {
        self.named_slices()
            .into_iter()
            .flat_map(|(_, s)| s.iter().copied())
            .collect()
    }

    fn len(&self) -> usize {
        self.named_slices().iter().map(|(_, s)| s.len()).sum()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mutable access to the `k`-th scalar in `flat()` order.
    fn scalar_mut(&mut self, mut k: usize) -> &mut f64 {
        for s in self.slices_mut() {
            if k < s.len() {
                return &mut s[k];
            }
            k -= s.len();
        }
        panic!("parameter index out of range");
    }
}

impl ParamSet for NetworkParams {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| {
                [
                    (format!("layer{k}.weights"), l.weights.as_slice()),
                    (format!("layer{k}.bias"), l.bias.as_slice()),
                ]
            })
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

impl ParamSet for NetworkGrads {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(k, l)| {
                [
                    (format!("layer{k}.weights"), l.weights.as_slice()),
                    (format!("layer{k}.bias"), l.bias.as_slice()),
                ]
            })
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

fn prefixed<'a>(prefix: &str, v: Vec<(String, &'a [f64])>) -> Vec<(String, &'a [f64])> {
    v.into_iter()
        .map(|(n, s)| (format!("{prefix}.{n}"), s))
        .collect()
}

impl ParamSet for AutoencoderParams {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        let mut v = prefixed("encoder", self.encoder.named_slices());
        v.extend(prefixed("decoder", self.decoder.named_slices()));
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.slices_mut();
        v.extend(self.decoder.slices_mut());
        v
    }
}

impl ParamSet for AutoencoderGrads {
    fn named_slices(&self) -> Vec<(String, &[f64])> {
        let mut v = prefixed("encoder", self.encoder.named_slices());
        v.extend(prefixed("decoder", self.decoder.named_slices()));
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.slices_mut();
        v.extend(self.decoder.slices_mut());
        v
    }
}
