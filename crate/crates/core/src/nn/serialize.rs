//! JSON form of network parameters.
//!
//! ```json
//! { "layer_sizes": [2, 10, 1],
//!   "activations": ["tanh", "identity"],
//!   "layers": [ { "weights": [/* n_out * n_in, row-major */], "bias": [/* n_out */] }, ... ] }
//! ```
//!
//! Floats are written in shortest round-trip form, so a saved network
//! reloads bit-identically. The enclosing model document carries the
//! format version.

use serde::{Deserialize, Serialize};

use super::network::{Activation, AutoencoderParams, Dense, NetworkParams};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub layers: Vec<LayerDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDoc {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoencoderDoc {
    pub encoder: NetworkDoc,
    pub decoder: NetworkDoc,
}

impl From<&NetworkParams> for NetworkDoc {
    fn from(p: &NetworkParams) -> Self {
        Self {
            layer_sizes: p.layer_sizes(),
            activations: p.activations(),
            layers: p
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights().to_vec(),
                    bias: l.bias().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkDoc> for NetworkParams {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        let n = doc.layers.len();
        if doc.layer_sizes.len() != n + 1 || doc.activations.len() != n {
            return Err(Error::Shape(format!(
                "network document lists {} sizes and {} activations for {n} layers",
                doc.layer_sizes.len(),
                doc.activations.len()
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!("layer {k} holds non-finite values")));
                }
                Dense::new(
                    doc.layer_sizes[k],
                    doc.layer_sizes[k + 1],
                    l.weights,
                    l.bias,
                    doc.activations[k],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkParams::new(layers)
    }
}

impl From<&AutoencoderParams> for AutoencoderDoc {
    fn from(p: &AutoencoderParams) -> Self {
        Self {
            encoder: p.encoder().into(),
            decoder: p.decoder().into(),
        }
    }
}

impl TryFrom<AutoencoderDoc> for AutoencoderParams {
    type Error = Error;

    fn try_from(doc: AutoencoderDoc) -> Result<Self> {
        AutoencoderParams::new(doc.encoder.try_into()?, doc.decoder.try_into()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let net = init_network(&[3, 5, 2], &[Activation::Tanh, Activation::Identity], 21).unwrap();
        let text = serde_json::to_string(&NetworkDoc::from(&net)).unwrap();
        let doc: NetworkDoc = serde_json::from_str(&text).unwrap();
        let back = NetworkParams::try_from(doc).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn inconsistent_document_is_rejected() {
        let net = init_network(&[3, 2], &[Activation::Tanh], 1).unwrap();
        let mut doc = NetworkDoc::from(&net);
        doc.layer_sizes = vec![2, 2];
        assert!(NetworkParams::try_from(doc).is_err());
    }
}
