//! Dense feed-forward networks: parameters, forward/backward passes, Adam
//! and finite-difference gradient checking. All arithmetic is `f64`.

mod adam;
mod gradcheck;
mod matrix;
mod network;
pub mod serialize;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{gradient_check, relative_error, GradCheckConfig, GradCheckReport};
pub use matrix::BatchMatrix;
pub use network::{
    backward, forward, forward_batch, init_network, init_network_with, predict_batch,
    Activation, AutoencoderGrads, AutoencoderParams, Dense, ForwardTrace, LayerGrads,
    NetworkGrads, NetworkParams, ParamSet,
};
pub(crate) use network::sigmoid;
