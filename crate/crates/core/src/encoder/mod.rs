//! Trainable point encoder: a shared per-point MLP, a channel-wise max pool
//! and a projection head into the joint embedding space, with hand-written
//! backpropagation.

mod checkpoint;
mod network;
mod sample;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use network::{
    backward, forward, init_params, Dense, EncoderConfig, EncoderGradients, EncoderParams, ForwardCache,
};
pub use sample::{sample_points, DEFAULT_SAMPLE_POINTS};
