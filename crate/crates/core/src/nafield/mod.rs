//! Single-channel neural acoustic field conditioned on room geometry.
//!
//! A query is a source/receiver pair inside a room described by K bounce
//! points. Positions are normalised by the room's bounding box and passed
//! through a sinusoidal encoding. Each bounce point is encoded relative to
//! the source and to the receiver, projected by a shared layer and mean
//! pooled, so the field does not depend on bounce-point order. The pooled
//! feature and the encoded endpoints feed a fusion layer, a trunk of square
//! layers (the ones LoRA adapts), and a head that emits the whole log-magnitude
//! spectrogram of the RIR at once.

mod checkpoint;
mod config;
mod encode;
mod loss;
mod model;
mod spectrogram;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{FieldConfig, StftConfig};
pub use encode::sinusoidal_encode;
pub use loss::{decay_profile, loss, loss_with_grad, DECAY_WEIGHT};
pub use model::{
    forward, gradients, lora_init, Example, GradientSet, LayerShape, LoraAdapters, LoraShape,
    ModelParams, RoomContext,
};
pub use spectrogram::{spectrogram, synthesize_waveform, SpectrogramTarget, LOG_EPS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("non-finite value in {0}")]
    NumericalError(String),
    #[error("rank {rank} invalid for a {d_out}x{d_in} layer")]
    RankError {
        rank: usize,
        d_in: usize,
        d_out: usize,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
