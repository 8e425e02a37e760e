//! The dynamic-depth encoder/decoder pair.

mod checkpoint;
mod code;
mod config;
mod model;

pub use checkpoint::{
    checkpoint_bytes, parse_checkpoint, read_checkpoint, write_checkpoint, CheckpointHeader, ParamEntry,
};
pub use code::{apply_cr_mask, pack_complex, symbols_for, unpack_complex, SemanticCode};
pub use config::{LayerConfig, MIN_LAYERS};
pub use model::{Arch, Codec, Conditioning, TrainedMode};
