//! Dynamic-depth joint source-channel coding for image transmission.
//!
//! An encoder maps an image to a complex channel code, the code is power
//! normalized and sent through a simulated noisy channel, and a decoder
//! reconstructs the image. Encoder and decoder share one set of weights
//! across every admissible depth; the active depth is chosen per call by a
//! [`LayerConfig`].

pub mod autodiff;
pub mod channel;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod gradcheck;
pub mod tensor;
pub mod trainer;

pub use channel::{Channel, ChannelMode, ChannelRealization};
pub use codec::{Arch, Codec, Conditioning, LayerConfig, SemanticCode, TrainedMode};
pub use dataset::ImageSet;
pub use error::{Error, Result};
pub use evaluator::{SweepResult, SweepSpec};
pub use tensor::Tensor;
pub use trainer::{EpochStats, TrainConfig};
