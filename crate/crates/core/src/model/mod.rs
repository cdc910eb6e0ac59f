//! Conditional sequence VAE with hand-written forward and backward passes.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod layers;
pub mod loss;
pub mod network;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, CHECKPOINT_VERSION};
pub use loss::{
    frame_cross_entropy, kl_gaussian_standard, reparameterize, sequence_loss, softmax_channels,
    LossBreakdown, PosteriorParams,
};
pub use network::{LatentCode, LatentTrajectory, ModelConfig, Network};
pub use tensor::Tensor;
