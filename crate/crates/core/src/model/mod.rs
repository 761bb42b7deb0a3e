//! Motion autoencoding: body splitting, the quantized autoencoder with
//! frequency complements, its losses, and training.

mod motion;
mod train;
mod vqvae;

pub use motion::{merge_body, split_body, JointPartition, MotionSequence};
pub use train::{reconstruction_mse, train_vqvae, EpochStats, VqVaeTrainer};
pub use vqvae::{
    codebook_perplexity, nearest_codes, quantize, vq_penalty, BodyTag, Codebook, DecodeVars,
    EncodeVars, LossBreakdown, PoseCodeSequence, QuantizeVars, SpectralSnapshot, VqVae,
    VqVaeConfig,
};
