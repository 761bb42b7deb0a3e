//! Cross-conditional autoregressive model over upper/lower pose-code
//! streams, conditioned on music feature tracks.

mod generate;
mod model;
mod train;

pub use generate::generate;
pub use model::{ForwardLogits, MotionGpt};
pub use train::{next_code_accuracy, GptClip, GptEpochStats, GptTrainer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Origin of a feature track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    /// Dense features exported from an external pre-trained music model,
    /// at an audio-ish rate; downsampled by a learned conv stack.
    Pretrained,
    /// Handcrafted descriptors already at the pose-code rate.
    Handcrafted,
}

/// Time-aligned music conditioning matrix at a uniform rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub values: Vec<f64>,
    pub rows: usize,
    pub dims: usize,
    pub rate: f64,
    pub kind: TrackKind,
}

impl FeatureTrack {
    pub fn new(rows: usize, dims: usize, rate: f64, kind: TrackKind, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return Err(Error::dim(format!(
                "feature track needs rows and dims, got {rows}x{dims}"
            )));
        }
        if rate <= 0.0 {
            return Err(Error::config(format!("track rate must be > 0, got {rate}")));
        }
        if values.len() != rows * dims {
            return Err(Error::dim(format!(
                "feature buffer length {} != {rows}x{dims}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite feature value at flat index {pos}"
            )));
        }
        Ok(FeatureTrack {
            values,
            rows,
            dims,
            rate,
            kind,
        })
    }
}

/// Which conditioning blocks feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Both,
    Pretrained,
    Handcrafted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GptConfig {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    /// Maximum sequence length in pose-code steps.
    pub context: usize,
    pub vocab_upper: usize,
    pub vocab_lower: usize,
    /// Temporal strides of the feature downsampler convs.
    pub strides: Vec<usize>,
    /// Channel width of the downsampled pretrained block.
    pub music_width: usize,
    pub pretrained_dim: usize,
    pub handcrafted_dim: usize,
    pub feature_set: FeatureSet,
    pub leaky_slope: f64,
}

impl GptConfig {
    pub fn desk(vocab: usize, pretrained_dim: usize, handcrafted_dim: usize) -> Self {
        GptConfig {
            layers: 2,
            heads: 2,
            width: 64,
            context: 30,
            vocab_upper: vocab,
            vocab_lower: vocab,
            strides: vec![2, 5],
            music_width: 16,
            pretrained_dim,
            handcrafted_dim,
            feature_set: FeatureSet::Both,
            leaky_slope: 0.2,
        }
    }

    pub fn stride_product(&self) -> usize {
        self.strides.iter().product()
    }

    /// Width of the assembled conditioning input per step.
    pub fn condition_dim(&self) -> usize {
        match self.feature_set {
            FeatureSet::Both => self.music_width + self.handcrafted_dim,
            FeatureSet::Pretrained => self.music_width,
            FeatureSet::Handcrafted => self.handcrafted_dim,
        }
    }

    pub fn uses_pretrained(&self) -> bool {
        matches!(self.feature_set, FeatureSet::Both | FeatureSet::Pretrained)
    }

    pub fn uses_handcrafted(&self) -> bool {
        matches!(self.feature_set, FeatureSet::Both | FeatureSet::Handcrafted)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::config("gpt: zero layers is degenerate".to_string()));
        }
        if self.context < 2 {
            return Err(Error::config(format!(
                "gpt: context must be >= 2, got {}",
                self.context
            )));
        }
        if self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "gpt: width {} must be a positive multiple of heads {}",
                self.width, self.heads
            )));
        }
        if self.vocab_upper == 0 || self.vocab_lower == 0 {
            return Err(Error::config("gpt: vocabularies must be >= 1".to_string()));
        }
        if self.strides.is_empty() || self.strides.contains(&0) {
            return Err(Error::config(format!(
                "gpt: downsampler strides must be >= 1, got {:?}",
                self.strides
            )));
        }
        if self.uses_pretrained() && (self.pretrained_dim == 0 || self.music_width == 0) {
            return Err(Error::config(
                "gpt: pretrained features enabled but their dims are zero".to_string(),
            ));
        }
        if self.uses_handcrafted() && self.handcrafted_dim == 0 {
            return Err(Error::config(
                "gpt: handcrafted features enabled but their dim is zero".to_string(),
            ));
        }
        Ok(())
    }
}
