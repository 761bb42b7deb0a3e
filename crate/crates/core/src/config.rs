//! Run configuration: one structured file covering model, code-model,
//! training, data, and ablation settings. Field defaults follow the
//! full-scale reference setup (codebook 512x512, rate 8, alpha 1/0.1,
//! dropout 0.2, Adam 0.9/0.99 at 3e-5 for 500 epochs); `RunConfig::desk`
//! shrinks everything for synthetic-data experiments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpt::{FeatureSet, GptConfig};
use crate::model::{JointPartition, VqVaeConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub codebook_size: usize,
    pub codebook_dim: usize,
    pub downsample_rate: usize,
    pub num_layers: usize,
    pub channel_width: usize,
    pub enc_kernel: usize,
    pub dec_kernel: usize,
    pub fcm_kernel: usize,
    pub fcm_dropout: f64,
    pub leaky_slope: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub commit_beta: f64,
    pub rec_weights: [f64; 3],
    pub joint_partition: JointPartition,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            codebook_size: 512,
            codebook_dim: 512,
            downsample_rate: 8,
            num_layers: 3,
            channel_width: 512,
            enc_kernel: 4,
            dec_kernel: 3,
            fcm_kernel: 3,
            fcm_dropout: 0.2,
            leaky_slope: 0.2,
            alpha1: 1.0,
            alpha2: 0.1,
            commit_beta: 0.25,
            rec_weights: [1.0, 1.0, 1.0],
            joint_partition: JointPartition {
                upper: Vec::new(),
                lower: Vec::new(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GptSection {
    pub layers: usize,
    pub heads: usize,
    pub width: usize,
    pub context: usize,
    pub strides: Vec<usize>,
    pub music_width: usize,
    pub pretrained_dims: usize,
    pub handcrafted_dims: usize,
}

impl Default for GptSection {
    fn default() -> Self {
        GptSection {
            layers: 2,
            heads: 2,
            width: 64,
            context: 30,
            strides: vec![2, 5],
            music_width: 16,
            pretrained_dims: 8,
            handcrafted_dims: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs: 500,
            learning_rate: 3.0e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub frame_rate: f64,
    /// Beat-align kernel width in seconds (printed in every report).
    pub bas_sigma_seconds: f64,
    pub speed_window_seconds: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            frame_rate: 60.0,
            bas_sigma_seconds: 0.05,
            speed_window_seconds: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    /// Frequency-complement blocks in the decoder.
    pub fcm_enabled: bool,
    /// Spectral loss terms (both the reconstruction-level and per-layer ones).
    pub ffl_enabled: bool,
    pub feature_set: FeatureSet,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            fcm_enabled: true,
            ffl_enabled: true,
            feature_set: FeatureSet::Both,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub gpt: GptSection,
    pub training: TrainingSection,
    pub data: DataSection,
    pub ablation: AblationSection,
}

impl RunConfig {
    /// Small profile for synthetic-data runs: 12 joints split 6/6,
    /// codebook 64x32, width 32, and a learning rate suited to quick
    /// memorization experiments. The spectral weights shrink with the
    /// profile because the unnormalized transform magnitudes grow with
    /// the signal length; the full-scale defaults keep 1 and 0.1.
    pub fn desk() -> Self {
        let mut cfg = RunConfig::default();
        cfg.model.codebook_size = 64;
        cfg.model.codebook_dim = 32;
        cfg.model.channel_width = 32;
        cfg.model.alpha1 = 3.0e-4;
        cfg.model.alpha2 = 3.0e-5;
        cfg.model.joint_partition = JointPartition::split_at(12, 6);
        cfg.training.epochs = 300;
        cfg.training.learning_rate = 1.0e-3;
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.downsample_rate != (1 << m.num_layers) {
            return Err(Error::config(format!(
                "downsample_rate {} must equal 2^num_layers = {}",
                m.downsample_rate,
                1usize << m.num_layers
            )));
        }
        if m.joint_partition.upper.is_empty() || m.joint_partition.lower.is_empty() {
            return Err(Error::config(
                "joint_partition must assign joints to both halves".to_string(),
            ));
        }
        m.joint_partition
            .validate(m.joint_partition.total_joints())?;
        if self.data.frame_rate <= 0.0 {
            return Err(Error::config("frame_rate must be > 0".to_string()));
        }
        if self.data.bas_sigma_seconds <= 0.0 {
            return Err(Error::config("bas_sigma_seconds must be > 0".to_string()));
        }
        if self.data.speed_window_seconds <= 0.0 {
            return Err(Error::config("speed_window_seconds must be > 0".to_string()));
        }
        // Construct throwaway sub-configs so their own validation runs.
        self.vqvae_config(m.joint_partition.upper.len()).validate()?;
        self.gpt_config(m.codebook_size, m.codebook_size).validate()?;
        Ok(())
    }

    /// Autoencoder config for one half-body with the given joint count.
    pub fn vqvae_config(&self, joints: usize) -> VqVaeConfig {
        let m = &self.model;
        VqVaeConfig {
            input_joints: joints,
            codebook_size: m.codebook_size,
            codebook_dim: m.codebook_dim,
            num_layers: m.num_layers,
            channel_width: m.channel_width,
            enc_kernel: m.enc_kernel,
            dec_kernel: m.dec_kernel,
            fcm_kernel: m.fcm_kernel,
            fcm_dropout: m.fcm_dropout,
            leaky_slope: m.leaky_slope,
            alpha1: m.alpha1,
            alpha2: m.alpha2,
            commit_beta: m.commit_beta,
            rec_weights: m.rec_weights,
            fcm_enabled: self.ablation.fcm_enabled,
            ffl_enabled: self.ablation.ffl_enabled,
        }
    }

    pub fn gpt_config(&self, vocab_upper: usize, vocab_lower: usize) -> GptConfig {
        let g = &self.gpt;
        GptConfig {
            layers: g.layers,
            heads: g.heads,
            width: g.width,
            context: g.context,
            vocab_upper,
            vocab_lower,
            strides: g.strides.clone(),
            music_width: g.music_width,
            pretrained_dim: g.pretrained_dims,
            handcrafted_dim: g.handcrafted_dims,
            feature_set: self.ablation.feature_set,
            leaky_slope: self.model.leaky_slope,
        }
    }
}
