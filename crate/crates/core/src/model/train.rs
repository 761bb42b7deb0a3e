//! Deterministic single-threaded training for the motion autoencoder.

use super::motion::MotionSequence;
use super::vqvae::{LossBreakdown, VqVae};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng::splitmix64;
use crate::tensor::Tape;

/// Aggregated loss statistics for one epoch.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub ffl_recon: f64,
    pub ffl_layers: f64,
    pub perplexity: f64,
}

impl EpochStats {
    pub const CSV_HEADER: &'static str =
        "epoch,total,reconstruction,codebook,commitment,ffl_recon,ffl_layers,perplexity";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.epoch,
            self.total,
            self.reconstruction,
            self.codebook,
            self.commitment,
            self.ffl_recon,
            self.ffl_layers,
            self.perplexity
        )
    }
}

pub struct VqVaeTrainer {
    pub model: VqVae,
    optimizer: Adam,
    pub history: Vec<EpochStats>,
    epoch: usize,
}

impl VqVaeTrainer {
    pub fn new(model: VqVae, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let optimizer = Adam::new(&model.params, learning_rate, beta1, beta2);
        VqVaeTrainer {
            model,
            optimizer,
            history: Vec::new(),
            epoch: 0,
        }
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Adjust the optimizer step size (simple manual schedules).
    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.optimizer.set_learning_rate(learning_rate);
    }

    fn snapshot(&self) -> Vec<crate::tensor::DiffTensor> {
        (0..self.model.params.len())
            .map(|i| self.model.params.get(i).clone())
            .collect()
    }

    fn restore(&mut self, snapshot: Vec<crate::tensor::DiffTensor>) {
        for (i, t) in snapshot.into_iter().enumerate() {
            *self.model.params.get_mut(i) = t;
        }
    }

    /// One gradient step per clip, in dataset order. On a numeric failure
    /// the parameters are rolled back to the end of the previous epoch
    /// before the error is surfaced.
    pub fn run_epochs(&mut self, dataset: &[MotionSequence], epochs: usize) -> Result<()> {
        if dataset.is_empty() {
            return Err(Error::config("training dataset is empty".to_string()));
        }
        for _ in 0..epochs {
            let snapshot = self.snapshot();
            match self.run_one_epoch(dataset) {
                Ok(stats) => {
                    self.history.push(stats);
                }
                Err(err) => {
                    self.restore(snapshot);
                    return Err(Error::Numeric(format!(
                        "training diverged in epoch {}: {err}; parameters rolled back to epoch {}",
                        self.epoch + 1,
                        self.epoch
                    )));
                }
            }
            self.epoch += 1;
        }
        Ok(())
    }

    fn run_one_epoch(&mut self, dataset: &[MotionSequence]) -> Result<EpochStats> {
        let mut sums = LossBreakdown::default();
        let seed = self.model.seed;
        for (clip_idx, clip) in dataset.iter().enumerate() {
            let step_salt = splitmix64(
                seed ^ ((self.epoch as u64 + 1) << 24) ^ (clip_idx as u64 + 1),
            );
            let mut tape = Tape::training(seed);
            let leaves = self.model.params.leaves(&mut tape)?;
            let (loss, parts) = self.model.loss_vars(&mut tape, &leaves, clip, step_salt)?;
            if !parts.total.is_finite() {
                return Err(Error::numeric(format!("loss became {}", parts.total)));
            }
            tape.backward(loss)?;
            let grads: Vec<Option<Vec<f64>>> =
                leaves.iter().map(|&v| tape.take_grad(v)).collect();
            self.optimizer.step(&mut self.model.params, &grads)?;

            sums.total += parts.total;
            sums.reconstruction += parts.reconstruction;
            sums.codebook += parts.codebook;
            sums.commitment += parts.commitment;
            sums.ffl_recon += parts.ffl_recon;
            sums.ffl_layers += parts.ffl_layers;
            sums.perplexity += parts.perplexity;
        }
        let n = dataset.len() as f64;
        Ok(EpochStats {
            epoch: self.epoch + 1,
            total: sums.total / n,
            reconstruction: sums.reconstruction / n,
            codebook: sums.codebook / n,
            commitment: sums.commitment / n,
            ffl_recon: sums.ffl_recon / n,
            ffl_layers: sums.ffl_layers / n,
            perplexity: sums.perplexity / n,
        })
    }
}

/// Train a fresh model for a fixed number of epochs.
pub fn train_vqvae(
    dataset: &[MotionSequence],
    config: super::vqvae::VqVaeConfig,
    body: super::vqvae::BodyTag,
    seed: u64,
    epochs: usize,
    learning_rate: f64,
    betas: (f64, f64),
) -> Result<VqVaeTrainer> {
    let model = VqVae::new(config, body, seed)?;
    let mut trainer = VqVaeTrainer::new(model, learning_rate, betas.0, betas.1);
    trainer.run_epochs(dataset, epochs)?;
    Ok(trainer)
}

/// Mean squared position error of quantized reconstructions over a dataset.
pub fn reconstruction_mse(model: &VqVae, dataset: &[MotionSequence]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::config("empty dataset".to_string()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for clip in dataset {
        let recon = model.reconstruct(clip)?;
        total += clip
            .frames
            .iter()
            .zip(&recon.frames)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += clip.frames.len();
    }
    Ok(total / count as f64)
}
