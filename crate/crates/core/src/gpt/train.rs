//! Next-code prediction training for the code model.

use super::model::MotionGpt;
use super::FeatureTrack;
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::tensor::{Tape, VarId};

/// One training clip: conditioning tracks plus the frozen-encoder code
/// streams.
#[derive(Debug, Clone)]
pub struct GptClip {
    pub pretrained: Option<FeatureTrack>,
    pub handcrafted: Option<FeatureTrack>,
    pub upper_codes: Vec<usize>,
    pub lower_codes: Vec<usize>,
}

impl GptClip {
    pub fn steps(&self) -> usize {
        self.upper_codes.len()
    }
}

#[derive(Debug, Clone)]
pub struct GptEpochStats {
    pub epoch: usize,
    pub loss: f64,
}

impl GptEpochStats {
    pub const CSV_HEADER: &'static str = "epoch,loss";

    pub fn csv_row(&self) -> String {
        format!("{},{:.12e}", self.epoch, self.loss)
    }
}

fn clip_loss(model: &MotionGpt, tape: &mut Tape, leaves: &[VarId], clip: &GptClip) -> Result<VarId> {
    let steps = clip.steps();
    if steps < 2 {
        return Err(Error::dim(format!(
            "training clip needs >= 2 pose-code steps, got {steps}"
        )));
    }
    if clip.lower_codes.len() != steps {
        return Err(Error::dim(format!(
            "code streams disagree: upper {steps} vs lower {}",
            clip.lower_codes.len()
        )));
    }
    let m = model.condition_for_clip(
        tape,
        leaves,
        clip.pretrained.as_ref(),
        clip.handcrafted.as_ref(),
        steps,
    )?;
    let m_next = tape.shift_rows_up(m, 1)?;
    let logits = model.forward(tape, leaves, m, m_next, &clip.upper_codes, &clip.lower_codes)?;

    // Row t predicts the codes at step t+1; the last row has no target.
    let upper_pred = tape.slice_rows(logits.upper, 0, steps - 1)?;
    let lower_pred = tape.slice_rows(logits.lower, 0, steps - 1)?;
    let upper_loss = tape.softmax_cross_entropy(upper_pred, &clip.upper_codes[1..])?;
    let lower_loss = tape.softmax_cross_entropy(lower_pred, &clip.lower_codes[1..])?;
    tape.add(upper_loss, lower_loss)
}

pub struct GptTrainer {
    pub model: MotionGpt,
    optimizer: Adam,
    pub history: Vec<GptEpochStats>,
    epoch: usize,
}

impl GptTrainer {
    pub fn new(model: MotionGpt, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let optimizer = Adam::new(&model.params, learning_rate, beta1, beta2);
        GptTrainer {
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

    pub fn run_epochs(&mut self, dataset: &[GptClip], epochs: usize) -> Result<()> {
        if dataset.is_empty() {
            return Err(Error::config("gpt training dataset is empty".to_string()));
        }
        for _ in 0..epochs {
            let mut total = 0.0;
            for clip in dataset {
                let mut tape = Tape::new();
                let leaves = self.model.params.leaves(&mut tape)?;
                let loss = clip_loss(&self.model, &mut tape, &leaves, clip)?;
                let value = tape.scalar_value(loss)?;
                if !value.is_finite() {
                    return Err(Error::numeric(format!(
                        "gpt loss became {value} in epoch {}",
                        self.epoch + 1
                    )));
                }
                tape.backward(loss)?;
                let grads: Vec<Option<Vec<f64>>> =
                    leaves.iter().map(|&v| tape.take_grad(v)).collect();
                self.optimizer.step(&mut self.model.params, &grads)?;
                total += value;
            }
            self.epoch += 1;
            self.history.push(GptEpochStats {
                epoch: self.epoch,
                loss: total / dataset.len() as f64,
            });
        }
        Ok(())
    }
}

/// Teacher-forced next-code accuracy over both streams.
pub fn next_code_accuracy(model: &MotionGpt, dataset: &[GptClip]) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for clip in dataset {
        let steps = clip.steps();
        let mut tape = Tape::new();
        let leaves = model.params.leaves(&mut tape)?;
        let m = model.condition_for_clip(
            &mut tape,
            &leaves,
            clip.pretrained.as_ref(),
            clip.handcrafted.as_ref(),
            steps,
        )?;
        let m_next = tape.shift_rows_up(m, 1)?;
        let logits = model.forward(&mut tape, &leaves, m, m_next, &clip.upper_codes, &clip.lower_codes)?;
        for (logit_var, codes, vocab) in [
            (logits.upper, &clip.upper_codes, model.config.vocab_upper),
            (logits.lower, &clip.lower_codes, model.config.vocab_lower),
        ] {
            let data = tape.data(logit_var);
            for t in 0..steps - 1 {
                let row = &data[t * vocab..(t + 1) * vocab];
                let pred = argmax(row);
                if pred == codes[t + 1] {
                    correct += 1;
                }
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::dim("no predictions to score".to_string()));
    }
    Ok(correct as f64 / total as f64)
}

/// First index of the maximum; ties resolve to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}
