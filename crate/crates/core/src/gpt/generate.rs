//! Greedy autoregressive decoding of both code streams.

use super::model::MotionGpt;
use super::train::argmax;
use super::FeatureTrack;
use crate::error::{Error, Result};
use crate::model::{BodyTag, PoseCodeSequence};
use crate::tensor::Tape;

/// Generate `steps` new codes per stream from the initial codes, reading
/// the conditioning tracks. Decoding is top-1 (argmax, ties to the lowest
/// index), so identical inputs produce identical outputs. The tracks must
/// cover at least `steps + 1` pose-code steps because the model reads
/// music one step ahead.
pub fn generate(
    model: &MotionGpt,
    pretrained: Option<&FeatureTrack>,
    handcrafted: Option<&FeatureTrack>,
    init_upper: usize,
    init_lower: usize,
    steps: usize,
) -> Result<(PoseCodeSequence, PoseCodeSequence)> {
    let cfg = &model.config;
    if steps == 0 {
        return Err(Error::config("generate: steps must be >= 1".to_string()));
    }
    if init_upper >= cfg.vocab_upper || init_lower >= cfg.vocab_lower {
        return Err(Error::index(format!(
            "initial codes ({init_upper}, {init_lower}) outside vocabularies ({}, {})",
            cfg.vocab_upper, cfg.vocab_lower
        )));
    }

    // Total feature steps available, bounded by every supplied track.
    let feature_steps = {
        let mut avail = usize::MAX;
        if cfg.uses_pretrained() {
            let track = pretrained.ok_or_else(|| {
                Error::config("model expects a pretrained feature track".to_string())
            })?;
            avail = avail.min(track.rows / cfg.stride_product());
        }
        if cfg.uses_handcrafted() {
            let track = handcrafted.ok_or_else(|| {
                Error::config("model expects a handcrafted feature track".to_string())
            })?;
            avail = avail.min(track.rows);
        }
        avail
    };
    if steps + 1 > feature_steps {
        return Err(Error::dim(format!(
            "generating {steps} steps needs features for {} pose-code steps, tracks cover {feature_steps}",
            steps + 1
        )));
    }
    if steps + 1 > cfg.context {
        return Err(Error::dim(format!(
            "generating {steps} steps exceeds the model context of {}",
            cfg.context
        )));
    }

    // The conditioning matrix is a pure function of the tracks; build it
    // once over the full feature length.
    let mut tape = Tape::new();
    let leaves = model.params.leaves(&mut tape)?;
    let m_full = model.condition_for_clip(&mut tape, &leaves, pretrained, handcrafted, feature_steps)?;

    let mut upper = vec![init_upper];
    let mut lower = vec![init_lower];
    for _ in 0..steps {
        let prefix = upper.len();
        let m = tape.slice_rows(m_full, 0, prefix)?;
        let m_next = tape.slice_rows(m_full, 1, prefix)?;
        let logits = model.forward(&mut tape, &leaves, m, m_next, &upper, &lower)?;
        let vu = cfg.vocab_upper;
        let vl = cfg.vocab_lower;
        let last_u = &tape.data(logits.upper)[(prefix - 1) * vu..prefix * vu];
        let next_u = argmax(last_u);
        let last_l = &tape.data(logits.lower)[(prefix - 1) * vl..prefix * vl];
        let next_l = argmax(last_l);
        upper.push(next_u);
        lower.push(next_l);
    }

    Ok((
        PoseCodeSequence {
            codes: upper[1..].to_vec(),
            codebook_id: BodyTag::Upper,
        },
        PoseCodeSequence {
            codes: lower[1..].to_vec(),
            codebook_id: BodyTag::Lower,
        },
    ))
}
