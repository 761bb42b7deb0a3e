//! Motion sequences and the upper/lower body partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// T×J×3 joint positions at a fixed frame rate, row-major
/// (frame, joint, axis).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frames: Vec<f64>,
    pub num_frames: usize,
    pub num_joints: usize,
    pub frame_rate: f64,
}

impl MotionSequence {
    pub fn new(num_frames: usize, num_joints: usize, frame_rate: f64, frames: Vec<f64>) -> Result<Self> {
        if num_frames == 0 || num_joints == 0 {
            return Err(Error::dim(format!(
                "motion sequence needs frames and joints, got {num_frames}x{num_joints}"
            )));
        }
        if frame_rate <= 0.0 {
            return Err(Error::config(format!("frame rate must be > 0, got {frame_rate}")));
        }
        if frames.len() != num_frames * num_joints * 3 {
            return Err(Error::dim(format!(
                "frame buffer length {} != {num_frames}x{num_joints}x3",
                frames.len()
            )));
        }
        if let Some(pos) = frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite coordinate at flat index {pos}"
            )));
        }
        Ok(MotionSequence {
            frames,
            num_frames,
            num_joints,
            frame_rate,
        })
    }

    pub fn zeros(num_frames: usize, num_joints: usize, frame_rate: f64) -> Self {
        MotionSequence {
            frames: vec![0.0; num_frames * num_joints * 3],
            num_frames,
            num_joints,
            frame_rate,
        }
    }

    #[inline]
    pub fn coord(&self, frame: usize, joint: usize, axis: usize) -> f64 {
        self.frames[(frame * self.num_joints + joint) * 3 + axis]
    }

    #[inline]
    pub fn coord_mut(&mut self, frame: usize, joint: usize, axis: usize) -> &mut f64 {
        &mut self.frames[(frame * self.num_joints + joint) * 3 + axis]
    }

    /// Flat feature width when viewed as a [T × J·3] matrix.
    pub fn feature_width(&self) -> usize {
        self.num_joints * 3
    }

    pub fn duration_seconds(&self) -> f64 {
        self.num_frames as f64 / self.frame_rate
    }
}

/// Disjoint, complete split of joint indices into upper and lower body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPartition {
    pub upper: Vec<usize>,
    pub lower: Vec<usize>,
}

impl JointPartition {
    /// First `upper` joints vs the rest.
    pub fn split_at(total_joints: usize, upper: usize) -> Self {
        JointPartition {
            upper: (0..upper).collect(),
            lower: (upper..total_joints).collect(),
        }
    }

    pub fn total_joints(&self) -> usize {
        self.upper.len() + self.lower.len()
    }

    pub fn validate(&self, num_joints: usize) -> Result<()> {
        if self.upper.is_empty() || self.lower.is_empty() {
            return Err(Error::config(
                "joint partition: both body halves need at least one joint".to_string(),
            ));
        }
        let mut seen = vec![false; num_joints];
        for &j in self.upper.iter().chain(&self.lower) {
            if j >= num_joints {
                return Err(Error::config(format!(
                    "joint partition references joint {j}, sequence has {num_joints}"
                )));
            }
            if seen[j] {
                return Err(Error::config(format!(
                    "joint partition assigns joint {j} twice"
                )));
            }
            seen[j] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!(
                "joint partition misses joint {missing}"
            )));
        }
        Ok(())
    }
}

fn gather_joints(p: &MotionSequence, joints: &[usize]) -> MotionSequence {
    let mut out = MotionSequence::zeros(p.num_frames, joints.len(), p.frame_rate);
    for t in 0..p.num_frames {
        for (slot, &j) in joints.iter().enumerate() {
            for a in 0..3 {
                *out.coord_mut(t, slot, a) = p.coord(t, j, a);
            }
        }
    }
    out
}

/// Split a sequence into upper- and lower-body sequences per the partition.
pub fn split_body(p: &MotionSequence, partition: &JointPartition) -> Result<(MotionSequence, MotionSequence)> {
    partition.validate(p.num_joints)?;
    Ok((gather_joints(p, &partition.upper), gather_joints(p, &partition.lower)))
}

/// Inverse of [`split_body`]: reassembles the original joint ordering
/// bit-exactly.
pub fn merge_body(
    upper: &MotionSequence,
    lower: &MotionSequence,
    partition: &JointPartition,
) -> Result<MotionSequence> {
    let num_joints = partition.total_joints();
    partition.validate(num_joints)?;
    if upper.num_joints != partition.upper.len() || lower.num_joints != partition.lower.len() {
        return Err(Error::dim(format!(
            "merge_body: joint counts {}/{} do not match partition {}/{}",
            upper.num_joints,
            lower.num_joints,
            partition.upper.len(),
            partition.lower.len()
        )));
    }
    if upper.num_frames != lower.num_frames {
        return Err(Error::dim(format!(
            "merge_body: frame counts differ: {} vs {}",
            upper.num_frames, lower.num_frames
        )));
    }
    let mut out = MotionSequence::zeros(upper.num_frames, num_joints, upper.frame_rate);
    for t in 0..out.num_frames {
        for (slot, &j) in partition.upper.iter().enumerate() {
            for a in 0..3 {
                *out.coord_mut(t, j, a) = upper.coord(t, slot, a);
            }
        }
        for (slot, &j) in partition.lower.iter().enumerate() {
            for a in 0..3 {
                *out.coord_mut(t, j, a) = lower.coord(t, slot, a);
            }
        }
    }
    Ok(out)
}
