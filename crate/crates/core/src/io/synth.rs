//! Synthetic motion and feature generation with controlled spectral
//! content and known ground-truth beats.
//!
//! Joints follow smooth sinusoids whose speed minima land on a declared
//! beat grid; optional bursts superimpose short high-frequency segments
//! that raise the local speed variance. Every output is a pure function
//! of (spec, seed).

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gpt::{FeatureTrack, TrackKind};
use crate::model::MotionSequence;
use crate::rng::{salt_from_name, splitmix64, Rng};

/// Half-width of the burst envelope in seconds.
const BURST_HALF_WIDTH: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    /// Center of the burst, seconds from clip start.
    pub time: f64,
    pub joint: usize,
    pub amplitude: f64,
    /// Oscillation frequency inside the burst, Hz.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub duration_seconds: f64,
    pub frame_rate: f64,
    pub joints: usize,
    /// Per-joint base oscillation frequency in Hz; snapped to a multiple
    /// of 1/(2·beat_period) so speed minima coincide with the beat grid.
    pub base_frequencies: Vec<f64>,
    pub bursts: Vec<BurstSpec>,
    /// Beat grid period in seconds.
    pub beat_period: f64,
    /// Global multiplier on the drawn joint amplitudes; zero yields a
    /// static pose (bursts keep their own amplitudes).
    #[serde(default = "default_amplitude_scale")]
    pub amplitude_scale: f64,
    pub seed: u64,
}

fn default_amplitude_scale() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.duration_seconds <= 0.0 || self.frame_rate <= 0.0 {
            return Err(Error::config(format!(
                "duration {}s at {} fps is not generatable",
                self.duration_seconds, self.frame_rate
            )));
        }
        if self.joints == 0 {
            return Err(Error::config("spec needs at least one joint".to_string()));
        }
        if self.base_frequencies.len() != self.joints {
            return Err(Error::config(format!(
                "{} base frequencies for {} joints",
                self.base_frequencies.len(),
                self.joints
            )));
        }
        let nyquist = self.frame_rate / 2.0;
        for (j, &f) in self.base_frequencies.iter().enumerate() {
            if f <= 0.0 || f >= nyquist {
                return Err(Error::config(format!(
                    "joint {j} base frequency {f} Hz outside (0, {nyquist}) at {} fps",
                    self.frame_rate
                )));
            }
        }
        for (i, b) in self.bursts.iter().enumerate() {
            if b.joint >= self.joints {
                return Err(Error::config(format!(
                    "burst {i} references joint {} of {}",
                    b.joint, self.joints
                )));
            }
            if b.time < 0.0 || b.time > self.duration_seconds {
                return Err(Error::config(format!(
                    "burst {i} at {}s outside clip of {}s",
                    b.time, self.duration_seconds
                )));
            }
            if b.frequency <= 0.0 || b.frequency >= nyquist {
                return Err(Error::config(format!(
                    "burst {i} frequency {} Hz aliases at {} fps",
                    b.frequency, self.frame_rate
                )));
            }
        }
        if self.beat_period <= 0.0 {
            return Err(Error::config(format!(
                "beat period must be > 0, got {}",
                self.beat_period
            )));
        }
        if self.amplitude_scale < 0.0 {
            return Err(Error::config(format!(
                "amplitude scale must be >= 0, got {}",
                self.amplitude_scale
            )));
        }
        Ok(())
    }

    /// Frame count rounded up to a multiple of `round_to`.
    fn padded_frames(&self, round_to: usize) -> usize {
        let t0 = (self.duration_seconds * self.frame_rate).round() as usize;
        let t0 = t0.max(round_to.max(1));
        t0.div_ceil(round_to.max(1)) * round_to.max(1)
    }
}

fn hann_envelope(offset: f64) -> f64 {
    if offset.abs() >= BURST_HALF_WIDTH {
        0.0
    } else {
        0.5 * (1.0 + (PI * offset / BURST_HALF_WIDTH).cos())
    }
}

/// Ground-truth beat grid for the effective (padded) duration.
fn beat_grid(beat_period: f64, duration: f64, frame_rate: f64) -> Vec<f64> {
    let mut beats = Vec::new();
    let mut k = 1usize;
    // keep a margin so every beat has room for a detectable speed dip
    while k as f64 * beat_period < duration - 1.0 / frame_rate {
        beats.push(k as f64 * beat_period);
        k += 1;
    }
    beats
}

/// Generate a clip. The frame count is padded upward to a multiple of
/// `round_to` (pass the model's downsampling rate, or 1). Returns the
/// motion and the ground-truth beat times in seconds.
pub fn generate_motion(spec: &SyntheticSpec, round_to: usize) -> Result<(MotionSequence, Vec<f64>)> {
    spec.validate()?;
    let t_frames = spec.padded_frames(round_to);
    let duration = t_frames as f64 / spec.frame_rate;
    let root = Rng::new(spec.seed);
    let axis_scale = [1.0, 0.6, 0.3];

    let mut p = MotionSequence::zeros(t_frames, spec.joints, spec.frame_rate);
    for j in 0..spec.joints {
        // Snap to the beat grid: speed zero at multiples of beat_period.
        let multiple = (spec.base_frequencies[j] * 2.0 * spec.beat_period)
            .round()
            .max(1.0);
        let freq = multiple / (2.0 * spec.beat_period);
        for a in 0..3 {
            let mut rng = root.derive(salt_from_name(&format!("joint.{j}.axis.{a}")));
            let amp = rng.uniform(0.2, 0.8) * spec.amplitude_scale;
            let center = rng.uniform(-1.0, 1.0);
            for t in 0..t_frames {
                let time = t as f64 / spec.frame_rate;
                // phase pi/2 puts the speed zeros on the grid
                *p.coord_mut(t, j, a) = center + amp * (2.0 * PI * freq * time + PI / 2.0).sin();
            }
        }
    }
    for b in &spec.bursts {
        for t in 0..t_frames {
            let time = t as f64 / spec.frame_rate;
            let offset = time - b.time;
            let w = hann_envelope(offset);
            if w == 0.0 {
                continue;
            }
            let wave = b.amplitude * w * (2.0 * PI * b.frequency * offset).sin();
            for (a, scale) in axis_scale.iter().enumerate() {
                *p.coord_mut(t, b.joint, a) += wave * scale;
            }
        }
    }
    let beats = beat_grid(spec.beat_period, duration, spec.frame_rate);
    Ok((p, beats))
}

/// Deterministic conditioning track: channel 0 pulses at beats, channel 1
/// flags bursts, higher channels carry beat-phase sinusoids.
pub fn generate_feature_track(
    spec: &SyntheticSpec,
    rate: f64,
    dims: usize,
    round_to: usize,
    kind: TrackKind,
) -> Result<FeatureTrack> {
    spec.validate()?;
    if rate <= 0.0 || dims == 0 {
        return Err(Error::config(format!(
            "feature track needs positive rate and dims, got rate {rate}, dims {dims}"
        )));
    }
    let t_frames = spec.padded_frames(round_to);
    let duration = t_frames as f64 / spec.frame_rate;
    let rows_f = duration * rate;
    let rows = rows_f.round() as usize;
    if (rows_f - rows as f64).abs() > 1e-6 || rows == 0 {
        return Err(Error::config(format!(
            "rate {rate} Hz does not tile a {duration}s clip into whole rows"
        )));
    }
    let beats = beat_grid(spec.beat_period, duration, spec.frame_rate);
    let root = Rng::new(splitmix64(spec.seed ^ salt_from_name("feature-track")));
    let phases: Vec<f64> = (0..dims)
        .map(|d| root.derive(d as u64).uniform(0.0, 2.0 * PI))
        .collect();

    let mut values = vec![0.0; rows * dims];
    for row in 0..rows {
        let time = row as f64 / rate;
        let out = &mut values[row * dims..(row + 1) * dims];
        out[0] = if beats.iter().any(|b| (time - b).abs() <= 1.0 / rate + 1e-9) {
            1.0
        } else {
            0.0
        };
        if dims > 1 {
            out[1] = if spec
                .bursts
                .iter()
                .any(|b| (time - b.time).abs() <= BURST_HALF_WIDTH)
            {
                1.0
            } else {
                0.0
            };
        }
        for d in 2..dims {
            let harmonic = 1.0 + (d - 2) as f64 % 3.0;
            out[d] = (2.0 * PI * harmonic * time / spec.beat_period + phases[d]).sin();
        }
    }
    FeatureTrack::new(rows, dims, rate, kind, values)
}

/// A whole synthetic corpus: per-clip seeds, optional per-clip random
/// bursts, and varied base frequencies derived from one base spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub clips: usize,
    pub base: SyntheticSpec,
    pub pretrained_rate: f64,
    pub pretrained_dims: usize,
    pub handcrafted_dims: usize,
    /// Model downsampling rate; clip lengths are padded to multiples of it.
    pub downsample_rate: usize,
    /// Random bursts added per clip (on top of base.bursts).
    pub auto_bursts: usize,
    /// Re-draw per-joint frequency multiples per clip.
    pub vary_frequencies: bool,
}

impl DatasetSpec {
    pub fn desk(seed: u64) -> Self {
        DatasetSpec {
            clips: 5,
            base: SyntheticSpec {
                duration_seconds: 4.0,
                frame_rate: 60.0,
                joints: 12,
                base_frequencies: vec![1.0; 12],
                bursts: Vec::new(),
                beat_period: 0.5,
                amplitude_scale: 1.0,
                seed,
            },
            pretrained_rate: 75.0,
            pretrained_dims: 8,
            handcrafted_dims: 5,
            downsample_rate: 8,
            auto_bursts: 0,
            vary_frequencies: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clips == 0 {
            return Err(Error::config("dataset needs at least one clip".to_string()));
        }
        if self.downsample_rate == 0 {
            return Err(Error::config("downsample_rate must be >= 1".to_string()));
        }
        if self.pretrained_dims < 2 || self.handcrafted_dims == 0 {
            return Err(Error::config(
                "feature tracks need pretrained_dims >= 2 and handcrafted_dims >= 1".to_string(),
            ));
        }
        self.base.validate()
    }

    /// The fully resolved spec for one clip; a pure function of the
    /// dataset spec and the clip index.
    pub fn clip_spec(&self, index: usize) -> Result<SyntheticSpec> {
        self.validate()?;
        if index >= self.clips {
            return Err(Error::config(format!(
                "clip index {index} outside dataset of {}",
                self.clips
            )));
        }
        let mut spec = self.base.clone();
        spec.seed = splitmix64(self.base.seed ^ ((index as u64 + 1) << 32));
        let root = Rng::new(spec.seed);
        if self.vary_frequencies {
            let mut rng = root.derive(salt_from_name("clip-frequencies"));
            for f in &mut spec.base_frequencies {
                let multiple = 1.0 + (rng.next_u64() % 3) as f64;
                *f = multiple / (2.0 * spec.beat_period);
            }
        }
        if self.auto_bursts > 0 {
            let mut rng = root.derive(salt_from_name("clip-bursts"));
            let nyquist = spec.frame_rate / 2.0;
            for _ in 0..self.auto_bursts {
                let margin = BURST_HALF_WIDTH + 0.05;
                spec.bursts.push(BurstSpec {
                    time: rng.uniform(margin, spec.duration_seconds - margin),
                    joint: (rng.next_u64() % spec.joints as u64) as usize,
                    amplitude: rng.uniform(0.4, 0.9),
                    frequency: rng.uniform(nyquist * 0.25, nyquist * 0.45),
                });
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Code-rate of the pose streams implied by this corpus.
    pub fn code_rate(&self) -> f64 {
        self.base.frame_rate / self.downsample_rate as f64
    }

    pub fn clip_motion(&self, index: usize) -> Result<(MotionSequence, Vec<f64>)> {
        generate_motion(&self.clip_spec(index)?, self.downsample_rate)
    }

    pub fn clip_pretrained_track(&self, index: usize) -> Result<FeatureTrack> {
        generate_feature_track(
            &self.clip_spec(index)?,
            self.pretrained_rate,
            self.pretrained_dims,
            self.downsample_rate,
            TrackKind::Pretrained,
        )
    }

    pub fn clip_handcrafted_track(&self, index: usize) -> Result<FeatureTrack> {
        generate_feature_track(
            &self.clip_spec(index)?,
            self.code_rate(),
            self.handcrafted_dims,
            self.downsample_rate,
            TrackKind::Handcrafted,
        )
    }
}
