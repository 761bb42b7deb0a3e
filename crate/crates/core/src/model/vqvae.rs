//! Vector-quantized motion autoencoder with frequency-complement blocks.
//!
//! The encoder is a stack of stride-2 1-D convolutions over the joint
//! channels; the decoder mirrors it with nearest-neighbor upsampling. A
//! small two-conv block (frequency complement) is added residually before
//! every decoder layer: the deepest one is fed by the quantized latents,
//! each later one by the previous decoder layer's output. Training pairs
//! each encoder layer output with the complement block of matching
//! temporal resolution under the focal frequency loss.

use serde::{Deserialize, Serialize};

use super::motion::MotionSequence;
use crate::error::{Error, Result};
use crate::optim::ParamStore;
use crate::rng::{salt_from_name, Rng};
use crate::spectral::{focal_frequency_loss_capture, focal_frequency_loss_frozen};
use crate::tensor::{DiffTensor, Tape, VarId};

/// Which half-body a model or code stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyTag {
    Upper,
    Lower,
}

impl BodyTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BodyTag::Upper => "upper",
            BodyTag::Lower => "lower",
        }
    }
}

/// Learnable codebook: each row is a quantization target for latents.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub entries: DiffTensor,
}

impl Codebook {
    pub fn new(entries: DiffTensor) -> Result<Self> {
        let (m, d) = entries.dims2()?;
        if m == 0 || d == 0 {
            return Err(Error::dim(format!("codebook must be non-empty, got {m}x{d}")));
        }
        Ok(Codebook { entries })
    }

    pub fn size(&self) -> usize {
        self.entries.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.entries.shape[1]
    }
}

/// Integer pose-code indices for one half-body stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoseCodeSequence {
    pub codes: Vec<usize>,
    pub codebook_id: BodyTag,
}

/// Nearest codebook row per latent row, ties broken by lowest index.
pub fn nearest_codes(e: &[f64], rows: usize, dim: usize, codebook: &[f64], m: usize) -> Vec<usize> {
    let mut codes = Vec::with_capacity(rows);
    for r in 0..rows {
        let latent = &e[r * dim..(r + 1) * dim];
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for entry in 0..m {
            let row = &codebook[entry * dim..(entry + 1) * dim];
            let mut dist = 0.0;
            for (a, b) in latent.iter().zip(row) {
                let d = a - b;
                dist += d * d;
            }
            if dist < best_dist {
                best_dist = dist;
                best = entry;
            }
        }
        codes.push(best);
    }
    codes
}

/// Quantize latents against a codebook: returns the snapped latents and
/// the argmin code per row.
pub fn quantize(e: &DiffTensor, codebook: &Codebook, body: BodyTag) -> Result<(DiffTensor, PoseCodeSequence)> {
    let (rows, dim) = e.dims2()?;
    if dim != codebook.dim() {
        return Err(Error::dim(format!(
            "quantize: latent dim {dim} != codebook dim {}",
            codebook.dim()
        )));
    }
    let codes = nearest_codes(&e.data, rows, dim, &codebook.entries.data, codebook.size());
    let mut data = Vec::with_capacity(rows * dim);
    for &c in &codes {
        data.extend_from_slice(&codebook.entries.data[c * dim..(c + 1) * dim]);
    }
    Ok((
        DiffTensor::from_vec(vec![rows, dim], data)?,
        PoseCodeSequence {
            codes,
            codebook_id: body,
        },
    ))
}

/// Codebook + commitment penalty for given latents and their quantized
/// counterparts: mean((sg[e] - e_q)²) + beta·mean((e - sg[e_q])²).
/// Returns the value and its gradient with respect to e_q (the codebook
/// side), which is 2·(e_q - e)/n elementwise with e frozen.
pub fn vq_penalty(e: &DiffTensor, e_q: &DiffTensor, beta: f64) -> Result<(f64, Vec<f64>)> {
    if e.shape != e_q.shape {
        return Err(Error::dim(format!(
            "vq penalty: latent shape {:?} != quantized shape {:?}",
            e.shape, e_q.shape
        )));
    }
    let inv_n = 1.0 / e.numel() as f64;
    let mut tape = Tape::new();
    let ev = tape.leaf(e.clone(), false)?;
    let qv = tape.leaf(e_q.clone(), true)?;

    let sg_e = tape.stop_gradient(ev)?;
    let d1 = tape.sub(qv, sg_e)?;
    let sq1 = tape.mul(d1, d1)?;
    let sum1 = tape.sum(sq1)?;
    let codebook_term = tape.scale(sum1, inv_n)?;

    let pinned = tape.constant(e_q.clone())?;
    let d2 = tape.sub(ev, pinned)?;
    let sq2 = tape.mul(d2, d2)?;
    let commit = tape.sum(sq2)?;
    let commit_term = tape.scale(commit, beta * inv_n)?;

    let total = tape.add(codebook_term, commit_term)?;
    let value = tape.scalar_value(total)?;
    tape.backward(total)?;
    let grad = tape
        .grad(qv)
        .map(|g| g.to_vec())
        .unwrap_or_else(|| vec![0.0; e_q.data.len()]);
    Ok((value, grad))
}

/// Exponential of the code-usage entropy; equals the number of uniformly
/// used codes. 1.0 means total collapse.
pub fn codebook_perplexity(codes: &[usize], m: usize) -> f64 {
    if codes.is_empty() {
        return 0.0;
    }
    let mut hist = vec![0usize; m];
    for &c in codes {
        hist[c] += 1;
    }
    let n = codes.len() as f64;
    let entropy: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    entropy.exp()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VqVaeConfig {
    /// Joints in this half-body; input channels are 3x this.
    pub input_joints: usize,
    pub codebook_size: usize,
    pub codebook_dim: usize,
    /// Encoder/decoder depth; total temporal scaling is 2^num_layers.
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
    /// Position / velocity / acceleration weights of the reconstruction term.
    pub rec_weights: [f64; 3],
    pub fcm_enabled: bool,
    pub ffl_enabled: bool,
}

impl VqVaeConfig {
    /// Small configuration for quick experiments on synthetic data. The
    /// spectral weights are scaled down from the full-scale 1 / 0.1
    /// defaults because the unnormalized transform magnitudes grow with
    /// the signal length.
    pub fn desk(input_joints: usize) -> Self {
        VqVaeConfig {
            input_joints,
            codebook_size: 64,
            codebook_dim: 32,
            num_layers: 3,
            channel_width: 32,
            enc_kernel: 4,
            dec_kernel: 3,
            fcm_kernel: 3,
            fcm_dropout: 0.2,
            leaky_slope: 0.2,
            alpha1: 3e-4,
            alpha2: 3e-5,
            commit_beta: 0.25,
            rec_weights: [1.0, 1.0, 1.0],
            fcm_enabled: true,
            ffl_enabled: true,
        }
    }

    pub fn downsample_rate(&self) -> usize {
        1 << self.num_layers
    }

    pub fn input_channels(&self) -> usize {
        self.input_joints * 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_joints == 0 {
            return Err(Error::config("input_joints must be >= 1".to_string()));
        }
        if self.codebook_size == 0 || self.codebook_dim == 0 {
            return Err(Error::config("codebook size and dim must be >= 1".to_string()));
        }
        if self.num_layers == 0 {
            return Err(Error::config("num_layers must be >= 1".to_string()));
        }
        if self.enc_kernel < 2 || !self.enc_kernel.is_multiple_of(2) {
            return Err(Error::config(format!(
                "enc_kernel must be even and >= 2 for exact 2x downsampling, got {}",
                self.enc_kernel
            )));
        }
        if self.dec_kernel.is_multiple_of(2) || self.fcm_kernel.is_multiple_of(2) {
            return Err(Error::config(
                "dec_kernel and fcm_kernel must be odd for length-preserving convs".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.fcm_dropout) {
            return Err(Error::config(format!(
                "fcm_dropout must be in [0, 1), got {}",
                self.fcm_dropout
            )));
        }
        if self.commit_beta < 0.0 || self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return Err(Error::config("loss weights must be >= 0".to_string()));
        }
        Ok(())
    }

    fn enc_in_channels(&self, layer: usize) -> usize {
        if layer == 1 {
            self.input_channels()
        } else {
            self.channel_width
        }
    }

    fn enc_out_channels(&self, layer: usize) -> usize {
        if layer == self.num_layers {
            self.codebook_dim
        } else {
            self.channel_width
        }
    }

    fn dec_in_channels(&self, layer: usize) -> usize {
        if layer == self.num_layers {
            self.codebook_dim
        } else {
            self.channel_width
        }
    }

    fn dec_out_channels(&self, layer: usize) -> usize {
        if layer == 1 {
            self.input_channels()
        } else {
            self.channel_width
        }
    }

    /// Channel count at the residual injection site before decoder layer i.
    fn fcm_channels(&self, layer: usize) -> usize {
        self.dec_in_channels(layer)
    }
}

struct ConvIdx {
    w: usize,
    b: usize,
}

struct FcmIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

struct Layout {
    enc: Vec<ConvIdx>,
    dec: Vec<ConvIdx>,
    fcm: Vec<FcmIdx>,
    codebook: usize,
}

/// Outputs of the encoder on a tape.
pub struct EncodeVars {
    /// Latents, [T_q × d].
    pub e: VarId,
    /// Per-layer post-activation outputs, channel-major [c_i × T/2^i].
    pub layer_outputs: Vec<VarId>,
}

/// Outputs of the tape-level quantizer.
pub struct QuantizeVars {
    /// Straight-through latents fed to the decoder: codebook values
    /// forward, identity gradient to `e` backward.
    pub straight_through: VarId,
    /// Differentiable codebook gather, used by the codebook loss term.
    pub embedded: VarId,
    pub codes: Vec<usize>,
}

/// Outputs of the decoder on a tape.
pub struct DecodeVars {
    /// Reconstruction, [T × J·3].
    pub recon: VarId,
    /// Complement-block outputs C_1..C_L (empty when disabled),
    /// channel-major, index i-1 holds C_i.
    pub fcm_outputs: Vec<VarId>,
}

/// Scalar loss pieces of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub ffl_recon: f64,
    pub ffl_layers: f64,
    pub perplexity: f64,
}

/// All quantities one forward pass holds constant under stop-gradient or
/// straight-through semantics: the spectral per-bin weights, the
/// encoder-layer reference values, the argmin pose codes, and the
/// quantized latents fed to the decoder. Re-supplying a snapshot to a
/// later evaluation yields the frozen surrogate whose finite differences
/// match autodiff exactly.
#[derive(Debug, Clone, Default)]
pub struct SpectralSnapshot {
    pub recon_weights: Option<Vec<f64>>,
    pub layer_refs: Vec<DiffTensor>,
    pub layer_weights: Vec<Vec<f64>>,
    pub quantizer_codes: Option<Vec<usize>>,
    pub quantized_values: Option<DiffTensor>,
}

pub struct VqVae {
    pub config: VqVaeConfig,
    pub body: BodyTag,
    pub seed: u64,
    pub params: ParamStore,
    layout: Layout,
}

impl VqVae {
    pub fn new(config: VqVaeConfig, body: BodyTag, seed: u64) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(seed);
        let mut params = ParamStore::new();

        let conv_param = |params: &mut ParamStore, name: String, c_out: usize, c_in: usize, k: usize, zero: bool| -> ConvIdx {
            let std = (2.0 / (c_in * k) as f64).sqrt();
            let w = if zero {
                DiffTensor::zeros(vec![c_out, c_in, k])
            } else {
                let mut rng = root.derive(salt_from_name(&format!("{name}.weight")));
                DiffTensor {
                    shape: vec![c_out, c_in, k],
                    data: rng.normal_vec(c_out * c_in * k, std),
                    grad: None,
                    requires_grad: false,
                }
            };
            let widx = params.add(&format!("{name}.weight"), w);
            let bidx = params.add(&format!("{name}.bias"), DiffTensor::zeros(vec![c_out]));
            ConvIdx { w: widx, b: bidx }
        };

        let mut enc = Vec::new();
        for i in 1..=config.num_layers {
            enc.push(conv_param(
                &mut params,
                format!("enc.{i}"),
                config.enc_out_channels(i),
                config.enc_in_channels(i),
                config.enc_kernel,
                false,
            ));
        }
        let mut dec = Vec::new();
        for i in 1..=config.num_layers {
            dec.push(conv_param(
                &mut params,
                format!("dec.{i}"),
                config.dec_out_channels(i),
                config.dec_in_channels(i),
                config.dec_kernel,
                false,
            ));
        }
        let mut fcm = Vec::new();
        if config.fcm_enabled {
            for i in 1..=config.num_layers {
                let ch = config.fcm_channels(i);
                let first = conv_param(&mut params, format!("fcm.{i}.conv1"), ch, ch, config.fcm_kernel, false);
                // Second conv starts at zero so the residual path is inert
                // until the spectral loss asks for it.
                let second =
                    conv_param(&mut params, format!("fcm.{i}.conv2"), ch, ch, config.fcm_kernel, true);
                fcm.push(FcmIdx {
                    w1: first.w,
                    b1: first.b,
                    w2: second.w,
                    b2: second.b,
                });
            }
        }
        let mut cb_rng = root.derive(salt_from_name("codebook"));
        let codebook = params.add(
            "codebook",
            DiffTensor {
                shape: vec![config.codebook_size, config.codebook_dim],
                data: cb_rng.uniform_vec(config.codebook_size * config.codebook_dim, -0.5, 0.5),
                grad: None,
                requires_grad: false,
            },
        );

        Ok(VqVae {
            config,
            body,
            seed,
            params,
            layout: Layout {
                enc,
                dec,
                fcm,
                codebook,
            },
        })
    }

    pub fn codebook(&self) -> Codebook {
        Codebook {
            entries: self.params.get(self.layout.codebook).clone(),
        }
    }

    /// Replace the codebook entries (used by checkpoint loading tests).
    pub fn codebook_param_index(&self) -> usize {
        self.layout.codebook
    }

    fn check_length(&self, t: usize) -> Result<()> {
        let r = self.config.downsample_rate();
        if !t.is_multiple_of(r) || t == 0 {
            return Err(Error::dim(format!(
                "sequence length {t} is not divisible by the downsampling rate {r}; \
                 crop the clip to a multiple of {r} frames"
            )));
        }
        Ok(())
    }

    fn motion_leaf(&self, tape: &mut Tape, p: &MotionSequence) -> Result<VarId> {
        if p.num_joints != self.config.input_joints {
            return Err(Error::dim(format!(
                "sequence has {} joints, model expects {}",
                p.num_joints, self.config.input_joints
            )));
        }
        self.check_length(p.num_frames)?;
        tape.constant_vec(vec![p.num_frames, p.feature_width()], p.frames.clone())
    }

    /// Encoder over a [T × J·3] tape tensor.
    pub fn encode_vars(&self, tape: &mut Tape, leaves: &[VarId], input: VarId) -> Result<EncodeVars> {
        let cfg = &self.config;
        let mut h = tape.transpose(input)?;
        let mut layer_outputs = Vec::with_capacity(cfg.num_layers);
        let pad = (cfg.enc_kernel - 2) / 2;
        for conv in &self.layout.enc {
            h = tape.conv1d(h, leaves[conv.w], leaves[conv.b], 2, pad)?;
            h = tape.leaky_relu(h, cfg.leaky_slope)?;
            layer_outputs.push(h);
        }
        let e = tape.transpose(h)?;
        Ok(EncodeVars { e, layer_outputs })
    }

    /// Quantizer on a tape: nearest codebook rows with straight-through
    /// gradient, plus a differentiable gather for the codebook loss term.
    pub fn quantize_vars(&self, tape: &mut Tape, leaves: &[VarId], e: VarId) -> Result<QuantizeVars> {
        let (rows, dim) = tape.value(e).dims2()?;
        if dim != self.config.codebook_dim {
            return Err(Error::dim(format!(
                "quantize: latent dim {dim} != codebook dim {}",
                self.config.codebook_dim
            )));
        }
        let cb_leaf = leaves[self.layout.codebook];
        let codes = nearest_codes(
            tape.data(e),
            rows,
            dim,
            tape.data(cb_leaf),
            self.config.codebook_size,
        );
        let embedded = tape.embed(cb_leaf, &codes)?;
        let values = DiffTensor::from_vec(vec![rows, dim], tape.data(embedded).to_vec())?;
        let straight_through = tape.straight_through(e, values)?;
        Ok(QuantizeVars {
            straight_through,
            embedded,
            codes,
        })
    }

    fn fcm_forward(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        layer: usize,
        x: VarId,
        dropout_salt: u64,
    ) -> Result<VarId> {
        let cfg = &self.config;
        let idx = &self.layout.fcm[layer - 1];
        let pad = (cfg.fcm_kernel - 1) / 2;
        let mut h = tape.conv1d(x, leaves[idx.w1], leaves[idx.b1], 1, pad)?;
        h = tape.leaky_relu(h, cfg.leaky_slope)?;
        let salt = salt_from_name(&format!("fcm.{layer}.dropout")) ^ dropout_salt;
        h = tape.dropout(h, cfg.fcm_dropout, salt)?;
        tape.conv1d(h, leaves[idx.w2], leaves[idx.b2], 1, pad)
    }

    /// Decoder over [T_q × d] latents; applies a complement block before
    /// every decoder layer when enabled.
    ///
    /// The returned `fcm_outputs` (the C_i paired with encoder outputs by
    /// the spectral loss) are computed from a stop-gradded copy of each
    /// block's input: the spectral terms tune the block weights without
    /// feeding back into the latents or earlier decoder activations,
    /// whose values double as the (frozen) references. The residual path
    /// itself stays fully differentiable so the reconstruction loss
    /// reaches everything. Values on both branches are identical.
    pub fn decode_vars(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        latents: VarId,
        dropout_salt: u64,
    ) -> Result<DecodeVars> {
        let cfg = &self.config;
        let (_, dim) = tape.value(latents).dims2()?;
        if dim != cfg.codebook_dim {
            return Err(Error::dim(format!(
                "decode: latent dim {dim} != codebook dim {}",
                cfg.codebook_dim
            )));
        }
        let mut h = tape.transpose(latents)?;
        let mut fcm_outputs = vec![None; cfg.num_layers];
        let pad = (cfg.dec_kernel - 1) / 2;
        for layer in (1..=cfg.num_layers).rev() {
            if cfg.fcm_enabled {
                let c = self.fcm_forward(tape, leaves, layer, h, dropout_salt)?;
                if cfg.ffl_enabled && cfg.alpha2 > 0.0 {
                    let h_sg = tape.stop_gradient(h)?;
                    let c_loss = self.fcm_forward(tape, leaves, layer, h_sg, dropout_salt)?;
                    fcm_outputs[layer - 1] = Some(c_loss);
                } else {
                    fcm_outputs[layer - 1] = Some(c);
                }
                h = tape.add(h, c).map_err(|e| {
                    Error::dim(format!("residual add before decoder layer {layer}: {e}"))
                })?;
            }
            let conv = &self.layout.dec[layer - 1];
            h = tape.upsample(h, 2)?;
            h = tape.conv1d(h, leaves[conv.w], leaves[conv.b], 1, pad)?;
            if layer > 1 {
                h = tape.leaky_relu(h, cfg.leaky_slope)?;
            }
        }
        let recon = tape.transpose(h)?;
        Ok(DecodeVars {
            recon,
            fcm_outputs: fcm_outputs.into_iter().flatten().collect(),
        })
    }

    /// Reconstruction term: smooth-L1 on positions plus first and second
    /// temporal differences, weighted per config.
    fn reconstruction_loss(&self, tape: &mut Tape, recon: VarId, target: VarId) -> Result<VarId> {
        let [wp, wv, wa] = self.config.rec_weights;
        let pos = tape.smooth_l1_mean(recon, target)?;
        let mut total = tape.scale(pos, wp)?;
        if wv != 0.0 || wa != 0.0 {
            let vel_r = tape.row_diff(recon)?;
            let vel_t = tape.row_diff(target)?;
            if wv != 0.0 {
                let vel = tape.smooth_l1_mean(vel_r, vel_t)?;
                let vel = tape.scale(vel, wv)?;
                total = tape.add(total, vel)?;
            }
            if wa != 0.0 {
                let acc_r = tape.row_diff(vel_r)?;
                let acc_t = tape.row_diff(vel_t)?;
                let acc = tape.smooth_l1_mean(acc_r, acc_t)?;
                let acc = tape.scale(acc, wa)?;
                total = tape.add(total, acc)?;
            }
        }
        Ok(total)
    }

    /// Codebook and commitment terms with stop-gradients:
    /// mean((sg[e] - e_q)²) + beta·mean((e - sg[e_q])²). Element means
    /// keep these on the same scale as the mean reconstruction terms
    /// regardless of latent size. The commitment reference is the pinned
    /// quantized value, identical to sg[e_q] at the point it was captured.
    fn vq_terms(
        &self,
        tape: &mut Tape,
        e: VarId,
        e_q_emb: VarId,
        pinned_ref: &DiffTensor,
    ) -> Result<(VarId, VarId)> {
        let inv_n = 1.0 / tape.value(e).numel() as f64;
        let sg_e = tape.stop_gradient(e)?;
        let d1 = tape.sub(e_q_emb, sg_e)?;
        let sq1 = tape.mul(d1, d1)?;
        let sum1 = tape.sum(sq1)?;
        let codebook_term = tape.scale(sum1, inv_n)?;

        let sg_q = tape.constant(pinned_ref.clone())?;
        let d2 = tape.sub(e, sg_q)?;
        let sq2 = tape.mul(d2, d2)?;
        let commit = tape.sum(sq2)?;
        let commit_term = tape.scale(commit, self.config.commit_beta * inv_n)?;
        Ok((codebook_term, commit_term))
    }

    /// Full training loss on a tape. Returns the scalar loss node and the
    /// evaluated breakdown.
    pub fn loss_vars(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        p: &MotionSequence,
        dropout_salt: u64,
    ) -> Result<(VarId, LossBreakdown)> {
        self.loss_vars_inner(tape, leaves, p, dropout_salt, false, None)
            .map(|(loss, breakdown, _)| (loss, breakdown))
    }

    /// Loss with the quantizer replaced by the identity (decoder consumes
    /// the latents directly; the codebook terms vanish). This graph is
    /// smooth end to end, so finite differences are meaningful for
    /// encoder-side parameters too.
    pub fn loss_vars_bypassed(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        p: &MotionSequence,
        dropout_salt: u64,
    ) -> Result<(VarId, LossBreakdown)> {
        self.loss_vars_inner(tape, leaves, p, dropout_salt, true, None)
            .map(|(loss, breakdown, _)| (loss, breakdown))
    }

    /// Loss with explicit control over the quantizer path and the frozen
    /// spectral quantities; returns the snapshot this pass used, for
    /// finite-difference re-evaluation.
    pub fn loss_vars_frozen(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        p: &MotionSequence,
        dropout_salt: u64,
        bypass_quantizer: bool,
        frozen: Option<&SpectralSnapshot>,
    ) -> Result<(VarId, LossBreakdown, SpectralSnapshot)> {
        self.loss_vars_inner(tape, leaves, p, dropout_salt, bypass_quantizer, frozen)
    }

    fn loss_vars_inner(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        p: &MotionSequence,
        dropout_salt: u64,
        bypass_quantizer: bool,
        frozen: Option<&SpectralSnapshot>,
    ) -> Result<(VarId, LossBreakdown, SpectralSnapshot)> {
        let cfg = &self.config;
        let input = self.motion_leaf(tape, p)?;
        let enc = self.encode_vars(tape, leaves, input)?;

        // (decoder input, differentiable gather, codes, pinned values)
        let (decoder_input, quant) = if bypass_quantizer {
            (enc.e, None)
        } else if let Some(f) = frozen.filter(|f| f.quantizer_codes.is_some()) {
            let codes = f.quantizer_codes.clone().expect("checked above");
            let pinned = f
                .quantized_values
                .clone()
                .ok_or_else(|| Error::config("snapshot misses quantized values".to_string()))?;
            let embedded = tape.embed(leaves[self.layout.codebook], &codes)?;
            let st = tape.straight_through(enc.e, pinned.clone())?;
            (st, Some((embedded, codes, pinned)))
        } else {
            let q = self.quantize_vars(tape, leaves, enc.e)?;
            let pinned = DiffTensor::from_vec(
                tape.shape(q.straight_through).to_vec(),
                tape.data(q.straight_through).to_vec(),
            )?;
            (q.straight_through, Some((q.embedded, q.codes, pinned)))
        };
        let dec = self.decode_vars(tape, leaves, decoder_input, dropout_salt)?;

        let recon_term = self.reconstruction_loss(tape, dec.recon, input)?;
        let mut total = recon_term;
        let mut breakdown = LossBreakdown {
            reconstruction: tape.scalar_value(recon_term)?,
            ..LossBreakdown::default()
        };
        let mut quant_snapshot = (None, None);
        if let Some((embedded, codes, pinned)) = &quant {
            let (codebook_term, commit_term) = self.vq_terms(tape, enc.e, *embedded, pinned)?;
            total = tape.add(total, codebook_term)?;
            total = tape.add(total, commit_term)?;
            breakdown.codebook = tape.scalar_value(codebook_term)?;
            breakdown.commitment = tape.scalar_value(commit_term)?;
            breakdown.perplexity = codebook_perplexity(codes, cfg.codebook_size);
            quant_snapshot = (Some(codes.clone()), Some(pinned.clone()));
        }

        let mut snapshot = SpectralSnapshot {
            quantizer_codes: quant_snapshot.0,
            quantized_values: quant_snapshot.1,
            ..SpectralSnapshot::default()
        };
        if cfg.ffl_enabled && (cfg.alpha1 > 0.0 || cfg.alpha2 > 0.0) {
            if cfg.alpha1 > 0.0 {
                // Spectra of the reconstruction against the input, per
                // joint-coordinate channel over time.
                let target_ch = {
                    let (t, c) = tape.value(input).dims2()?;
                    let mut data = vec![0.0; t * c];
                    let src = tape.data(input);
                    for i in 0..t {
                        for j in 0..c {
                            data[j * t + i] = src[i * c + j];
                        }
                    }
                    DiffTensor::from_vec(vec![c, t], data)?
                };
                let recon_ch = tape.transpose(dec.recon)?;
                let (ffl_p, weights) = match frozen.and_then(|f| f.recon_weights.as_ref()) {
                    Some(w) => (
                        focal_frequency_loss_frozen(tape, &target_ch, recon_ch, w)?,
                        w.clone(),
                    ),
                    None => focal_frequency_loss_capture(tape, &target_ch, recon_ch)?,
                };
                snapshot.recon_weights = Some(weights);
                breakdown.ffl_recon = tape.scalar_value(ffl_p)?;
                let ffl_p = tape.scale(ffl_p, cfg.alpha1)?;
                total = tape.add(total, ffl_p)?;
            }
            if cfg.alpha2 > 0.0 && cfg.fcm_enabled {
                if dec.fcm_outputs.len() != enc.layer_outputs.len() {
                    return Err(Error::config(format!(
                        "cannot pair {} encoder outputs with {} complement outputs",
                        enc.layer_outputs.len(),
                        dec.fcm_outputs.len()
                    )));
                }
                let mut layer_sum = 0.0;
                for (idx, (a_var, c_var)) in
                    enc.layer_outputs.iter().zip(&dec.fcm_outputs).enumerate()
                {
                    let a_shape = tape.shape(*a_var).to_vec();
                    let c_shape = tape.shape(*c_var);
                    if a_shape != c_shape {
                        return Err(Error::config(format!(
                            "encoder output {a_shape:?} does not pair with complement output {c_shape:?}"
                        )));
                    }
                    // The layer reference is a constant by contract; under
                    // a frozen snapshot the stored values stand in.
                    let a_const = match frozen {
                        Some(f) => f
                            .layer_refs
                            .get(idx)
                            .cloned()
                            .ok_or_else(|| Error::config("snapshot misses a layer reference".to_string()))?,
                        None => DiffTensor::from_vec(a_shape, tape.data(*a_var).to_vec())?,
                    };
                    let (ffl_i, weights) = match frozen.map(|f| &f.layer_weights[idx]) {
                        Some(w) => (
                            focal_frequency_loss_frozen(tape, &a_const, *c_var, w)?,
                            w.clone(),
                        ),
                        None => focal_frequency_loss_capture(tape, &a_const, *c_var)?,
                    };
                    snapshot.layer_refs.push(a_const);
                    snapshot.layer_weights.push(weights);
                    layer_sum += tape.scalar_value(ffl_i)?;
                    let ffl_i = tape.scale(ffl_i, cfg.alpha2)?;
                    total = tape.add(total, ffl_i)?;
                }
                breakdown.ffl_layers = layer_sum;
            }
        }

        breakdown.total = tape.scalar_value(total)?;
        Ok((total, breakdown, snapshot))
    }

    /// Encoder latents for a clip (no gradients).
    pub fn encode(&self, p: &MotionSequence) -> Result<DiffTensor> {
        let mut tape = Tape::new();
        let leaves = self.params.leaves(&mut tape)?;
        let input = self.motion_leaf(&mut tape, p)?;
        let enc = self.encode_vars(&mut tape, &leaves, input)?;
        Ok(tape.value(enc.e).clone())
    }

    /// Pose codes for a clip: encode then quantize.
    pub fn encode_codes(&self, p: &MotionSequence) -> Result<PoseCodeSequence> {
        let e = self.encode(p)?;
        let (_, codes) = quantize(&e, &self.codebook(), self.body)?;
        Ok(codes)
    }

    /// Decode a code sequence into motion at the given frame rate.
    pub fn decode_codes(&self, codes: &PoseCodeSequence, frame_rate: f64) -> Result<MotionSequence> {
        let m = self.config.codebook_size;
        if let Some(&bad) = codes.codes.iter().find(|&&c| c >= m) {
            return Err(Error::index(format!("pose code {bad} out of range [0, {m})")));
        }
        if codes.codes.is_empty() {
            return Err(Error::dim("decode: empty code sequence".to_string()));
        }
        let cb = self.codebook();
        let dim = cb.dim();
        let mut data = Vec::with_capacity(codes.codes.len() * dim);
        for &c in &codes.codes {
            data.extend_from_slice(&cb.entries.data[c * dim..(c + 1) * dim]);
        }
        let latents = DiffTensor::from_vec(vec![codes.codes.len(), dim], data)?;
        self.decode_latents(&latents, frame_rate)
    }

    pub fn decode_latents(&self, latents: &DiffTensor, frame_rate: f64) -> Result<MotionSequence> {
        let mut tape = Tape::new();
        let leaves = self.params.leaves(&mut tape)?;
        let lv = tape.leaf(latents.clone(), false)?;
        let dec = self.decode_vars(&mut tape, &leaves, lv, 0)?;
        let out = tape.value(dec.recon);
        let (t, _) = out.dims2()?;
        MotionSequence::new(t, self.config.input_joints, frame_rate, out.data.clone())
    }

    /// Round-trip a clip through encode / quantize / decode (no gradients).
    pub fn reconstruct(&self, p: &MotionSequence) -> Result<MotionSequence> {
        let mut tape = Tape::new();
        let leaves = self.params.leaves(&mut tape)?;
        let input = self.motion_leaf(&mut tape, p)?;
        let enc = self.encode_vars(&mut tape, &leaves, input)?;
        let quant = self.quantize_vars(&mut tape, &leaves, enc.e)?;
        let dec = self.decode_vars(&mut tape, &leaves, quant.straight_through, 0)?;
        let out = tape.value(dec.recon);
        MotionSequence::new(p.num_frames, p.num_joints, p.frame_rate, out.data.clone())
    }
}
