//! Transformer over interleaved (music, upper-code, lower-code) steps.
//!
//! Each position t combines the code embeddings of both streams at t with
//! a projection of the music features at t and t+1, so logits at t may
//! read music one step ahead but pose codes only up to t. A strict causal
//! mask keeps logits at t exactly invariant to any later code.

use super::{FeatureSet, FeatureTrack, GptConfig, TrackKind};
use crate::error::{Error, Result};
use crate::optim::ParamStore;
use crate::rng::{salt_from_name, Rng};
use crate::tensor::{DiffTensor, Tape, VarId};

struct BlockIdx {
    ln1_gamma: usize,
    ln1_beta: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_gamma: usize,
    ln2_beta: usize,
    mlp_w1: usize,
    mlp_b1: usize,
    mlp_w2: usize,
    mlp_b2: usize,
}

struct GptLayout {
    embed_upper: usize,
    embed_lower: usize,
    embed_position: usize,
    downsample: Vec<(usize, usize)>,
    music_proj_w: usize,
    music_proj_b: usize,
    blocks: Vec<BlockIdx>,
    final_gamma: usize,
    final_beta: usize,
    head_upper_w: usize,
    head_upper_b: usize,
    head_lower_w: usize,
    head_lower_b: usize,
}

/// Next-step logits for both streams, [T × vocab] each.
pub struct ForwardLogits {
    pub upper: VarId,
    pub lower: VarId,
}

pub struct MotionGpt {
    pub config: GptConfig,
    pub seed: u64,
    pub params: ParamStore,
    layout: GptLayout,
}

impl MotionGpt {
    pub fn new(config: GptConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(seed);
        let mut params = ParamStore::new();

        let normal = |params: &mut ParamStore, name: String, shape: Vec<usize>, std: f64| -> usize {
            let mut rng = root.derive(salt_from_name(&name));
            let n: usize = shape.iter().product();
            params.add(
                &name,
                DiffTensor {
                    shape,
                    data: rng.normal_vec(n, std),
                    grad: None,
                    requires_grad: false,
                },
            )
        };
        let zeros = |params: &mut ParamStore, name: String, shape: Vec<usize>| -> usize {
            params.add(&name, DiffTensor::zeros(shape))
        };
        let ones = |params: &mut ParamStore, name: String, len: usize| -> usize {
            params.add(
                &name,
                DiffTensor {
                    shape: vec![len],
                    data: vec![1.0; len],
                    grad: None,
                    requires_grad: false,
                },
            )
        };

        let w = config.width;
        let embed_upper = normal(
            &mut params,
            "embed.upper".to_string(),
            vec![config.vocab_upper, w],
            0.02,
        );
        let embed_lower = normal(
            &mut params,
            "embed.lower".to_string(),
            vec![config.vocab_lower, w],
            0.02,
        );
        let embed_position = normal(
            &mut params,
            "embed.position".to_string(),
            vec![config.context, w],
            0.02,
        );

        let mut downsample = Vec::new();
        if config.uses_pretrained() {
            let mut c_in = config.pretrained_dim;
            for (i, &stride) in config.strides.iter().enumerate() {
                let std = (2.0 / (c_in * stride) as f64).sqrt();
                let wi = normal(
                    &mut params,
                    format!("downsample.{i}.weight"),
                    vec![config.music_width, c_in, stride],
                    std,
                );
                let bi = zeros(
                    &mut params,
                    format!("downsample.{i}.bias"),
                    vec![config.music_width],
                );
                downsample.push((wi, bi));
                c_in = config.music_width;
            }
        }

        let cond = config.condition_dim();
        let music_proj_w = normal(
            &mut params,
            "music.proj.weight".to_string(),
            vec![2 * cond, w],
            (1.0 / (2 * cond) as f64).sqrt(),
        );
        let music_proj_b = zeros(&mut params, "music.proj.bias".to_string(), vec![w]);

        let proj_std = (1.0 / w as f64).sqrt();
        let mut blocks = Vec::new();
        for l in 0..config.layers {
            let b = BlockIdx {
                ln1_gamma: ones(&mut params, format!("block.{l}.ln1.gamma"), w),
                ln1_beta: zeros(&mut params, format!("block.{l}.ln1.beta"), vec![w]),
                wq: normal(&mut params, format!("block.{l}.attn.wq"), vec![w, w], proj_std),
                bq: zeros(&mut params, format!("block.{l}.attn.bq"), vec![w]),
                wk: normal(&mut params, format!("block.{l}.attn.wk"), vec![w, w], proj_std),
                bk: zeros(&mut params, format!("block.{l}.attn.bk"), vec![w]),
                wv: normal(&mut params, format!("block.{l}.attn.wv"), vec![w, w], proj_std),
                bv: zeros(&mut params, format!("block.{l}.attn.bv"), vec![w]),
                wo: normal(&mut params, format!("block.{l}.attn.wo"), vec![w, w], proj_std),
                bo: zeros(&mut params, format!("block.{l}.attn.bo"), vec![w]),
                ln2_gamma: ones(&mut params, format!("block.{l}.ln2.gamma"), w),
                ln2_beta: zeros(&mut params, format!("block.{l}.ln2.beta"), vec![w]),
                mlp_w1: normal(
                    &mut params,
                    format!("block.{l}.mlp.w1"),
                    vec![w, 4 * w],
                    proj_std,
                ),
                mlp_b1: zeros(&mut params, format!("block.{l}.mlp.b1"), vec![4 * w]),
                mlp_w2: normal(
                    &mut params,
                    format!("block.{l}.mlp.w2"),
                    vec![4 * w, w],
                    (1.0 / (4 * w) as f64).sqrt(),
                ),
                mlp_b2: zeros(&mut params, format!("block.{l}.mlp.b2"), vec![w]),
            };
            blocks.push(b);
        }

        let final_gamma = ones(&mut params, "final.ln.gamma".to_string(), w);
        let final_beta = zeros(&mut params, "final.ln.beta".to_string(), vec![w]);
        let head_upper_w = normal(
            &mut params,
            "head.upper.weight".to_string(),
            vec![w, config.vocab_upper],
            proj_std,
        );
        let head_upper_b = zeros(&mut params, "head.upper.bias".to_string(), vec![config.vocab_upper]);
        let head_lower_w = normal(
            &mut params,
            "head.lower.weight".to_string(),
            vec![w, config.vocab_lower],
            proj_std,
        );
        let head_lower_b = zeros(&mut params, "head.lower.bias".to_string(), vec![config.vocab_lower]);

        Ok(MotionGpt {
            config,
            seed,
            params,
            layout: GptLayout {
                embed_upper,
                embed_lower,
                embed_position,
                downsample,
                music_proj_w,
                music_proj_b,
                blocks,
                final_gamma,
                final_beta,
                head_upper_w,
                head_upper_b,
                head_lower_w,
                head_lower_b,
            },
        })
    }

    /// Reduce a pretrained-rate track to the pose-code rate through the
    /// learned strided convs. The track length must be exactly
    /// `expected_steps × product(strides)`.
    pub fn downsample_features(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        track: &FeatureTrack,
        expected_steps: usize,
    ) -> Result<VarId> {
        let cfg = &self.config;
        if track.kind != TrackKind::Pretrained {
            return Err(Error::config(
                "downsample_features expects a pretrained-kind track".to_string(),
            ));
        }
        if track.dims != cfg.pretrained_dim {
            return Err(Error::dim(format!(
                "track has {} feature dims, model expects {}",
                track.dims, cfg.pretrained_dim
            )));
        }
        let needed = expected_steps * cfg.stride_product();
        if track.rows != needed {
            return Err(Error::dim(format!(
                "track has {} rows; needs exactly {needed} rows to reach {expected_steps} \
                 pose-code steps through strides {:?}",
                track.rows, cfg.strides
            )));
        }
        let rows = tape.constant_vec(vec![track.rows, track.dims], track.values.clone())?;
        let mut h = tape.transpose(rows)?;
        for (i, (wi, bi)) in self.layout.downsample.iter().enumerate() {
            let stride = cfg.strides[i];
            h = tape.conv1d(h, leaves[*wi], leaves[*bi], stride, 0)?;
            h = tape.leaky_relu(h, cfg.leaky_slope)?;
        }
        tape.transpose(h)
    }

    /// Concatenate conditioning blocks in the feature dimension,
    /// pretrained block first. Either side may be absent per the
    /// configured feature set.
    pub fn build_condition(
        &self,
        tape: &mut Tape,
        pretrained_ds: Option<VarId>,
        handcrafted: Option<VarId>,
    ) -> Result<VarId> {
        match (self.config.feature_set, pretrained_ds, handcrafted) {
            (FeatureSet::Both, Some(p), Some(h)) => {
                let (pr, _) = tape.value(p).dims2()?;
                let (hr, _) = tape.value(h).dims2()?;
                if pr != hr {
                    return Err(Error::dim(format!(
                        "condition blocks disagree on steps: pretrained {pr} vs handcrafted {hr}"
                    )));
                }
                tape.concat_cols(&[p, h])
            }
            (FeatureSet::Pretrained, Some(p), _) => Ok(p),
            (FeatureSet::Handcrafted, _, Some(h)) => Ok(h),
            (set, _, _) => Err(Error::config(format!(
                "feature set {set:?} is missing a required conditioning block"
            ))),
        }
    }

    fn check_codes(&self, codes: &[usize], vocab: usize, stream: &str) -> Result<()> {
        if let Some(&bad) = codes.iter().find(|&&c| c >= vocab) {
            return Err(Error::index(format!(
                "{stream} pose code {bad} out of vocabulary [0, {vocab})"
            )));
        }
        Ok(())
    }

    /// Full forward pass. `m` holds conditioning rows for steps 0..T and
    /// `m_next` the rows for steps 1..T+1 (zero-padded or sliced by the
    /// caller), so position t sees music at t and t+1 but codes at <= t.
    pub fn forward(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        m: VarId,
        m_next: VarId,
        u_codes: &[usize],
        l_codes: &[usize],
    ) -> Result<ForwardLogits> {
        let cfg = &self.config;
        let lay = &self.layout;
        let t = u_codes.len();
        if t == 0 {
            return Err(Error::dim("gpt forward: empty code sequence".to_string()));
        }
        if l_codes.len() != t {
            return Err(Error::dim(format!(
                "stream lengths differ: upper {t} vs lower {}",
                l_codes.len()
            )));
        }
        let (mr, mc) = tape.value(m).dims2()?;
        if mr != t || mc != cfg.condition_dim() {
            return Err(Error::dim(format!(
                "conditioning block is {mr}x{mc}, expected {t}x{}",
                cfg.condition_dim()
            )));
        }
        if tape.shape(m_next) != [t, cfg.condition_dim()] {
            return Err(Error::dim(format!(
                "lookahead block shape {:?} must match {t}x{}",
                tape.shape(m_next),
                cfg.condition_dim()
            )));
        }
        if t > cfg.context {
            return Err(Error::dim(format!(
                "sequence of {t} steps exceeds context {}",
                cfg.context
            )));
        }
        self.check_codes(u_codes, cfg.vocab_upper, "upper")?;
        self.check_codes(l_codes, cfg.vocab_lower, "lower")?;

        let m_pair = tape.concat_cols(&[m, m_next])?;
        let m_emb = tape.linear(m_pair, leaves[lay.music_proj_w], leaves[lay.music_proj_b])?;
        let u_emb = tape.embed(leaves[lay.embed_upper], u_codes)?;
        let l_emb = tape.embed(leaves[lay.embed_lower], l_codes)?;
        let positions: Vec<usize> = (0..t).collect();
        let p_emb = tape.embed(leaves[lay.embed_position], &positions)?;

        let mut x = tape.add(u_emb, l_emb)?;
        x = tape.add(x, m_emb)?;
        x = tape.add(x, p_emb)?;

        let heads = cfg.heads;
        let head_dim = cfg.width / heads;
        for block in &lay.blocks {
            let normed = tape.layer_norm(x, leaves[block.ln1_gamma], leaves[block.ln1_beta])?;
            let q = tape.linear(normed, leaves[block.wq], leaves[block.bq])?;
            let k = tape.linear(normed, leaves[block.wk], leaves[block.bk])?;
            let v = tape.linear(normed, leaves[block.wv], leaves[block.bv])?;
            let mut head_outputs = Vec::with_capacity(heads);
            for h in 0..heads {
                let qs = tape.slice_cols(q, h * head_dim, head_dim)?;
                let ks = tape.slice_cols(k, h * head_dim, head_dim)?;
                let vs = tape.slice_cols(v, h * head_dim, head_dim)?;
                head_outputs.push(tape.causal_attention(qs, ks, vs)?);
            }
            let merged = tape.concat_cols(&head_outputs)?;
            let attn_out = tape.linear(merged, leaves[block.wo], leaves[block.bo])?;
            x = tape.add(x, attn_out)?;

            let normed2 = tape.layer_norm(x, leaves[block.ln2_gamma], leaves[block.ln2_beta])?;
            let hidden = tape.linear(normed2, leaves[block.mlp_w1], leaves[block.mlp_b1])?;
            let hidden = tape.leaky_relu(hidden, cfg.leaky_slope)?;
            let mlp_out = tape.linear(hidden, leaves[block.mlp_w2], leaves[block.mlp_b2])?;
            x = tape.add(x, mlp_out)?;
        }

        let final_norm = tape.layer_norm(x, leaves[lay.final_gamma], leaves[lay.final_beta])?;
        let upper = tape.linear(final_norm, leaves[lay.head_upper_w], leaves[lay.head_upper_b])?;
        let lower = tape.linear(final_norm, leaves[lay.head_lower_w], leaves[lay.head_lower_b])?;
        Ok(ForwardLogits { upper, lower })
    }

    /// Assemble the conditioning matrix for a clip on a tape:
    /// downsampled pretrained block (when used) concatenated with the
    /// handcrafted block at code rate (when used).
    pub fn condition_for_clip(
        &self,
        tape: &mut Tape,
        leaves: &[VarId],
        pretrained: Option<&FeatureTrack>,
        handcrafted: Option<&FeatureTrack>,
        steps: usize,
    ) -> Result<VarId> {
        let cfg = &self.config;
        let ds = if cfg.uses_pretrained() {
            let track = pretrained.ok_or_else(|| {
                Error::config("model expects a pretrained feature track".to_string())
            })?;
            Some(self.downsample_features(tape, leaves, track, steps)?)
        } else {
            None
        };
        let hc = if cfg.uses_handcrafted() {
            let track = handcrafted.ok_or_else(|| {
                Error::config("model expects a handcrafted feature track".to_string())
            })?;
            if track.kind != TrackKind::Handcrafted {
                return Err(Error::config(
                    "handcrafted conditioning block has wrong kind tag".to_string(),
                ));
            }
            if track.rows != steps {
                return Err(Error::dim(format!(
                    "handcrafted track has {} rows, clip has {steps} pose-code steps",
                    track.rows
                )));
            }
            if track.dims != cfg.handcrafted_dim {
                return Err(Error::dim(format!(
                    "handcrafted track has {} dims, model expects {}",
                    track.dims, cfg.handcrafted_dim
                )));
            }
            Some(tape.constant_vec(vec![track.rows, track.dims], track.values.clone())?)
        } else {
            None
        };
        self.build_condition(tape, ds, hc)
    }
}
