//! Finite-difference verification suites over the op set, the spectral
//! loss, and the full autoencoder loss. These back the `gradcheck`
//! command and the acceptance tests.

use crate::error::Result;
use crate::model::{BodyTag, MotionSequence, VqVae, VqVaeConfig};
use crate::rng::Rng;
use crate::spectral::{dft_rows, focal_frequency_loss};
use crate::tensor::{grad_check, grad_check_in, DiffTensor, Tape, VarId};

/// Result of one named check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

impl CheckOutcome {
    fn from_err(name: &str, max_err: f64, tolerance: f64) -> Self {
        CheckOutcome {
            name: name.to_string(),
            detail: format!("max rel err {max_err:.3e} (tolerance {tolerance:.1e})"),
            passed: max_err < tolerance,
        }
    }
}

const OP_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn tensor(rng: &mut Rng, shape: Vec<usize>) -> DiffTensor {
    let n: usize = shape.iter().product();
    DiffTensor {
        data: rng.uniform_vec(n, -1.5, 1.5),
        shape,
        grad: None,
        requires_grad: false,
    }
}

/// Random values nudged away from |x| = `kink` so central differences
/// do not straddle a non-smooth point.
fn tensor_off_kink(rng: &mut Rng, shape: Vec<usize>, kink: f64) -> DiffTensor {
    let mut t = tensor(rng, shape);
    for v in &mut t.data {
        if (v.abs() - kink).abs() < 0.05 {
            *v += 0.1_f64.copysign(*v);
        }
    }
    t
}

/// Check one op/input combination across seeds, reporting the worst error.
fn check_over_seeds<F>(name: &str, seeds: usize, run: F) -> Result<CheckOutcome>
where
    F: Fn(u64) -> Result<f64>,
{
    let mut worst = 0.0f64;
    for seed in 0..seeds as u64 {
        let err = run(seed)?;
        if err > worst {
            worst = err;
        }
    }
    Ok(CheckOutcome::from_err(name, worst, OP_TOLERANCE))
}

/// Finite-difference checks for every differentiable op on the tape.
pub fn verify_ops(seeds: usize) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    out.push(check_over_seeds("add (lhs)", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![3, 4]);
        let c = tensor(&mut rng, vec![3, 4]);
        grad_check(
            move |tape, v| {
                let cv = tape.constant(c.clone())?;
                let y = tape.add(v, cv)?;
                tape.sum(y)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("sub (rhs)", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![2, 5]);
        let c = tensor(&mut rng, vec![2, 5]);
        grad_check(
            move |tape, v| {
                let cv = tape.constant(c.clone())?;
                let y = tape.sub(cv, v)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("mul (both sides, diamond)", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![4, 3]);
        grad_check(
            |tape, v| {
                let y = tape.mul(v, v)?;
                tape.sum(y)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("scale", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![7]);
        grad_check(
            |tape, v| {
                let y = tape.scale(v, -1.7)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("leaky_relu", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor_off_kink(&mut rng, vec![3, 6], 0.0);
        grad_check(
            |tape, v| {
                let y = tape.leaky_relu(v, 0.2)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("dropout (train mode)", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![4, 5]);
        grad_check_in(
            || Tape::training(s),
            |tape, v| {
                let y = tape.dropout(v, 0.4, 0x5eed)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    for (name, which) in [("linear (input)", 0), ("linear (weight)", 1), ("linear (bias)", 2)] {
        out.push(check_over_seeds(name, seeds, move |s| {
            let mut rng = Rng::new(s.wrapping_add(which as u64 * 101));
            let x = tensor(&mut rng, vec![3, 4]);
            let w = tensor(&mut rng, vec![4, 2]);
            let b = tensor(&mut rng, vec![2]);
            let probe = match which {
                0 => x.clone(),
                1 => w.clone(),
                _ => b.clone(),
            };
            grad_check(
                move |tape, v| {
                    let xv = if which == 0 { v } else { tape.constant(x.clone())? };
                    let wv = if which == 1 { v } else { tape.constant(w.clone())? };
                    let bv = if which == 2 { v } else { tape.constant(b.clone())? };
                    let y = tape.linear(xv, wv, bv)?;
                    let sq = tape.mul(y, y)?;
                    tape.sum(sq)
                },
                &probe,
                EPS,
            )
        })?);
    }

    for (name, which) in [("matmul (lhs)", 0), ("matmul (rhs)", 1)] {
        out.push(check_over_seeds(name, seeds, move |s| {
            let mut rng = Rng::new(s.wrapping_add(7));
            let a = tensor(&mut rng, vec![3, 4]);
            let b = tensor(&mut rng, vec![4, 5]);
            let probe = if which == 0 { a.clone() } else { b.clone() };
            grad_check(
                move |tape, v| {
                    let av = if which == 0 { v } else { tape.constant(a.clone())? };
                    let bv = if which == 1 { v } else { tape.constant(b.clone())? };
                    let y = tape.matmul(av, bv)?;
                    let sq = tape.mul(y, y)?;
                    tape.sum(sq)
                },
                &probe,
                EPS,
            )
        })?);
    }

    for (name, which) in [
        ("conv1d (input)", 0),
        ("conv1d (kernel)", 1),
        ("conv1d (bias)", 2),
    ] {
        out.push(check_over_seeds(name, seeds, move |s| {
            let mut rng = Rng::new(s.wrapping_add(13));
            // alternate strided and length-preserving configurations
            let (k, stride, padding) = if s % 2 == 0 { (4, 2, 1) } else { (3, 1, 1) };
            let x = tensor(&mut rng, vec![3, 8]);
            let w = tensor(&mut rng, vec![2, 3, k]);
            let b = tensor(&mut rng, vec![2]);
            let probe = match which {
                0 => x.clone(),
                1 => w.clone(),
                _ => b.clone(),
            };
            grad_check(
                move |tape, v| {
                    let xv = if which == 0 { v } else { tape.constant(x.clone())? };
                    let wv = if which == 1 { v } else { tape.constant(w.clone())? };
                    let bv = if which == 2 { v } else { tape.constant(b.clone())? };
                    let y = tape.conv1d(xv, wv, bv, stride, padding)?;
                    let sq = tape.mul(y, y)?;
                    tape.sum(sq)
                },
                &probe,
                EPS,
            )
        })?);
    }

    out.push(check_over_seeds("upsample", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![2, 5]);
        grad_check(
            |tape, v| {
                let y = tape.upsample(v, 2)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("transpose", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![3, 5]);
        let c = tensor(&mut rng, vec![5, 3]);
        grad_check(
            move |tape, v| {
                let t = tape.transpose(v)?;
                let cv = tape.constant(c.clone())?;
                let y = tape.mul(t, cv)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("stop_gradient (frozen factor)", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![6]);
        let k = tensor(&mut rng, vec![6]);
        grad_check(
            move |tape, v| {
                let kv = tape.constant(k.clone())?;
                let frozen = tape.stop_gradient(kv)?;
                let y = tape.mul(v, frozen)?;
                tape.sum(y)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("sum", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![3, 3]);
        grad_check(|tape, v| tape.sum(v), &x, EPS)
    })?);

    out.push(check_over_seeds("smooth_l1_mean", seeds, |s| {
        let mut rng = Rng::new(s);
        // keep |a - b| away from the Huber kink at 1
        let a = tensor(&mut rng, vec![4, 4]);
        let mut b = a.clone();
        for (i, v) in b.data.iter_mut().enumerate() {
            let delta = if i % 2 == 0 { 0.4 } else { 1.6 };
            *v += if i % 4 < 2 { delta } else { -delta };
        }
        grad_check(
            move |tape, v| {
                let bv = tape.constant(b.clone())?;
                tape.smooth_l1_mean(v, bv)
            },
            &a,
            EPS,
        )
    })?);

    out.push(check_over_seeds("softmax_cross_entropy", seeds, |s| {
        let mut rng = Rng::new(s);
        let logits = tensor(&mut rng, vec![4, 5]);
        let targets: Vec<usize> = (0..4).map(|_| (rng.next_u64() % 5) as usize).collect();
        grad_check(
            move |tape, v| tape.softmax_cross_entropy(v, &targets),
            &logits,
            EPS,
        )
    })?);

    out.push(check_over_seeds("embed (table)", seeds, |s| {
        let mut rng = Rng::new(s);
        let table = tensor(&mut rng, vec![6, 3]);
        let indices: Vec<usize> = (0..5).map(|_| (rng.next_u64() % 6) as usize).collect();
        grad_check(
            move |tape, v| {
                let y = tape.embed(v, &indices)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &table,
            EPS,
        )
    })?);

    out.push(check_over_seeds("slice_rows", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![5, 3]);
        grad_check(
            |tape, v| {
                let y = tape.slice_rows(v, 1, 3)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("slice_cols", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![4, 6]);
        grad_check(
            |tape, v| {
                let y = tape.slice_cols(v, 2, 3)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("concat_cols", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![3, 4]);
        let c = tensor(&mut rng, vec![3, 2]);
        grad_check(
            move |tape, v| {
                let cv = tape.constant(c.clone())?;
                let y = tape.concat_cols(&[v, cv, v])?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("shift_rows_up", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![5, 2]);
        grad_check(
            |tape, v| {
                let y = tape.shift_rows_up(v, 1)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    out.push(check_over_seeds("row_diff", seeds, |s| {
        let mut rng = Rng::new(s);
        let x = tensor(&mut rng, vec![6, 3]);
        grad_check(
            |tape, v| {
                let y = tape.row_diff(v)?;
                let sq = tape.mul(y, y)?;
                tape.sum(sq)
            },
            &x,
            EPS,
        )
    })?);

    for (name, which) in [
        ("layer_norm (input)", 0),
        ("layer_norm (gamma)", 1),
        ("layer_norm (beta)", 2),
    ] {
        out.push(check_over_seeds(name, seeds, move |s| {
            let mut rng = Rng::new(s.wrapping_add(31));
            let x = tensor(&mut rng, vec![3, 6]);
            let gamma = tensor(&mut rng, vec![6]);
            let beta = tensor(&mut rng, vec![6]);
            let probe = match which {
                0 => x.clone(),
                1 => gamma.clone(),
                _ => beta.clone(),
            };
            grad_check(
                move |tape, v| {
                    let xv = if which == 0 { v } else { tape.constant(x.clone())? };
                    let gv = if which == 1 { v } else { tape.constant(gamma.clone())? };
                    let bv = if which == 2 { v } else { tape.constant(beta.clone())? };
                    let y = tape.layer_norm(xv, gv, bv)?;
                    let sq = tape.mul(y, y)?;
                    tape.sum(sq)
                },
                &probe,
                EPS,
            )
        })?);
    }

    for (name, which) in [
        ("causal_attention (q)", 0),
        ("causal_attention (k)", 1),
        ("causal_attention (v)", 2),
    ] {
        out.push(check_over_seeds(name, seeds, move |s| {
            let mut rng = Rng::new(s.wrapping_add(57));
            let q = tensor(&mut rng, vec![5, 4]);
            let k = tensor(&mut rng, vec![5, 4]);
            let v_in = tensor(&mut rng, vec![5, 4]);
            let probe = match which {
                0 => q.clone(),
                1 => k.clone(),
                _ => v_in.clone(),
            };
            grad_check(
                move |tape, var| {
                    let qv = if which == 0 { var } else { tape.constant(q.clone())? };
                    let kv = if which == 1 { var } else { tape.constant(k.clone())? };
                    let vv = if which == 2 { var } else { tape.constant(v_in.clone())? };
                    let y = tape.causal_attention(qv, kv, vv)?;
                    let sq = tape.mul(y, y)?;
                    tape.sum(sq)
                },
                &probe,
                EPS,
            )
        })?);
    }

    Ok(out)
}

/// Plain (tape-free) focal frequency loss with externally supplied frozen
/// weights. This is the independent oracle for the stop-gradient check.
fn ffl_frozen_value(a: &DiffTensor, c: &DiffTensor, frozen_w: &[f64]) -> Result<f64> {
    let (channels, n) = a.dims2()?;
    let (a_re, a_im) = dft_rows(&a.data, channels, n)?;
    let (c_re, c_im) = dft_rows(&c.data, channels, n)?;
    let mut total = 0.0;
    for i in 0..channels * n {
        let dr = c_re[i] - a_re[i];
        let di = c_im[i] - a_im[i];
        total += frozen_w[i] * (dr * dr + di * di);
    }
    Ok(total / (channels * n) as f64)
}

/// Frozen weights |X_a - X_c| at the base point.
fn ffl_weights(a: &DiffTensor, c: &DiffTensor) -> Result<Vec<f64>> {
    let (channels, n) = a.dims2()?;
    let (a_re, a_im) = dft_rows(&a.data, channels, n)?;
    let (c_re, c_im) = dft_rows(&c.data, channels, n)?;
    Ok((0..channels * n)
        .map(|i| {
            let dr = c_re[i] - a_re[i];
            let di = c_im[i] - a_im[i];
            (dr * dr + di * di).sqrt()
        })
        .collect())
}

/// Stop-gradient verification for the spectral loss: the tape gradient
/// must match finite differences of the frozen-weight oracle, and must
/// disagree with finite differences of the full (weight-recomputing)
/// loss whenever the spectra differ.
pub fn verify_ffl(seeds: usize) -> Result<Vec<CheckOutcome>> {
    let mut frozen_worst = 0.0f64;
    let mut unfrozen_best_gap = f64::INFINITY;
    for s in 0..seeds as u64 {
        let mut rng = Rng::new(s.wrapping_add(0xff1));
        let channels = 2;
        let n = 6;
        let a = tensor(&mut rng, vec![channels, n]);
        let c0 = tensor(&mut rng, vec![channels, n]);
        let w0 = ffl_weights(&a, &c0)?;

        // autodiff gradient of the tape op at c0
        let mut tape = Tape::new();
        let cv = tape.leaf(c0.clone(), true)?;
        let loss = focal_frequency_loss(&mut tape, &a, cv)?;
        tape.backward(loss)?;
        let autodiff = tape.grad(cv).expect("ffl input receives gradient").to_vec();

        let mut probe = c0.clone();
        let mut frozen_err = 0.0f64;
        let mut unfrozen_err = 0.0f64;
        for (i, &ad) in autodiff.iter().enumerate() {
            let orig = probe.data[i];
            probe.data[i] = orig + EPS;
            let fro_plus = ffl_frozen_value(&a, &probe, &w0)?;
            let full_plus = {
                let w = ffl_weights(&a, &probe)?;
                ffl_frozen_value(&a, &probe, &w)?
            };
            probe.data[i] = orig - EPS;
            let fro_minus = ffl_frozen_value(&a, &probe, &w0)?;
            let full_minus = {
                let w = ffl_weights(&a, &probe)?;
                ffl_frozen_value(&a, &probe, &w)?
            };
            probe.data[i] = orig;

            let fd_frozen = (fro_plus - fro_minus) / (2.0 * EPS);
            let fd_full = (full_plus - full_minus) / (2.0 * EPS);
            frozen_err = frozen_err.max((ad - fd_frozen).abs() / fd_frozen.abs().max(1.0));
            unfrozen_err = unfrozen_err.max((ad - fd_full).abs() / fd_full.abs().max(1.0));
        }
        frozen_worst = frozen_worst.max(frozen_err);
        unfrozen_best_gap = unfrozen_best_gap.min(unfrozen_err);
    }

    Ok(vec![
        CheckOutcome::from_err(
            "ffl gradient vs frozen-weight oracle",
            frozen_worst,
            OP_TOLERANCE,
        ),
        CheckOutcome {
            name: "ffl stop-gradient active (full finite differences must disagree)".to_string(),
            detail: format!("min rel gap {unfrozen_best_gap:.3e} (required > 1e-2)"),
            passed: unfrozen_best_gap > 1e-2,
        },
    ])
}

fn tiny_model(seed: u64) -> Result<(VqVae, MotionSequence)> {
    let config = VqVaeConfig {
        input_joints: 2,
        codebook_size: 8,
        codebook_dim: 4,
        num_layers: 2,
        channel_width: 6,
        enc_kernel: 4,
        dec_kernel: 3,
        fcm_kernel: 3,
        fcm_dropout: 0.2,
        leaky_slope: 0.2,
        alpha1: 1.0,
        alpha2: 0.1,
        commit_beta: 0.25,
        rec_weights: [1.0, 1.0, 1.0],
        fcm_enabled: true,
        ffl_enabled: true,
    };
    let model = VqVae::new(config, BodyTag::Upper, seed)?;
    let mut rng = Rng::new(seed ^ 0xda7a);
    let t = 16;
    let frames = rng.uniform_vec(t * 2 * 3, -1.0, 1.0);
    let motion = MotionSequence::new(t, 2, 60.0, frames)?;
    Ok((model, motion))
}

/// Full-loss gradient check on a tiny configuration (T=16, 2 joints,
/// d=4, M=8, L=2). The finite-difference oracle evaluates the frozen
/// surrogate — spectral weights and layer references pinned at the base
/// point, which is exactly what the stop-gradient semantics
/// differentiate. Decoder-side parameters and the codebook run through
/// the real quantizer (pose codes stay constant under the probe);
/// encoder-side parameters use the quantizer-bypassed graph, the
/// surrogate the straight-through estimator differentiates.
pub fn verify_model(seed: u64) -> Result<Vec<CheckOutcome>> {
    const MODEL_TOLERANCE: f64 = 1e-3;
    let (model, motion) = tiny_model(seed)?;
    let mut out = Vec::new();

    // One base snapshot per quantizer mode; all probes share it.
    let snapshot_for = |bypass: bool| -> Result<crate::model::SpectralSnapshot> {
        let mut tape = Tape::new();
        let leaves = model.params.leaves(&mut tape)?;
        let (_, _, snap) = model.loss_vars_frozen(&mut tape, &leaves, &motion, 0, bypass, None)?;
        Ok(snap)
    };
    let snap_quantized = snapshot_for(false)?;
    let snap_bypassed = snapshot_for(true)?;

    for idx in 0..model.params.len() {
        let name = model.params.name(idx).to_string();
        let encoder_side = name.starts_with("enc.");
        let probe = model.params.get(idx).clone();
        let model_ref = &model;
        let motion_ref = &motion;
        let snap = if encoder_side {
            &snap_bypassed
        } else {
            &snap_quantized
        };
        let err = grad_check(
            move |tape, v| {
                let mut leaves: Vec<VarId> = Vec::with_capacity(model_ref.params.len());
                for i in 0..model_ref.params.len() {
                    if i == idx {
                        leaves.push(v);
                    } else {
                        leaves.push(tape.constant(model_ref.params.get(i).clone())?);
                    }
                }
                let (loss, _, _) = model_ref.loss_vars_frozen(
                    tape,
                    &leaves,
                    motion_ref,
                    0,
                    encoder_side,
                    Some(snap),
                )?;
                Ok(loss)
            },
            &probe,
            EPS,
        )?;
        let label = if encoder_side {
            format!("model loss wrt {name} (bypassed quantizer)")
        } else {
            format!("model loss wrt {name}")
        };
        out.push(CheckOutcome::from_err(&label, err, MODEL_TOLERANCE));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ops_suite_passes_with_few_seeds() {
        for c in verify_ops(3).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn ffl_suite_passes_with_few_seeds() {
        for c in verify_ffl(3).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
