//! 1-D discrete Fourier transform and the focal frequency loss.
//!
//! The DFT follows the direct definition X(k) = Σ_n x(n)·e^(-j2πkn/N).
//! It is linear in x, so on the tape it is expressed as two matrix
//! products with constant cosine/sine matrices, which keeps it exactly
//! differentiable through the generic matmul backward.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::tensor::{DiffTensor, Tape, VarId};

/// Complex spectrum of a real vector, split into re/im parts of length N.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Magnitude |X(k)| per bin.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| (r * r + i * i).sqrt())
            .collect()
    }
}

/// Basis matrices for the DFT of length-n vectors, laid out so that
/// spectrum = x · basis (row-major [n×n], column k holds frequency k).
pub struct DftBasis {
    pub n: usize,
    pub cos: Vec<f64>,
    pub neg_sin: Vec<f64>,
}

impl DftBasis {
    fn build(n: usize) -> Self {
        let mut cos = vec![0.0; n * n];
        let mut neg_sin = vec![0.0; n * n];
        for pos in 0..n {
            for k in 0..n {
                let angle = 2.0 * std::f64::consts::PI * (k * pos) as f64 / n as f64;
                cos[pos * n + k] = angle.cos();
                neg_sin[pos * n + k] = -angle.sin();
            }
        }
        DftBasis { n, cos, neg_sin }
    }
}

/// Basis matrices are pure functions of N; cache them across calls.
pub fn dft_basis(n: usize) -> Arc<DftBasis> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<DftBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("dft basis cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(DftBasis::build(n)))
        .clone()
}

/// Direct 1-D DFT of a real vector.
pub fn dft_1d(x: &[f64]) -> Result<Spectrum> {
    if x.is_empty() {
        return Err(Error::dim("dft_1d: empty input".to_string()));
    }
    let n = x.len();
    let basis = dft_basis(n);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for (pos, &v) in x.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let crow = &basis.cos[pos * n..(pos + 1) * n];
        let srow = &basis.neg_sin[pos * n..(pos + 1) * n];
        for k in 0..n {
            re[k] += v * crow[k];
            im[k] += v * srow[k];
        }
    }
    Ok(Spectrum { re, im })
}

/// Per-channel spectra of a [channels × n] matrix, concatenated row-major.
pub fn dft_rows(data: &[f64], channels: usize, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if channels * n != data.len() {
        return Err(Error::dim(format!(
            "dft_rows: {channels}x{n} does not match data length {}",
            data.len()
        )));
    }
    let basis = dft_basis(n);
    let re = crate::tensor::matmul2(data, &basis.cos, channels, n, n);
    let im = crate::tensor::matmul2(data, &basis.neg_sin, channels, n, n);
    Ok((re, im))
}

/// Focal frequency loss between a constant reference `a` and a tape
/// tensor `c`, both [channels × n]. Per channel and frequency bin:
/// w(k) = |X_a(k) - X_c(k)| held constant (stop gradient), J(k) the
/// squared spectrum distance, loss = mean over bins and channels of
/// w(k)·J(k). Gradient flows through J only.
pub fn focal_frequency_loss(tape: &mut Tape, a: &DiffTensor, c: VarId) -> Result<VarId> {
    focal_frequency_loss_impl(tape, a, c, None).map(|(loss, _)| loss)
}

/// Like [`focal_frequency_loss`] but also returns the per-bin weights of
/// this forward pass, so a finite-difference oracle can re-evaluate the
/// loss with the weights pinned.
pub fn focal_frequency_loss_capture(
    tape: &mut Tape,
    a: &DiffTensor,
    c: VarId,
) -> Result<(VarId, Vec<f64>)> {
    focal_frequency_loss_impl(tape, a, c, None)
}

/// Loss with externally pinned weights instead of freshly computed ones.
/// At the point where the weights were captured this is identical to the
/// regular loss (value and gradient); away from it, it is the frozen
/// surrogate that the stop-gradient semantics differentiate.
pub fn focal_frequency_loss_frozen(
    tape: &mut Tape,
    a: &DiffTensor,
    c: VarId,
    weights: &[f64],
) -> Result<VarId> {
    focal_frequency_loss_impl(tape, a, c, Some(weights)).map(|(loss, _)| loss)
}

fn focal_frequency_loss_impl(
    tape: &mut Tape,
    a: &DiffTensor,
    c: VarId,
    frozen: Option<&[f64]>,
) -> Result<(VarId, Vec<f64>)> {
    let (channels, n) = a.dims2()?;
    let c_shape = tape.shape(c);
    if c_shape != [channels, n] {
        return Err(Error::dim(format!(
            "focal_frequency_loss: reference shape {:?} != input shape {:?}",
            a.shape, c_shape
        )));
    }

    let basis = dft_basis(n);
    let cos = tape.constant_vec(vec![n, n], basis.cos.clone())?;
    let neg_sin = tape.constant_vec(vec![n, n], basis.neg_sin.clone())?;

    // Reference spectrum is constant by contract.
    let (a_re, a_im) = dft_rows(&a.data, channels, n)?;
    let a_re = tape.constant_vec(vec![channels, n], a_re)?;
    let a_im = tape.constant_vec(vec![channels, n], a_im)?;

    let c_re = tape.matmul(c, cos)?;
    let c_im = tape.matmul(c, neg_sin)?;

    let d_re = tape.sub(c_re, a_re)?;
    let d_im = tape.sub(c_im, a_im)?;
    let j_re = tape.mul(d_re, d_re)?;
    let j_im = tape.mul(d_im, d_im)?;
    let j = tape.add(j_re, j_im)?;

    // w(k) = sqrt(J(k)) from the values of this forward pass, frozen.
    let w_values: Vec<f64> = match frozen {
        Some(w) => {
            if w.len() != channels * n {
                return Err(Error::dim(format!(
                    "focal_frequency_loss: {} frozen weights for {channels}x{n} bins",
                    w.len()
                )));
            }
            w.to_vec()
        }
        None => tape.data(j).iter().map(|v| v.sqrt()).collect(),
    };
    let w_const = tape.constant_vec(vec![channels, n], w_values.clone())?;
    let w = tape.stop_gradient(w_const)?;

    let weighted = tape.mul(w, j)?;
    let total = tape.sum(weighted)?;
    let loss = tape.scale(total, 1.0 / (n as f64 * channels as f64))?;
    Ok((loss, w_values))
}

/// Convenience: evaluate the loss between two plain matrices.
pub fn focal_frequency_loss_value(a: &DiffTensor, c: &DiffTensor) -> Result<f64> {
    let mut tape = Tape::new();
    let cv = tape.leaf(c.clone(), false)?;
    let loss = focal_frequency_loss(&mut tape, a, cv)?;
    tape.scalar_value(loss)
}
