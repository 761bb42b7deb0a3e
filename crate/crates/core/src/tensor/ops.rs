//! Forward op builders. Every method validates shapes, computes the result
//! eagerly, and records the op for the backward pass.

use super::{DiffTensor, Op, Tape, VarId};
use crate::error::{Error, Result};
use crate::rng::dropout_keep;

/// Row-major matmul: a[m×k] · b[k×n] -> [m×n].
pub(crate) fn matmul2(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    out
}

/// a[m×k] · b[n×k]^T -> [m×n].
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

impl Tape {
    fn binary_shapes(&self, a: VarId, b: VarId, op: &str) -> Result<Vec<usize>> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::dim(format!(
                "{op}: left shape {sa:?} != right shape {sb:?}"
            )));
        }
        Ok(sa.to_vec())
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let shape = self.binary_shapes(a, b, "add")?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x + y)
            .collect();
        let v = self.push(
            DiffTensor {
                shape,
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Add(a, b),
        );
        self.check_finite(v, "add")
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let shape = self.binary_shapes(a, b, "sub")?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x - y)
            .collect();
        let v = self.push(
            DiffTensor {
                shape,
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Sub(a, b),
        );
        self.check_finite(v, "sub")
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let shape = self.binary_shapes(a, b, "mul")?;
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| x * y)
            .collect();
        let v = self.push(
            DiffTensor {
                shape,
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Mul(a, b),
        );
        self.check_finite(v, "mul")
    }

    pub fn scale(&mut self, x: VarId, c: f64) -> Result<VarId> {
        let shape = self.shape(x).to_vec();
        let data: Vec<f64> = self.data(x).iter().map(|v| v * c).collect();
        let v = self.push(
            DiffTensor {
                shape,
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Scale(x, c),
        );
        self.check_finite(v, "scale")
    }

    pub fn leaky_relu(&mut self, x: VarId, slope: f64) -> Result<VarId> {
        let shape = self.shape(x).to_vec();
        let data: Vec<f64> = self
            .data(x)
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let v = self.push(
            DiffTensor {
                shape,
                data,
                grad: None,
                requires_grad: false,
            },
            Op::LeakyRelu(x, slope),
        );
        self.check_finite(v, "leaky_relu")
    }

    /// Inverted dropout. In train mode each element is zeroed independently
    /// with probability `rate` and survivors are scaled by 1/(1-rate); in
    /// eval mode (or at rate 0) this is the identity. The mask is a pure
    /// function of (tape seed, `salt`, element index).
    pub fn dropout(&mut self, x: VarId, rate: f64, salt: u64) -> Result<VarId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!(
                "dropout rate must be in [0, 1), got {rate}"
            )));
        }
        let shape = self.shape(x).to_vec();
        if !self.is_training() || rate == 0.0 {
            let data = self.data(x).to_vec();
            let v = self.push(
                DiffTensor {
                    shape,
                    data,
                    grad: None,
                    requires_grad: false,
                },
                Op::Dropout { x, mask: None },
            );
            return Ok(v);
        }
        let seed = self.dropout_seed();
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.data(x).len())
            .map(|i| {
                if dropout_keep(seed, salt, i as u64, rate) {
                    keep_scale
                } else {
                    0.0
                }
            })
            .collect();
        let data: Vec<f64> = self
            .data(x)
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let v = self.push(
            DiffTensor {
                shape,
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Dropout { x, mask: Some(mask) },
        );
        self.check_finite(v, "dropout")
    }

    /// Affine map: x[t×d_in] · w[d_in×d_out] + b[d_out].
    pub fn linear(&mut self, x: VarId, w: VarId, b: VarId) -> Result<VarId> {
        let (t, d_in) = self.shape2(x)?;
        let (wr, d_out) = self.shape2(w)?;
        if wr != d_in {
            return Err(Error::dim(format!(
                "linear: input cols {d_in} != weight rows {wr}"
            )));
        }
        let bs = self.shape(b);
        if bs != [d_out] {
            return Err(Error::dim(format!(
                "linear: bias shape {bs:?} != [{d_out}]"
            )));
        }
        let mut data = matmul2(self.data(x), self.data(w), t, d_in, d_out);
        let bias = self.data(b);
        for row in data.chunks_mut(d_out) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let v = self.push(
            DiffTensor {
                shape: vec![t, d_out],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Linear { x, w, b },
        );
        self.check_finite(v, "linear")
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (m, ka) = self.shape2(a)?;
        let (kb, n) = self.shape2(b)?;
        if ka != kb {
            return Err(Error::dim(format!(
                "matmul: inner dims disagree, left cols {ka} != right rows {kb}"
            )));
        }
        let data = matmul2(self.data(a), self.data(b), m, ka, n);
        let v = self.push(
            DiffTensor {
                shape: vec![m, n],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::MatMul { a, b },
        );
        self.check_finite(v, "matmul")
    }

    /// 1-D convolution over [c_in×t] input with [c_out×c_in×k] kernel.
    /// Output length is floor((t + 2·padding - k)/stride) + 1.
    pub fn conv1d(
        &mut self,
        x: VarId,
        w: VarId,
        b: VarId,
        stride: usize,
        padding: usize,
    ) -> Result<VarId> {
        if stride == 0 {
            return Err(Error::config("conv1d: stride must be >= 1".to_string()));
        }
        let (c_in, t) = self.shape2(x)?;
        let (c_out, wc_in, k) = self.value(w).dims3()?;
        if wc_in != c_in {
            return Err(Error::dim(format!(
                "conv1d: input channels {c_in} != kernel input channels {wc_in}"
            )));
        }
        if t + 2 * padding < k {
            return Err(Error::dim(format!(
                "conv1d: padded length {} shorter than kernel {k}",
                t + 2 * padding
            )));
        }
        let bs = self.shape(b);
        if bs != [c_out] {
            return Err(Error::dim(format!(
                "conv1d: bias shape {bs:?} != [{c_out}]"
            )));
        }
        let t_out = (t + 2 * padding - k) / stride + 1;
        let xd = self.data(x);
        let wd = self.data(w);
        let bd = self.data(b);
        let mut data = vec![0.0; c_out * t_out];
        for co in 0..c_out {
            let out_row = &mut data[co * t_out..(co + 1) * t_out];
            out_row.fill(bd[co]);
            for ci in 0..c_in {
                let x_row = &xd[ci * t..(ci + 1) * t];
                let w_row = &wd[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                for (ot, o) in out_row.iter_mut().enumerate() {
                    let base = ot * stride;
                    let mut acc = 0.0;
                    for (kk, &wv) in w_row.iter().enumerate() {
                        let pos = base + kk;
                        if pos >= padding && pos - padding < t {
                            acc += wv * x_row[pos - padding];
                        }
                    }
                    *o += acc;
                }
            }
        }
        let v = self.push(
            DiffTensor {
                shape: vec![c_out, t_out],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            },
        );
        self.check_finite(v, "conv1d")
    }

    /// Nearest-neighbor temporal upsampling of a [c×t] tensor.
    pub fn upsample(&mut self, x: VarId, factor: usize) -> Result<VarId> {
        if factor == 0 {
            return Err(Error::config("upsample: factor must be >= 1".to_string()));
        }
        let (c, t) = self.shape2(x)?;
        let xd = self.data(x);
        let mut data = vec![0.0; c * t * factor];
        for ci in 0..c {
            for ti in 0..t {
                let v = xd[ci * t + ti];
                let base = ci * t * factor + ti * factor;
                data[base..base + factor].fill(v);
            }
        }
        Ok(self.push(
            DiffTensor {
                shape: vec![c, t * factor],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Upsample { x, factor },
        ))
    }

    pub fn transpose(&mut self, x: VarId) -> Result<VarId> {
        let (r, c) = self.shape2(x)?;
        let xd = self.data(x);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = xd[i * c + j];
            }
        }
        Ok(self.push(
            DiffTensor {
                shape: vec![c, r],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Transpose(x),
        ))
    }

    /// Forward identity whose backward contribution is zero.
    pub fn stop_gradient(&mut self, x: VarId) -> Result<VarId> {
        let t = DiffTensor {
            shape: self.shape(x).to_vec(),
            data: self.data(x).to_vec(),
            grad: None,
            requires_grad: false,
        };
        Ok(self.push(t, Op::StopGradient(x)))
    }

    /// Full reduction to a scalar.
    pub fn sum(&mut self, x: VarId) -> Result<VarId> {
        let s: f64 = self.data(x).iter().sum();
        let v = self.push(DiffTensor::scalar(s), Op::Sum(x));
        self.check_finite(v, "sum")
    }

    /// Mean smooth-L1 (Huber, delta = 1) between two same-shape tensors.
    pub fn smooth_l1_mean(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_shapes(a, b, "smooth_l1_mean")?;
        let n = self.data(a).len() as f64;
        let s: f64 = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(x, y)| {
                let d = x - y;
                if d.abs() < 1.0 {
                    0.5 * d * d
                } else {
                    d.abs() - 0.5
                }
            })
            .sum();
        let v = self.push(DiffTensor::scalar(s / n), Op::SmoothL1Mean { a, b });
        self.check_finite(v, "smooth_l1_mean")
    }

    /// Mean negative log-softmax of the target class over logits[t×m].
    pub fn softmax_cross_entropy(&mut self, logits: VarId, targets: &[usize]) -> Result<VarId> {
        let (t, m) = self.shape2(logits)?;
        if targets.len() != t {
            return Err(Error::dim(format!(
                "softmax_cross_entropy: {} targets for {t} logit rows",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= m) {
            return Err(Error::index(format!(
                "softmax_cross_entropy: target class {bad} out of range [0, {m})"
            )));
        }
        let ld = self.data(logits);
        let mut probs = vec![0.0; t * m];
        let mut total = 0.0;
        for (row, &target) in targets.iter().enumerate() {
            let l = &ld[row * m..(row + 1) * m];
            let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &v) in l.iter().enumerate() {
                let e = (v - max).exp();
                probs[row * m + j] = e;
                denom += e;
            }
            for p in &mut probs[row * m..(row + 1) * m] {
                *p /= denom;
            }
            total -= (l[target] - max) - denom.ln();
        }
        let v = self.push(
            DiffTensor::scalar(total / t as f64),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        );
        self.check_finite(v, "softmax_cross_entropy")
    }

    /// Gather rows of `table` at `indices`; backward scatter-adds.
    pub fn embed(&mut self, table: VarId, indices: &[usize]) -> Result<VarId> {
        let (rows, dim) = self.shape2(table)?;
        if indices.is_empty() {
            return Err(Error::dim("embed: empty index list".to_string()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::index(format!(
                "embed: index {bad} out of range [0, {rows})"
            )));
        }
        let td = self.data(table);
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            data.extend_from_slice(&td[i * dim..(i + 1) * dim]);
        }
        Ok(self.push(
            DiffTensor {
                shape: vec![indices.len(), dim],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::Embed {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Value comes from `values`; gradient passes through to `input`
    /// unchanged (identity Jacobian). The two must share a shape.
    pub fn straight_through(&mut self, input: VarId, values: DiffTensor) -> Result<VarId> {
        if self.shape(input) != values.shape.as_slice() {
            return Err(Error::dim(format!(
                "straight_through: value shape {:?} != input shape {:?}",
                values.shape,
                self.shape(input)
            )));
        }
        let v = self.push(values, Op::StraightThrough { input });
        self.check_finite(v, "straight_through")
    }

    pub fn slice_rows(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        let (r, c) = self.shape2(x)?;
        if start + len > r || len == 0 {
            return Err(Error::dim(format!(
                "slice_rows: rows [{start}, {}) out of [0, {r})",
                start + len
            )));
        }
        let data = self.data(x)[start * c..(start + len) * c].to_vec();
        Ok(self.push(
            DiffTensor {
                shape: vec![len, c],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::SliceRows { x, start },
        ))
    }

    pub fn slice_cols(&mut self, x: VarId, start: usize, len: usize) -> Result<VarId> {
        let (r, c) = self.shape2(x)?;
        if start + len > c || len == 0 {
            return Err(Error::dim(format!(
                "slice_cols: cols [{start}, {}) out of [0, {c})",
                start + len
            )));
        }
        let xd = self.data(x);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&xd[i * c + start..i * c + start + len]);
        }
        Ok(self.push(
            DiffTensor {
                shape: vec![r, len],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::SliceCols { x, start },
        ))
    }

    /// Concatenate 2-D tensors with equal row counts along the feature axis.
    pub fn concat_cols(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(Error::dim("concat_cols: no parts".to_string()));
        }
        let (rows, _) = self.shape2(parts[0])?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.shape2(p)?;
            if r != rows {
                return Err(Error::dim(format!(
                    "concat_cols: row count {r} != {rows}"
                )));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                let pd = self.data(p);
                data.extend_from_slice(&pd[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(
            DiffTensor {
                shape: vec![rows, total],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::ConcatCols {
                parts: parts.to_vec(),
            },
        ))
    }

    /// out[t] = x[t+n] for t < rows-n, zero rows at the end.
    pub fn shift_rows_up(&mut self, x: VarId, n: usize) -> Result<VarId> {
        let (r, c) = self.shape2(x)?;
        if n >= r {
            return Err(Error::dim(format!("shift_rows_up: shift {n} >= rows {r}")));
        }
        let xd = self.data(x);
        let mut data = vec![0.0; r * c];
        data[..(r - n) * c].copy_from_slice(&xd[n * c..]);
        Ok(self.push(
            DiffTensor {
                shape: vec![r, c],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::ShiftRowsUp { x, n },
        ))
    }

    /// First difference along rows: out[t] = x[t+1] - x[t], shape [r-1×c].
    pub fn row_diff(&mut self, x: VarId) -> Result<VarId> {
        let (r, c) = self.shape2(x)?;
        if r < 2 {
            return Err(Error::dim(format!("row_diff: need >= 2 rows, got {r}")));
        }
        let xd = self.data(x);
        let mut data = Vec::with_capacity((r - 1) * c);
        for t in 0..r - 1 {
            for j in 0..c {
                data.push(xd[(t + 1) * c + j] - xd[t * c + j]);
            }
        }
        let v = self.push(
            DiffTensor {
                shape: vec![r - 1, c],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::RowDiff(x),
        );
        self.check_finite(v, "row_diff")
    }

    /// Per-row layer normalization with learned gain and shift.
    pub fn layer_norm(&mut self, x: VarId, gamma: VarId, beta: VarId) -> Result<VarId> {
        const EPS: f64 = 1e-5;
        let (r, c) = self.shape2(x)?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::dim(format!(
                "layer_norm: gamma {:?} / beta {:?} must be [{c}]",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let xd = self.data(x);
        let gd = self.data(gamma);
        let bd = self.data(beta);
        let mut data = vec![0.0; r * c];
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = vec![0.0; r];
        for i in 0..r {
            let row = &xd[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[i] = istd;
            for j in 0..c {
                let xh = (row[j] - mean) * istd;
                xhat[i * c + j] = xh;
                data[i * c + j] = gd[j] * xh + bd[j];
            }
        }
        let v = self.push(
            DiffTensor {
                shape: vec![r, c],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        );
        self.check_finite(v, "layer_norm")
    }

    /// Single-head scaled dot-product attention with a strict causal mask:
    /// position t attends to positions 0..=t only.
    pub fn causal_attention(&mut self, q: VarId, k: VarId, v: VarId) -> Result<VarId> {
        let (t, d) = self.shape2(q)?;
        if self.shape(k) != [t, d] || self.shape(v) != [t, d] {
            return Err(Error::dim(format!(
                "causal_attention: q {:?}, k {:?}, v {:?} must agree",
                self.shape(q),
                self.shape(k),
                self.shape(v)
            )));
        }
        let scale = 1.0 / (d as f64).sqrt();
        let qd = self.data(q);
        let kd = self.data(k);
        let vd = self.data(v);
        let mut attn = vec![0.0; t * t];
        for i in 0..t {
            let qrow = &qd[i * d..(i + 1) * d];
            let arow = &mut attn[i * t..(i + 1) * t];
            let mut max = f64::NEG_INFINITY;
            for (j, a) in arow.iter_mut().enumerate().take(i + 1) {
                let krow = &kd[j * d..(j + 1) * d];
                let s = qrow.iter().zip(krow).map(|(x, y)| x * y).sum::<f64>() * scale;
                *a = s;
                if s > max {
                    max = s;
                }
            }
            let mut denom = 0.0;
            for a in arow.iter_mut().take(i + 1) {
                *a = (*a - max).exp();
                denom += *a;
            }
            for a in arow.iter_mut().take(i + 1) {
                *a /= denom;
            }
            // entries j > i stay exactly zero
        }
        let data = matmul2(&attn, vd, t, t, d);
        let out = self.push(
            DiffTensor {
                shape: vec![t, d],
                data,
                grad: None,
                requires_grad: false,
            },
            Op::CausalAttention { q, k, v, attn },
        );
        self.check_finite(out, "causal_attention")
    }
}
