//! Reverse traversal of the tape. One call accumulates gradients
//! additively into every node reachable from the loss; leaves keep their
//! buffers so callers can read or take them afterwards.

use super::ops::{matmul2, matmul_nt};
use super::{Node, Op, Tape, VarId};
use crate::error::{Error, Result};

/// a[k×m]^T · b[k×n] -> [m×n].
fn matmul_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn add_grad(node: &mut Node, contrib: &[f64]) {
    let g = node
        .tensor
        .grad
        .get_or_insert_with(|| vec![0.0; node.tensor.data.len()]);
    debug_assert_eq!(g.len(), contrib.len());
    for (gv, cv) in g.iter_mut().zip(contrib) {
        *gv += cv;
    }
}

fn add_grad_scaled(node: &mut Node, contrib: &[f64], scale: f64) {
    let g = node
        .tensor
        .grad
        .get_or_insert_with(|| vec![0.0; node.tensor.data.len()]);
    for (gv, cv) in g.iter_mut().zip(contrib) {
        *gv += cv * scale;
    }
}

impl Tape {
    /// Run one backward pass from a scalar loss node.
    pub fn backward(&mut self, loss: VarId) -> Result<()> {
        if self.nodes[loss.0].tensor.numel() != 1 {
            return Err(Error::dim(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss.0].tensor.shape
            )));
        }
        for n in &mut self.nodes {
            n.tensor.grad = None;
        }
        self.nodes[loss.0].tensor.grad = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let (head, tail) = self.nodes.split_at_mut(i);
            let node = &tail[0];
            let Some(grad) = node.tensor.grad.clone() else {
                continue;
            };
            let out_shape = node.tensor.shape.clone();
            match node.op.clone() {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    add_grad(&mut head[a.0], &grad);
                    add_grad(&mut head[b.0], &grad);
                }
                Op::Sub(a, b) => {
                    add_grad(&mut head[a.0], &grad);
                    add_grad_scaled(&mut head[b.0], &grad, -1.0);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> = grad
                        .iter()
                        .zip(&head[b.0].tensor.data)
                        .map(|(g, v)| g * v)
                        .collect();
                    let db: Vec<f64> = grad
                        .iter()
                        .zip(&head[a.0].tensor.data)
                        .map(|(g, v)| g * v)
                        .collect();
                    add_grad(&mut head[a.0], &da);
                    add_grad(&mut head[b.0], &db);
                }
                Op::Scale(x, c) => {
                    add_grad_scaled(&mut head[x.0], &grad, c);
                }
                Op::LeakyRelu(x, slope) => {
                    let dx: Vec<f64> = grad
                        .iter()
                        .zip(&head[x.0].tensor.data)
                        .map(|(g, &v)| if v >= 0.0 { *g } else { g * slope })
                        .collect();
                    add_grad(&mut head[x.0], &dx);
                }
                Op::Dropout { x, mask } => match mask {
                    None => add_grad(&mut head[x.0], &grad),
                    Some(m) => {
                        let dx: Vec<f64> = grad.iter().zip(&m).map(|(g, mv)| g * mv).collect();
                        add_grad(&mut head[x.0], &dx);
                    }
                },
                Op::Linear { x, w, b } => {
                    let (t, d_in) = head[x.0].tensor.dims2()?;
                    let d_out = out_shape[1];
                    let dx = matmul_nt(&grad, &head[w.0].tensor.data, t, d_out, d_in);
                    let dw = matmul_tn(&head[x.0].tensor.data, &grad, t, d_in, d_out);
                    let mut db = vec![0.0; d_out];
                    for row in grad.chunks(d_out) {
                        for (s, g) in db.iter_mut().zip(row) {
                            *s += g;
                        }
                    }
                    add_grad(&mut head[x.0], &dx);
                    add_grad(&mut head[w.0], &dw);
                    add_grad(&mut head[b.0], &db);
                }
                Op::MatMul { a, b } => {
                    let (m, k) = head[a.0].tensor.dims2()?;
                    let n = out_shape[1];
                    let da = matmul_nt(&grad, &head[b.0].tensor.data, m, n, k);
                    let db = matmul_tn(&head[a.0].tensor.data, &grad, m, k, n);
                    add_grad(&mut head[a.0], &da);
                    add_grad(&mut head[b.0], &db);
                }
                Op::Conv1d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                } => {
                    let (c_in, t) = head[x.0].tensor.dims2()?;
                    let (c_out, _, k) = head[w.0].tensor.dims3()?;
                    let t_out = out_shape[1];
                    let xd = &head[x.0].tensor.data;
                    let wd = &head[w.0].tensor.data;
                    let mut dx = vec![0.0; c_in * t];
                    let mut dw = vec![0.0; c_out * c_in * k];
                    let mut db = vec![0.0; c_out];
                    for co in 0..c_out {
                        let grow = &grad[co * t_out..(co + 1) * t_out];
                        db[co] += grow.iter().sum::<f64>();
                        for ci in 0..c_in {
                            let x_row = &xd[ci * t..(ci + 1) * t];
                            let w_row = &wd[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                            let dw_row = &mut dw[(co * c_in + ci) * k..(co * c_in + ci + 1) * k];
                            let dx_row = &mut dx[ci * t..(ci + 1) * t];
                            for (ot, &g) in grow.iter().enumerate() {
                                if g == 0.0 {
                                    continue;
                                }
                                let base = ot * stride;
                                for kk in 0..k {
                                    let pos = base + kk;
                                    if pos >= padding && pos - padding < t {
                                        dw_row[kk] += g * x_row[pos - padding];
                                        dx_row[pos - padding] += g * w_row[kk];
                                    }
                                }
                            }
                        }
                    }
                    add_grad(&mut head[x.0], &dx);
                    add_grad(&mut head[w.0], &dw);
                    add_grad(&mut head[b.0], &db);
                }
                Op::Upsample { x, factor } => {
                    let (c, t) = head[x.0].tensor.dims2()?;
                    let t_up = t * factor;
                    let mut dx = vec![0.0; c * t];
                    for ci in 0..c {
                        for ti in 0..t {
                            let base = ci * t_up + ti * factor;
                            dx[ci * t + ti] = grad[base..base + factor].iter().sum();
                        }
                    }
                    add_grad(&mut head[x.0], &dx);
                }
                Op::Transpose(x) => {
                    let (r, c) = head[x.0].tensor.dims2()?;
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = grad[j * r + i];
                        }
                    }
                    add_grad(&mut head[x.0], &dx);
                }
                Op::StopGradient(_) => {}
                Op::Sum(x) => {
                    let g = grad[0];
                    let dx = vec![g; head[x.0].tensor.data.len()];
                    add_grad(&mut head[x.0], &dx);
                }
                Op::SmoothL1Mean { a, b } => {
                    let g = grad[0];
                    let n = head[a.0].tensor.data.len() as f64;
                    let contrib: Vec<f64> = head[a.0]
                        .tensor
                        .data
                        .iter()
                        .zip(&head[b.0].tensor.data)
                        .map(|(x, y)| g * (x - y).clamp(-1.0, 1.0) / n)
                        .collect();
                    add_grad(&mut head[a.0], &contrib);
                    add_grad_scaled(&mut head[b.0], &contrib, -1.0);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let g = grad[0];
                    let t = targets.len();
                    let m = head[logits.0].tensor.shape[1];
                    let scale = g / t as f64;
                    let mut dl = probs;
                    for (row, &target) in targets.iter().enumerate() {
                        dl[row * m + target] -= 1.0;
                    }
                    for v in &mut dl {
                        *v *= scale;
                    }
                    add_grad(&mut head[logits.0], &dl);
                }
                Op::Embed { table, indices } => {
                    let dim = head[table.0].tensor.shape[1];
                    let mut dt = vec![0.0; head[table.0].tensor.data.len()];
                    for (row, &idx) in indices.iter().enumerate() {
                        for j in 0..dim {
                            dt[idx * dim + j] += grad[row * dim + j];
                        }
                    }
                    add_grad(&mut head[table.0], &dt);
                }
                Op::StraightThrough { input } => {
                    add_grad(&mut head[input.0], &grad);
                }
                Op::SliceRows { x, start } => {
                    let (_, c) = head[x.0].tensor.dims2()?;
                    let mut dx = vec![0.0; head[x.0].tensor.data.len()];
                    dx[start * c..start * c + grad.len()].copy_from_slice(&grad);
                    add_grad(&mut head[x.0], &dx);
                }
                Op::SliceCols { x, start } => {
                    let (r, c) = head[x.0].tensor.dims2()?;
                    let len = out_shape[1];
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        dx[i * c + start..i * c + start + len]
                            .copy_from_slice(&grad[i * len..(i + 1) * len]);
                    }
                    add_grad(&mut head[x.0], &dx);
                }
                Op::ConcatCols { parts } => {
                    let rows = out_shape[0];
                    let total = out_shape[1];
                    let mut offset = 0;
                    for &p in &parts {
                        let w = head[p.0].tensor.shape[1];
                        let mut dp = vec![0.0; rows * w];
                        for i in 0..rows {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&grad[i * total + offset..i * total + offset + w]);
                        }
                        add_grad(&mut head[p.0], &dp);
                        offset += w;
                    }
                }
                Op::ShiftRowsUp { x, n } => {
                    let (r, c) = head[x.0].tensor.dims2()?;
                    let mut dx = vec![0.0; r * c];
                    dx[n * c..].copy_from_slice(&grad[..(r - n) * c]);
                    add_grad(&mut head[x.0], &dx);
                }
                Op::RowDiff(x) => {
                    let (r, c) = head[x.0].tensor.dims2()?;
                    let mut dx = vec![0.0; r * c];
                    for t in 0..r - 1 {
                        for j in 0..c {
                            let g = grad[t * c + j];
                            dx[(t + 1) * c + j] += g;
                            dx[t * c + j] -= g;
                        }
                    }
                    add_grad(&mut head[x.0], &dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (r, c) = head[x.0].tensor.dims2()?;
                    let gd = &head[gamma.0].tensor.data;
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        let grow = &grad[i * c..(i + 1) * c];
                        let xh = &xhat[i * c..(i + 1) * c];
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        for j in 0..c {
                            dgamma[j] += grow[j] * xh[j];
                            dbeta[j] += grow[j];
                            let dxh = grow[j] * gd[j];
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xh[j];
                        }
                        mean_dxhat /= c as f64;
                        mean_dxhat_xhat /= c as f64;
                        for j in 0..c {
                            let dxh = grow[j] * gd[j];
                            dx[i * c + j] =
                                inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                        }
                    }
                    add_grad(&mut head[x.0], &dx);
                    add_grad(&mut head[gamma.0], &dgamma);
                    add_grad(&mut head[beta.0], &dbeta);
                }
                Op::CausalAttention { q, k, v, attn } => {
                    let (t, d) = head[q.0].tensor.dims2()?;
                    let scale = 1.0 / (d as f64).sqrt();
                    let dv = matmul_tn(&attn, &grad, t, t, d);
                    let da = matmul_nt(&grad, &head[v.0].tensor.data, t, d, t);
                    let mut ds = vec![0.0; t * t];
                    for i in 0..t {
                        let arow = &attn[i * t..(i + 1) * t];
                        let darow = &da[i * t..(i + 1) * t];
                        let dot: f64 = arow
                            .iter()
                            .zip(darow)
                            .take(i + 1)
                            .map(|(a, g)| a * g)
                            .sum();
                        for j in 0..=i {
                            ds[i * t + j] = arow[j] * (darow[j] - dot);
                        }
                    }
                    let dq = matmul2(&ds, &head[k.0].tensor.data, t, t, d);
                    let dk = matmul_tn(&ds, &head[q.0].tensor.data, t, t, d);
                    add_grad_scaled(&mut head[q.0], &dq, scale);
                    add_grad_scaled(&mut head[k.0], &dk, scale);
                    add_grad(&mut head[v.0], &dv);
                }
            }
        }
        Ok(())
    }
}
