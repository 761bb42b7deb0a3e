//! Finite-difference verification harness for the tape.

use super::{DiffTensor, Tape, VarId};
use crate::error::{Error, Result};

/// Max over coordinates of |autodiff - central difference| / max(1, |central difference|)
/// for a scalar-valued function of one tensor. The function is re-run on a
/// fresh tape per probe, so it must be deterministic.
pub fn grad_check<F>(f: F, x: &DiffTensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, VarId) -> Result<VarId>,
{
    grad_check_in(Tape::new, f, x, eps)
}

/// Like [`grad_check`] but with a caller-supplied tape factory, e.g.
/// `|| Tape::training(seed)` to verify ops whose forward depends on the
/// tape mode (dropout).
pub fn grad_check_in<M, F>(make_tape: M, f: F, x: &DiffTensor, eps: f64) -> Result<f64>
where
    M: Fn() -> Tape,
    F: Fn(&mut Tape, VarId) -> Result<VarId>,
{
    if eps <= 0.0 {
        return Err(Error::config(format!("grad_check: eps must be > 0, got {eps}")));
    }

    let mut tape = make_tape();
    let vx = tape.leaf(x.clone(), true)?;
    let y = f(&mut tape, vx)?;
    tape.scalar_value(y)?;
    tape.backward(y)?;
    let autodiff: Vec<f64> = match tape.grad(vx) {
        Some(g) => g.to_vec(),
        None => vec![0.0; x.data.len()],
    };

    let eval = |probe: &DiffTensor| -> Result<f64> {
        let mut t = make_tape();
        let v = t.leaf(probe.clone(), false)?;
        let out = f(&mut t, v)?;
        t.scalar_value(out)
    };

    let mut max_err = 0.0f64;
    let mut probe = x.clone();
    for (i, &ad) in autodiff.iter().enumerate() {
        let orig = probe.data[i];
        probe.data[i] = orig + eps;
        let plus = eval(&probe)?;
        probe.data[i] = orig - eps;
        let minus = eval(&probe)?;
        probe.data[i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        if !fd.is_finite() {
            return Err(Error::numeric(format!(
                "grad_check: non-finite central difference at coordinate {i}"
            )));
        }
        let err = (ad - fd).abs() / fd.abs().max(1.0);
        if err > max_err {
            max_err = err;
        }
    }
    Ok(max_err)
}
