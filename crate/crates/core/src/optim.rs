//! Named parameter store and Adam.
//!
//! Parameters live outside any tape. Each training step registers them as
//! leaves on a fresh tape, runs forward/backward, then feeds the gradients
//! back here. Iteration order is the declaration order, which makes
//! checkpoints and updates deterministic.

use crate::error::{Error, Result};
use crate::tensor::{DiffTensor, Tape, VarId};

pub struct ParamStore {
    names: Vec<String>,
    values: Vec<DiffTensor>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: DiffTensor) -> usize {
        debug_assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter {name}"
        );
        self.names.push(name.to_string());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, idx: usize) -> &DiffTensor {
        &self.values[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut DiffTensor {
        &mut self.values[idx]
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DiffTensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter())
    }

    /// Register every parameter on a tape as a gradient-tracked leaf.
    /// Returned handles are index-aligned with the store.
    pub fn leaves(&self, tape: &mut Tape) -> Result<Vec<VarId>> {
        self.values
            .iter()
            .map(|v| tape.leaf(v.clone(), true))
            .collect()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }
}

/// Adam with bias correction.
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let m = (0..params.len())
            .map(|i| vec![0.0; params.get(i).numel()])
            .collect();
        let v = (0..params.len())
            .map(|i| vec![0.0; params.get(i).numel()])
            .collect();
        Adam {
            learning_rate,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    /// Apply one update. `grads[i]` pairs with parameter `i`; `None` means
    /// the parameter received no gradient this step.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Option<Vec<f64>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::dim(format!(
                "adam: {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (idx, grad) in grads.iter().enumerate() {
            let Some(g) = grad else { continue };
            let p = params.get_mut(idx);
            if g.len() != p.data.len() {
                return Err(Error::dim(format!(
                    "adam: gradient length {} != parameter length {} for {}",
                    g.len(),
                    p.data.len(),
                    idx
                )));
            }
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..g.len() {
                let gi = g[i];
                if !gi.is_finite() {
                    return Err(Error::numeric(format!(
                        "adam: non-finite gradient for parameter {idx} at {i}"
                    )));
                }
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.learning_rate = learning_rate;
    }
}
