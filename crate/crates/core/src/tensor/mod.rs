//! Minimal reverse-mode differentiable array engine.
//!
//! A [`Tape`] owns every tensor created during one forward pass as a
//! [`DiffTensor`] node plus the operation that produced it. Nodes are
//! referenced by copyable [`VarId`] handles; `backward` walks the record
//! in reverse and accumulates gradients additively into every node.
//! Tapes are single-context: build, run backward, read gradients, drop.

mod backward;
mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, grad_check_in};
pub(crate) use ops::matmul2;

use crate::error::{Error, Result};

/// Multi-dimensional `f64` array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

impl DiffTensor {
    /// Build a tensor, validating length and finiteness.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::dim(format!("zero-sized axis in shape {shape:?}")));
        }
        if data.len() != numel {
            return Err(Error::dim(format!(
                "data length {} does not match shape {:?} (numel {})",
                data.len(),
                shape,
                numel
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(DiffTensor {
            shape,
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        DiffTensor {
            shape,
            data: vec![0.0; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        DiffTensor {
            shape: vec![1],
            data: vec![v],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Interpret as 2-D, returning (rows, cols).
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::dim(format!("expected 2-D tensor, got shape {other:?}"))),
        }
    }

    /// Interpret as 3-D.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            [a, b, c] => Ok((*a, *b, *c)),
            other => Err(Error::dim(format!("expected 3-D tensor, got shape {other:?}"))),
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(pub(crate) usize);

/// One recorded operation. Forward byproducts needed by the backward pass
/// (softmax probabilities, dropout masks, attention weights) are cached
/// inline so replaying the tape is exact.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    LeakyRelu(VarId, f64),
    Dropout {
        x: VarId,
        mask: Option<Vec<f64>>,
    },
    Linear {
        x: VarId,
        w: VarId,
        b: VarId,
    },
    MatMul {
        a: VarId,
        b: VarId,
    },
    Conv1d {
        x: VarId,
        w: VarId,
        b: VarId,
        stride: usize,
        padding: usize,
    },
    Upsample {
        x: VarId,
        factor: usize,
    },
    Transpose(VarId),
    // Input kept for graph debugging; backward contributes nothing.
    StopGradient(#[allow(dead_code)] VarId),
    Sum(VarId),
    SmoothL1Mean {
        a: VarId,
        b: VarId,
    },
    SoftmaxCrossEntropy {
        logits: VarId,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Embed {
        table: VarId,
        indices: Vec<usize>,
    },
    StraightThrough {
        input: VarId,
    },
    SliceRows {
        x: VarId,
        start: usize,
    },
    SliceCols {
        x: VarId,
        start: usize,
    },
    ConcatCols {
        parts: Vec<VarId>,
    },
    ShiftRowsUp {
        x: VarId,
        n: usize,
    },
    RowDiff(VarId),
    LayerNorm {
        x: VarId,
        gamma: VarId,
        beta: VarId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    CausalAttention {
        q: VarId,
        k: VarId,
        v: VarId,
        attn: Vec<f64>,
    },
}

pub(crate) struct Node {
    pub tensor: DiffTensor,
    pub op: Op,
}

/// Ordered record of executed operations; inputs always precede outputs.
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    train_mode: bool,
    dropout_seed: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            train_mode: false,
            dropout_seed: 0,
        }
    }

    /// Tape that applies dropout masks drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            train_mode: true,
            dropout_seed: seed,
        }
    }

    pub fn is_training(&self) -> bool {
        self.train_mode
    }

    pub(crate) fn dropout_seed(&self) -> u64 {
        self.dropout_seed
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Register a leaf tensor. Gradients accumulate into it when
    /// `requires_grad` is set.
    pub fn leaf(&mut self, mut tensor: DiffTensor, requires_grad: bool) -> Result<VarId> {
        if let Some(pos) = tensor.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite leaf value at flat index {pos}"
            )));
        }
        tensor.requires_grad = requires_grad;
        tensor.grad = None;
        Ok(self.push(tensor, Op::Leaf))
    }

    /// Constant leaf: participates in forward math, never receives gradient.
    pub fn constant(&mut self, tensor: DiffTensor) -> Result<VarId> {
        self.leaf(tensor, false)
    }

    pub fn constant_vec(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<VarId> {
        let t = DiffTensor::from_vec(shape, data)?;
        self.constant(t)
    }

    pub(crate) fn push(&mut self, tensor: DiffTensor, op: Op) -> VarId {
        let id = VarId(self.nodes.len());
        self.nodes.push(Node { tensor, op });
        id
    }

    pub(crate) fn check_finite(&self, v: VarId, op_name: &str) -> Result<VarId> {
        let t = &self.nodes[v.0].tensor;
        if let Some(pos) = t.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::numeric(format!(
                "{op_name} produced non-finite value at flat index {pos}"
            )));
        }
        Ok(v)
    }

    pub fn value(&self, v: VarId) -> &DiffTensor {
        &self.nodes[v.0].tensor
    }

    pub fn data(&self, v: VarId) -> &[f64] {
        &self.nodes[v.0].tensor.data
    }

    pub fn shape(&self, v: VarId) -> &[usize] {
        &self.nodes[v.0].tensor.shape
    }

    /// Value of a scalar (single-element) node.
    pub fn scalar_value(&self, v: VarId) -> Result<f64> {
        let t = &self.nodes[v.0].tensor;
        if t.numel() != 1 {
            return Err(Error::dim(format!(
                "expected scalar, got shape {:?}",
                t.shape
            )));
        }
        Ok(t.data[0])
    }

    /// Gradient buffer of a node after `backward`, if one was accumulated.
    pub fn grad(&self, v: VarId) -> Option<&[f64]> {
        self.nodes[v.0].tensor.grad.as_deref()
    }

    /// Move a node's accumulated gradient out of the tape.
    pub fn take_grad(&mut self, v: VarId) -> Option<Vec<f64>> {
        self.nodes[v.0].tensor.grad.take()
    }

    pub(crate) fn shape2(&self, v: VarId) -> Result<(usize, usize)> {
        self.nodes[v.0].tensor.dims2()
    }
}
