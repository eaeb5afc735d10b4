//! Tape-based reverse-mode differentiation over the tensor kernels.
//!
//! Every operation appends a [`Node`] holding its output value, so parents
//! always precede children and a backward sweep is a single reverse walk.
//! Leaves that do not require a gradient (inputs, frozen parameters) are
//! skipped entirely, as is any subgraph that cannot reach a leaf that does.

mod gradcheck;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::Tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, TensorCheck};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Create,
    Matmul,
    Conv2dSame,
    Maxpool2,
    Relu,
    SoftmaxRows,
    Dropout,
    AddBias,
    Flatten,
    CrossEntropy,
    Scale,
    Sum,
    Dot,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { requires_grad: bool },
    Matmul(NodeId, NodeId),
    Conv2d { input: NodeId, kernel: NodeId, bias: NodeId, stride: usize },
    Maxpool2 { input: NodeId, argmax: Vec<usize> },
    Relu(NodeId),
    Softmax(NodeId),
    /// `mask` already carries the survivor scale.
    Dropout { input: NodeId, mask: Tensor },
    AddBias(NodeId, NodeId),
    Flatten(NodeId),
    CrossEntropy { probs: NodeId, labels: Vec<usize> },
    Scale(NodeId, f64),
    Sum(NodeId),
    /// Inner product with a constant tensor.
    Dot { input: NodeId, weights: Tensor },
    Mul(NodeId, NodeId),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf { .. } => OpKind::Create,
            Op::Matmul(..) => OpKind::Matmul,
            Op::Conv2d { .. } => OpKind::Conv2dSame,
            Op::Maxpool2 { .. } => OpKind::Maxpool2,
            Op::Relu(_) => OpKind::Relu,
            Op::Softmax(_) => OpKind::SoftmaxRows,
            Op::Dropout { .. } => OpKind::Dropout,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Flatten(_) => OpKind::Flatten,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::Scale(..) => OpKind::Scale,
            Op::Sum(_) => OpKind::Sum,
            Op::Dot { .. } => OpKind::Dot,
            Op::Mul(..) => OpKind::Mul,
        }
    }

    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf { .. } => vec![],
            Op::Matmul(a, b) | Op::AddBias(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Conv2d { input, kernel, bias, .. } => vec![*input, *kernel, *bias],
            Op::Maxpool2 { input, .. }
            | Op::Dropout { input, .. }
            | Op::Dot { input, .. }
            | Op::Relu(input)
            | Op::Softmax(input)
            | Op::Flatten(input)
            | Op::Scale(input, _)
            | Op::Sum(input) => vec![*input],
            Op::CrossEntropy { probs, .. } => vec![*probs],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    op: Op,
    value: Tensor,
}

impl Node {
    pub fn kind(&self) -> OpKind {
        self.op.kind()
    }

    pub fn parents(&self) -> Vec<NodeId> {
        self.op.parents()
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }
}

/// Deliberate backward-rule defects, used to prove the gradient checker
/// actually catches broken kernels.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// ReLU passes the upstream gradient through without masking.
    ReluBackward,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<Fault>,
}

/// Gradients of every grad-requiring leaf, keyed by node id.
pub type Gradients = BTreeMap<NodeId, Tensor>;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn with_fault(fault: Option<Fault>) -> Self {
        Tape {
            nodes: Vec::new(),
            fault,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf { requires_grad }, value)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Matmul(a, b), v))
    }

    pub fn conv2d_same(&mut self, input: NodeId, kernel: NodeId, bias: NodeId, stride: usize) -> Result<NodeId> {
        let v = kernels::conv2d_same(self.value(input), self.value(kernel), self.value(bias), stride)?;
        Ok(self.push(
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            },
            v,
        ))
    }

    pub fn maxpool2(&mut self, input: NodeId) -> Result<NodeId> {
        let pooled = kernels::maxpool2(self.value(input))?;
        Ok(self.push(
            Op::Maxpool2 {
                input,
                argmax: pooled.argmax,
            },
            pooled.output,
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = kernels::relu(self.value(x));
        self.push(Op::Relu(x), v)
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = kernels::softmax_rows(self.value(x))?;
        Ok(self.push(Op::Softmax(x), v))
    }

    /// Multiplies by a precomputed dropout mask (zeros and survivor scales).
    pub fn dropout(&mut self, x: NodeId, mask: Tensor) -> Result<NodeId> {
        let v = kernels::mul(self.value(x), &mask)?;
        Ok(self.push(Op::Dropout { input: x, mask }, v))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = kernels::add_bias(self.value(x), self.value(bias))?;
        Ok(self.push(Op::AddBias(x, bias), v))
    }

    /// Collapses every axis after the first: `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let dims = self.value(x).dims();
        let n = dims.first().copied().unwrap_or(1);
        let rest = dims.iter().skip(1).product();
        let v = self.value(x).reshape(&[n, rest])?;
        Ok(self.push(Op::Flatten(x), v))
    }

    pub fn cross_entropy(&mut self, probs: NodeId, labels: &[usize]) -> Result<NodeId> {
        let v = kernels::cross_entropy(self.value(probs), labels)?;
        Ok(self.push(
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
            },
            v,
        ))
    }

    pub fn scale(&mut self, x: NodeId, alpha: f64) -> NodeId {
        let v = kernels::scale(self.value(x), alpha);
        self.push(Op::Scale(x, alpha), v)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = kernels::sum_all(self.value(x));
        self.push(Op::Sum(x), v)
    }

    pub fn dot(&mut self, x: NodeId, weights: Tensor) -> Result<NodeId> {
        let v = kernels::dot(self.value(x), &weights)?;
        Ok(self.push(Op::Dot { input: x, weights }, v))
    }

    /// Elementwise product of two same-shaped nodes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = kernels::mul(self.value(a), self.value(b))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    /// Bytes identifying every piecewise-linear branch taken on this tape:
    /// ReLU sign pattern and maxpool winners. Two evaluations with equal
    /// signatures lie on the same smooth piece.
    pub fn branch_signature(&self) -> Vec<u8> {
        let mut sig = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    let v = self.value(*x).to_f64_vec();
                    sig.extend(v.iter().map(|&e| (e > 0.0) as u8));
                }
                Op::Maxpool2 { argmax, .. } => {
                    sig.extend(argmax.iter().flat_map(|&i| (i as u64).to_le_bytes()));
                }
                _ => {}
            }
        }
        sig
    }

    /// Re-executes every recorded op from the stored leaves.
    pub fn replay(&self) -> Result<Tape> {
        let mut out = Tape::with_fault(self.fault);
        for node in &self.nodes {
            match &node.op {
                Op::Leaf { requires_grad } => {
                    out.leaf(node.value.clone(), *requires_grad);
                }
                Op::Matmul(a, b) => {
                    out.matmul(*a, *b)?;
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                } => {
                    out.conv2d_same(*input, *kernel, *bias, *stride)?;
                }
                Op::Maxpool2 { input, .. } => {
                    out.maxpool2(*input)?;
                }
                Op::Relu(x) => {
                    out.relu(*x);
                }
                Op::Softmax(x) => {
                    out.softmax_rows(*x)?;
                }
                Op::Dropout { input, mask } => {
                    out.dropout(*input, mask.clone())?;
                }
                Op::AddBias(x, b) => {
                    out.add_bias(*x, *b)?;
                }
                Op::Flatten(x) => {
                    out.flatten(*x)?;
                }
                Op::CrossEntropy { probs, labels } => {
                    out.cross_entropy(*probs, labels)?;
                }
                Op::Scale(x, a) => {
                    out.scale(*x, *a);
                }
                Op::Sum(x) => {
                    out.sum(*x);
                }
                Op::Dot { input, weights } => {
                    out.dot(*input, weights.clone())?;
                }
                Op::Mul(a, b) => {
                    out.mul(*a, *b)?;
                }
            }
        }
        Ok(out)
    }

    fn needs_grad(&self) -> Vec<bool> {
        let mut needs = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let n = match &node.op {
                Op::Leaf { requires_grad } => *requires_grad,
                op => op.parents().iter().any(|p| needs[p.0]),
            };
            needs.push(n);
        }
        needs
    }

    /// Reverse sweep from a rank-0 `loss`. Returns the gradient of every
    /// leaf that requires one; leaves the loss does not depend on get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.rank() != 0 {
            return Err(Error::NotScalar(loss_value.dims().to_vec()));
        }
        let needs = self.needs_grad();
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0, loss_value.dtype()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if let Op::Leaf { .. } = node.op {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &needs, &mut grads)?;
        }

        let mut out = Gradients::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { requires_grad: true } = node.op {
                let g = grads[i].take().unwrap_or_else(|| node.value.zeros_like());
                out.insert(NodeId(i), g);
            }
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &Tensor, needs: &[bool], grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut send = |id: NodeId, delta: Tensor| -> Result<()> {
            if !needs[id.0] {
                return Ok(());
            }
            grads[id.0] = Some(match grads[id.0].take() {
                Some(acc) => kernels::add(&acc, &delta)?,
                None => delta,
            });
            Ok(())
        };
        match &node.op {
            Op::Leaf { .. } => {}
            Op::Matmul(a, b) => {
                if needs[a.0] {
                    let bt = kernels::transpose2(self.value(*b))?;
                    send(*a, kernels::matmul(g, &bt)?)?;
                }
                if needs[b.0] {
                    let at = kernels::transpose2(self.value(*a))?;
                    send(*b, kernels::matmul(&at, g)?)?;
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            } => {
                if needs[input.0] || needs[kernel.0] || needs[bias.0] {
                    let cg = kernels::conv2d_same_backward(
                        self.value(*input),
                        self.value(*kernel),
                        g,
                        *stride,
                        needs[input.0],
                    )?;
                    if let Some(dx) = cg.input {
                        send(*input, dx)?;
                    }
                    send(*kernel, cg.kernel)?;
                    send(*bias, cg.bias)?;
                }
            }
            Op::Maxpool2 { input, argmax } => {
                let dx = kernels::maxpool2_backward(self.value(*input).dims(), argmax, g)?;
                send(*input, dx)?;
            }
            Op::Relu(x) => {
                let dx = match self.fault {
                    Some(Fault::ReluBackward) => g.clone(),
                    None => kernels::relu_backward(self.value(*x), g)?,
                };
                send(*x, dx)?;
            }
            Op::Softmax(x) => {
                send(*x, kernels::softmax_backward(&node.value, g)?)?;
            }
            Op::Dropout { input, mask } => {
                send(*input, kernels::mul(g, mask)?)?;
            }
            Op::AddBias(x, b) => {
                if needs[b.0] {
                    send(*b, kernels::sum_to_last_axis(g))?;
                }
                send(*x, g.clone())?;
            }
            Op::Flatten(x) => {
                send(*x, g.reshape(self.value(*x).dims())?)?;
            }
            Op::CrossEntropy { probs, labels } => {
                // Over a softmax, differentiate the pair as one op with
                // respect to the logits and bypass the softmax node.
                if let Op::Softmax(logits) = self.nodes[probs.0].op {
                    let dz = kernels::softmax_cross_entropy_backward(self.value(*probs), labels, g)?;
                    send(logits, dz)?;
                } else {
                    send(*probs, kernels::cross_entropy_backward(self.value(*probs), labels, g)?)?;
                }
            }
            Op::Scale(x, alpha) => {
                send(*x, kernels::scale(g, *alpha))?;
            }
            Op::Sum(x) => {
                send(*x, kernels::fill_like(self.value(*x).dims(), g))?;
            }
            Op::Dot { input, weights } => {
                send(*input, kernels::scale_by_scalar(weights, g)?)?;
            }
            Op::Mul(a, b) => {
                let (da, db) = (kernels::mul(g, self.value(*b))?, kernels::mul(g, self.value(*a))?);
                send(*a, da)?;
                send(*b, db)?;
            }
        }
        Ok(())
    }
}
