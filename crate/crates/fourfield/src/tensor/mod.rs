//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Graph`] is an append-only arena of nodes; a [`Tensor`] is a cheap
//! handle into it. Every operation evaluates eagerly and records enough
//! structure for [`Tensor::backward`] to build the gradient computation
//! *as new graph nodes*, so gradients are themselves differentiable — the
//! one second-order pattern the R1 penalty needs falls out of replaying
//! the extended graph.
//!
//! Values are checked for NaN/Inf as they are produced; a non-finite
//! result is an [`Error::NonFinite`], never a silent poison. Graphs are
//! single-threaded by construction (`Rc` handles); detached values are
//! plain `Vec<f64>` and safe to move across threads.

pub mod kernels;

mod backward;
mod gradcheck;

pub use gradcheck::{grad_check, GradCheckReport};

use crate::error::{Error, Result};
use kernels::ConvSpec;
pub use kernels::PadMode;
use std::cell::RefCell;
use std::rc::Rc;

/// Operation recorded at a node. Fields are parent node ids; scalar and
/// axis payloads are kept for op provenance even where the backward rule
/// does not read them.
#[derive(Debug, Clone)]
#[allow(dead_code)]
pub(crate) enum Op {
    Leaf { requires_grad: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize, f64),
    Exp(usize),
    Log(usize),
    Sqrt(usize),
    Sigmoid(usize),
    Softplus(usize),
    LeakyRelu(usize, f64),
    Sin(usize),
    Cos(usize),
    Matmul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    BroadcastTo(usize),
    SumAxes(usize, Vec<usize>),
    Concat(Vec<usize>, usize),
    Slice(usize, Vec<(usize, usize)>),
    PadSlice(usize, Vec<(usize, usize)>),
    Im2Col(usize, ConvSpec),
    Col2Im(usize, ConvSpec),
    Upsample2x(usize),
    Downsample2xSum(usize),
    FlipLast(usize),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf { .. } => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Matmul(a, b) => vec![*a, *b],
            Neg(a) | Scale(a, _) | AddScalar(a, _) | Exp(a) | Log(a) | Sqrt(a) | Sigmoid(a)
            | Softplus(a) | LeakyRelu(a, _) | Sin(a) | Cos(a) | Transpose(a) | Reshape(a)
            | BroadcastTo(a) | SumAxes(a, _) | Slice(a, _) | PadSlice(a, _) | Im2Col(a, _)
            | Col2Im(a, _) | Upsample2x(a) | Downsample2xSum(a) | FlipLast(a) => vec![*a],
            Concat(ps, _) => ps.clone(),
        }
    }
}

pub(crate) struct Node {
    pub op: Op,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub needs_grad: bool,
}

#[derive(Default)]
pub(crate) struct GraphInner {
    pub nodes: Vec<Node>,
    /// Sign bits of every leaky-relu input, in evaluation order. Used by
    /// grad_check to detect kink crossings between perturbed evaluations.
    pub kink_signs: Vec<bool>,
}

/// An append-only computation graph. Cloning shares the arena.
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

/// Handle to one node of a [`Graph`].
#[derive(Clone)]
pub struct Tensor {
    graph: Graph,
    id: usize,
    shape: Vec<usize>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape)
            .finish()
    }
}

/// Gradients of a scalar loss with respect to requested leaves, keyed by
/// node identity. Shapes mirror the leaves.
#[derive(Debug)]
pub struct GradientMap {
    entries: Vec<(usize, Vec<f64>)>,
}

impl GradientMap {
    pub fn get(&self, leaf: &Tensor) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(id, _)| *id == leaf.id)
            .map(|(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn push(&mut self, id: usize, values: Vec<f64>) {
        self.entries.push((id, values));
    }

    pub(crate) fn new() -> Self {
        GradientMap { entries: vec![] }
    }
}

fn check_finite(op: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    /// Snapshot of the leaky-relu input signs seen so far.
    pub fn kink_signature(&self) -> Vec<bool> {
        self.inner.borrow().kink_signs.clone()
    }

    fn same_graph(&self, other: &Graph) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    pub(crate) fn push_node(&self, op: Op, shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        let needs_grad = match &op {
            Op::Leaf { requires_grad } => *requires_grad,
            other => {
                let inner = self.inner.borrow();
                other.parents().iter().any(|&p| inner.nodes[p].needs_grad)
            }
        };
        let mut inner = self.inner.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            op,
            shape: shape.clone(),
            values,
            needs_grad,
        });
        Tensor {
            graph: self.clone(),
            id,
            shape,
        }
    }

    pub(crate) fn handle(&self, id: usize) -> Tensor {
        let shape = self.inner.borrow().nodes[id].shape.clone();
        Tensor {
            graph: self.clone(),
            id,
            shape,
        }
    }

    pub(crate) fn with_inner<R>(&self, f: impl FnOnce(&GraphInner) -> R) -> R {
        f(&self.inner.borrow())
    }

    pub(crate) fn push_kink_signs(&self, values: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        inner.kink_signs.extend(values.iter().map(|&v| v > 0.0));
    }

    /// Create a graph leaf. `requires_grad` marks it as a differentiation
    /// target for `backward`.
    pub fn leaf(&self, shape: &[usize], values: &[f64], requires_grad: bool) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "leaf",
                details: format!("zero extent in shape {shape:?}"),
            });
        }
        let expected = kernels::numel(shape);
        if expected != values.len() {
            return Err(Error::CountMismatch {
                shape: shape.to_vec(),
                expected,
                got: values.len(),
            });
        }
        check_finite("leaf", values)?;
        Ok(self.push_node(Op::Leaf { requires_grad }, shape.to_vec(), values.to_vec()))
    }

    /// Leaf with `requires_grad = false`.
    pub fn constant(&self, shape: &[usize], values: &[f64]) -> Result<Tensor> {
        self.leaf(shape, values, false)
    }

    pub fn scalar(&self, v: f64) -> Result<Tensor> {
        self.constant(&[1], &[v])
    }

    pub fn zeros(&self, shape: &[usize]) -> Result<Tensor> {
        self.constant(shape, &vec![0.0; kernels::numel(shape)])
    }

    pub fn ones(&self, shape: &[usize]) -> Result<Tensor> {
        self.constant(shape, &vec![1.0; kernels::numel(shape)])
    }
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        kernels::numel(&self.shape)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub(crate) fn id(&self) -> usize {
        self.id
    }

    /// Copy of the node's values (detached from the graph).
    pub fn values(&self) -> Vec<f64> {
        self.graph.inner.borrow().nodes[self.id].values.clone()
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> f64 {
        let inner = self.graph.inner.borrow();
        let n = &inner.nodes[self.id];
        assert_eq!(n.values.len(), 1, "item() on non-scalar {:?}", n.shape);
        n.values[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.inner.borrow().nodes[self.id].needs_grad
    }

    fn binary_shape(&self, rhs: &Tensor, op: &'static str) -> Result<Vec<usize>> {
        assert!(
            self.graph.same_graph(&rhs.graph),
            "operands belong to different graphs"
        );
        kernels::broadcast_shape(&self.shape, &rhs.shape).ok_or_else(|| Error::ShapeMismatch {
            op,
            details: format!("{:?} vs {:?}", self.shape, rhs.shape),
        })
    }

    fn ew2(
        &self,
        rhs: &Tensor,
        name: &'static str,
        make: impl Fn(usize, usize) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let out_shape = self.binary_shape(rhs, name)?;
        let values = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[rhs.id];
            kernels::ew_binary(&a.values, &a.shape, &b.values, &b.shape, &out_shape, f)
        };
        check_finite(name, &values)?;
        Ok(self
            .graph
            .push_node(make(self.id, rhs.id), out_shape, values))
    }

    fn ew1(
        &self,
        name: &'static str,
        op: Op,
        f: impl Fn(f64) -> f64,
    ) -> Result<Tensor> {
        let values: Vec<f64> = {
            let inner = self.graph.inner.borrow();
            inner.nodes[self.id].values.iter().map(|&v| f(v)).collect()
        };
        check_finite(name, &values)?;
        Ok(self.graph.push_node(op, self.shape.clone(), values))
    }

    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.ew2(rhs, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.ew2(rhs, "sub", Op::Sub, |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.ew2(rhs, "mul", Op::Mul, |a, b| a * b)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor> {
        self.ew2(rhs, "div", Op::Div, |a, b| a / b)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.ew1("neg", Op::Neg(self.id), |v| -v)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.ew1("scale", Op::Scale(self.id, c), |v| v * c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        self.ew1("add_scalar", Op::AddScalar(self.id, c), |v| v + c)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.ew1("exp", Op::Exp(self.id), f64::exp)
    }

    /// Natural log; non-positive inputs surface as `NonFinite("log")`.
    pub fn log(&self) -> Result<Tensor> {
        self.ew1("log", Op::Log(self.id), f64::ln)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        self.ew1("sqrt", Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.ew1("sigmoid", Op::Sigmoid(self.id), |v| {
            // Split on sign so exp never overflows.
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        })
    }

    /// softplus(x) = ln(1 + e^x), evaluated overflow-safe.
    pub fn softplus(&self) -> Result<Tensor> {
        self.ew1("softplus", Op::Softplus(self.id), |v| {
            if v > 30.0 {
                v
            } else {
                v.exp().ln_1p()
            }
        })
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor> {
        // Record input signs so grad_check can spot kink crossings.
        let input = self.values();
        self.graph.push_kink_signs(&input);
        self.ew1("leaky_relu", Op::LeakyRelu(self.id, slope), |v| {
            if v > 0.0 {
                v
            } else {
                slope * v
            }
        })
    }

    pub fn sin(&self) -> Result<Tensor> {
        self.ew1("sin", Op::Sin(self.id), f64::sin)
    }

    pub fn cos(&self) -> Result<Tensor> {
        self.ew1("cos", Op::Cos(self.id), f64::cos)
    }

    /// Batched matrix product over the last two axes. Leading axes
    /// broadcast right-aligned.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        assert!(
            self.graph.same_graph(&rhs.graph),
            "operands belong to different graphs"
        );
        let (a_shape, b_shape) = (&self.shape, &rhs.shape);
        if a_shape.len() < 2 || b_shape.len() < 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                details: format!("need rank >= 2, got {a_shape:?} x {b_shape:?}"),
            });
        }
        let k_a = a_shape[a_shape.len() - 1];
        let k_b = b_shape[b_shape.len() - 2];
        if k_a != k_b {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                details: format!("inner extents differ: {a_shape:?} x {b_shape:?}"),
            });
        }
        let batch = kernels::broadcast_shape(
            &a_shape[..a_shape.len() - 2],
            &b_shape[..b_shape.len() - 2],
        )
        .ok_or_else(|| Error::ShapeMismatch {
            op: "matmul",
            details: format!("batch extents not broadcastable: {a_shape:?} x {b_shape:?}"),
        })?;
        let mut out_shape = batch;
        out_shape.push(a_shape[a_shape.len() - 2]);
        out_shape.push(b_shape[b_shape.len() - 1]);

        let values = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            let b = &inner.nodes[rhs.id];
            kernels::matmul(&a.values, &a.shape, &b.values, &b.shape, &out_shape)
        };
        check_finite("matmul", &values)?;
        Ok(self
            .graph
            .push_node(Op::Matmul(self.id, rhs.id), out_shape, values))
    }

    /// Swap the last two axes.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.shape.len() < 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                details: format!("need rank >= 2, got {:?}", self.shape),
            });
        }
        let mut out_shape = self.shape.clone();
        let n = out_shape.len();
        out_shape.swap(n - 2, n - 1);
        let values = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            kernels::transpose_last2(&a.values, &a.shape)
        };
        Ok(self
            .graph
            .push_node(Op::Transpose(self.id), out_shape, values))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if kernels::numel(shape) != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                details: format!("{:?} -> {:?}", self.shape, shape),
            });
        }
        let values = self.values();
        Ok(self
            .graph
            .push_node(Op::Reshape(self.id), shape.to_vec(), values))
    }

    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        let ok = kernels::broadcast_shape(&self.shape, shape)
            .map(|s| s == shape)
            .unwrap_or(false);
        if !ok {
            return Err(Error::ShapeMismatch {
                op: "broadcast_to",
                details: format!("{:?} -> {:?}", self.shape, shape),
            });
        }
        let values = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            kernels::broadcast_to(&a.values, &a.shape, shape)
        };
        Ok(self
            .graph
            .push_node(Op::BroadcastTo(self.id), shape.to_vec(), values))
    }

    /// Sum over `axes`, keeping reduced axes as extent 1.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let mut axes: Vec<usize> = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.iter().any(|&a| a >= self.shape.len()) {
            return Err(Error::OutOfBounds {
                op: "sum_axes",
                details: format!("axes {axes:?} for shape {:?}", self.shape),
            });
        }
        let (values, out_shape) = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            kernels::sum_axes_keepdims(&a.values, &a.shape, &axes)
        };
        check_finite("sum", &values)?;
        Ok(self
            .graph
            .push_node(Op::SumAxes(self.id, axes), out_shape, values))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum_all(&self) -> Result<Tensor> {
        let axes: Vec<usize> = (0..self.shape.len()).collect();
        self.sum_axes(&axes)?.reshape(&[1])
    }

    /// Mean over `axes`, keeping reduced axes as extent 1.
    pub fn mean_axes(&self, axes: &[usize]) -> Result<Tensor> {
        let summed = self.sum_axes(axes)?;
        let n = self.numel() / summed.numel();
        summed.scale(1.0 / n as f64)
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        self.sum_all()?.scale(1.0 / self.numel() as f64)
    }

    /// Concatenate along `axis`.
    pub fn concat(tensors: &[&Tensor], axis: usize) -> Result<Tensor> {
        assert!(!tensors.is_empty(), "concat of zero tensors");
        let first = tensors[0];
        let ndim = first.shape.len();
        if axis >= ndim {
            return Err(Error::OutOfBounds {
                op: "concat",
                details: format!("axis {axis} for rank {ndim}"),
            });
        }
        let mut out_shape = first.shape.clone();
        for t in &tensors[1..] {
            assert!(
                first.graph.same_graph(&t.graph),
                "operands belong to different graphs"
            );
            if t.shape.len() != ndim
                || (0..ndim).any(|d| d != axis && t.shape[d] != first.shape[d])
            {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    details: format!("{:?} vs {:?} along axis {axis}", first.shape, t.shape),
                });
            }
            out_shape[axis] += t.shape[axis];
        }
        let values = {
            let inner = first.graph.inner.borrow();
            let parts: Vec<(&[f64], &[usize])> = tensors
                .iter()
                .map(|t| {
                    let n = &inner.nodes[t.id];
                    (n.values.as_slice(), n.shape.as_slice())
                })
                .collect();
            kernels::concat(&parts, axis, &out_shape)
        };
        let ids: Vec<usize> = tensors.iter().map(|t| t.id).collect();
        Ok(first
            .graph
            .push_node(Op::Concat(ids, axis), out_shape, values))
    }

    /// Sub-block `[(start, end); ndim]`, end exclusive.
    pub fn slice(&self, ranges: &[(usize, usize)]) -> Result<Tensor> {
        if ranges.len() != self.shape.len()
            || ranges
                .iter()
                .zip(&self.shape)
                .any(|(&(s, e), &d)| s >= e || e > d)
        {
            return Err(Error::OutOfBounds {
                op: "slice",
                details: format!("ranges {ranges:?} for shape {:?}", self.shape),
            });
        }
        let (values, out_shape) = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            kernels::slice(&a.values, &a.shape, ranges)
        };
        Ok(self
            .graph
            .push_node(Op::Slice(self.id, ranges.to_vec()), out_shape, values))
    }

    /// Inverse of `slice`: embed into zeros of `out_shape` at `ranges`.
    pub fn pad_slice(&self, ranges: &[(usize, usize)], out_shape: &[usize]) -> Result<Tensor> {
        let in_shape: Vec<usize> = ranges.iter().map(|&(s, e)| e - s).collect();
        if in_shape != self.shape
            || ranges.len() != out_shape.len()
            || ranges
                .iter()
                .zip(out_shape)
                .any(|(&(s, e), &d)| s >= e || e > d)
        {
            return Err(Error::OutOfBounds {
                op: "pad_slice",
                details: format!("ranges {ranges:?} into {out_shape:?}"),
            });
        }
        let values = {
            let inner = self.graph.inner.borrow();
            let a = &inner.nodes[self.id];
            kernels::pad_slice(&a.values, ranges, out_shape)
        };
        Ok(self.graph.push_node(
            Op::PadSlice(self.id, ranges.to_vec()),
            out_shape.to_vec(),
            values,
        ))
    }

    /// Unfold a [B,C,H,W] image for convolution: [B, oh·ow, C·kh·kw].
    pub fn im2col(
        &self,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
        pad_mode: PadMode,
    ) -> Result<Tensor> {
        if self.shape.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "im2col",
                details: format!("need [B,C,H,W], got {:?}", self.shape),
            });
        }
        let spec = ConvSpec {
            batch: self.shape[0],
            in_ch: self.shape[1],
            h: self.shape[2],
            w: self.shape[3],
            kh,
            kw,
            stride,
            pad,
            pad_mode,
        };
        if spec.h + 2 * pad < kh || spec.w + 2 * pad < kw {
            return Err(Error::ShapeMismatch {
                op: "im2col",
                details: format!("kernel {kh}x{kw} too large for {:?}", self.shape),
            });
        }
        let values = {
            let inner = self.graph.inner.borrow();
            kernels::im2col(&inner.nodes[self.id].values, &spec)
        };
        let shape = spec.col_shape();
        Ok(self.graph.push_node(Op::Im2Col(self.id, spec), shape, values))
    }

    pub(crate) fn col2im(&self, spec: ConvSpec) -> Result<Tensor> {
        let values = {
            let inner = self.graph.inner.borrow();
            kernels::col2im(&inner.nodes[self.id].values, &spec)
        };
        let shape = spec.image_shape();
        Ok(self
            .graph
            .push_node(Op::Col2Im(self.id, spec), shape, values))
    }

    /// Nearest-neighbour 2× upsample of [B,C,H,W].
    pub fn upsample2x(&self) -> Result<Tensor> {
        if self.shape.len() != 4 {
            return Err(Error::ShapeMismatch {
                op: "upsample2x",
                details: format!("need [B,C,H,W], got {:?}", self.shape),
            });
        }
        let mut shape = self.shape.clone();
        shape[2] *= 2;
        shape[3] *= 2;
        let values = {
            let inner = self.graph.inner.borrow();
            kernels::upsample2x(&inner.nodes[self.id].values, &self.shape)
        };
        Ok(self.graph.push_node(Op::Upsample2x(self.id), shape, values))
    }

    pub(crate) fn downsample2x_sum(&self) -> Result<Tensor> {
        let mut shape = self.shape.clone();
        shape[2] /= 2;
        shape[3] /= 2;
        let values = {
            let inner = self.graph.inner.borrow();
            kernels::downsample2x_sum(&inner.nodes[self.id].values, &self.shape)
        };
        Ok(self
            .graph
            .push_node(Op::Downsample2xSum(self.id), shape, values))
    }

    /// Reverse the last axis (horizontal flip in image layouts).
    pub fn flip_last(&self) -> Result<Tensor> {
        let values = {
            let inner = self.graph.inner.borrow();
            kernels::flip_last(&inner.nodes[self.id].values, &self.shape)
        };
        Ok(self
            .graph
            .push_node(Op::FlipLast(self.id), self.shape.clone(), values))
    }

    /// Gradient sum-reduction to `shape` (the adjoint of broadcasting).
    pub(crate) fn sum_to(&self, shape: &[usize]) -> Result<Tensor> {
        if self.shape == shape {
            return Ok(self.clone());
        }
        let extra = self.shape.len() - shape.len();
        let mut axes: Vec<usize> = (0..extra).collect();
        for (i, &d) in shape.iter().enumerate() {
            if d == 1 && self.shape[extra + i] != 1 {
                axes.push(extra + i);
            }
        }
        let reduced = if axes.is_empty() {
            self.clone()
        } else {
            self.sum_axes(&axes)?
        };
        reduced.reshape(shape)
    }
}
