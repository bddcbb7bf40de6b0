//! Eager, tape-based reverse-mode differentiation over real tensors and complex
//! matrices.
//!
//! Complex nodes are differentiated as pairs of independent reals: the gradient
//! of a complex node is stored as a complex matrix whose real plane holds
//! ∂L/∂Re and whose imaginary plane holds ∂L/∂Im. With `G = ∂L/∂Re + i ∂L/∂Im`
//! a loss perturbation is `dL = Re Σ conj(G) ⊙ dX`, which gives the familiar
//! rules `G_A = G B†`, `G_B = A† G` for `C = A B`.
//!
//! ```
//! use qfeedback::autodiff::{RealTensor, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(RealTensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.scalar(x), 6.0);
//! ```

mod backward;
mod fused;
mod ops;

pub use backward::Gradients;
pub use fused::Gate;

use thiserror::Error;

use crate::tensor::{ComplexMatrix, LinalgError, TraceIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{op}: expected a {expected} node")]
    KindMismatch { op: &'static str, expected: &'static str },
    #[error("loss must be a 1x1 node, got {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("loss must be real-valued")]
    ComplexLoss,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Dense real tensor of rank at most two, row-major. Vectors are `n x 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TapeError> {
        if data.len() != rows * cols {
            return Err(TapeError::ShapeMismatch {
                op: "RealTensor::new",
                detail: format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Value held by a tape node.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(RealTensor),
    Complex(ComplexMatrix),
}

impl Value {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Value::Real(t) => t.shape(),
            Value::Complex(m) => m.shape(),
        }
    }

    pub fn as_real(&self) -> Option<&RealTensor> {
        match self {
            Value::Real(t) => Some(t),
            Value::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ComplexMatrix> {
        match self {
            Value::Complex(m) => Some(m),
            Value::Real(_) => None,
        }
    }

    fn zeros_like(&self) -> Value {
        match self {
            Value::Real(t) => Value::Real(RealTensor::zeros(t.rows, t.cols)),
            Value::Complex(m) => Value::Complex(ComplexMatrix::zeros(m.rows(), m.cols())),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Real(t) => t.data.iter().all(|x| x.is_finite()),
            Value::Complex(m) => m.is_finite(),
        }
    }
}

impl From<RealTensor> for Value {
    fn from(t: RealTensor) -> Self {
        Value::Real(t)
    }
}

impl From<ComplexMatrix> for Value {
    fn from(m: ComplexMatrix) -> Self {
        Value::Complex(m)
    }
}

/// Pauli axis of a rotation gate `exp(i θ/2 σ)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Clone, Debug)]
pub(crate) enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    ScaleBy { x: NodeId, s: NodeId },
    Mul(NodeId, NodeId),
    Sum(Vec<NodeId>),
    MatMul(NodeId, NodeId),
    Linear { w: NodeId, x: NodeId, col_start: usize },
    Kron(NodeId, NodeId),
    PartialTrace { x: NodeId, index: TraceIndex },
    TraceRe(NodeId),
    Adjoint(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Ln(NodeId),
    Recip(NodeId),
    Rotation { angles: NodeId, index: usize, axis: Axis },
    ApplyGate { gate: NodeId, state: NodeId, mask: usize },
    Cnot { state: NodeId, control: usize, target: usize },
    SelectRows { x: NodeId, rows: Vec<usize> },
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Circuit { angles: NodeId, state: NodeId, gates: std::sync::Arc<[fused::MaskedGate]> },
    Sandwich { v: NodeId, rho: NodeId, rows: Vec<usize>, block: usize },
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub value: Value,
    pub op: Op,
    pub requires_grad: bool,
}

/// Records a computation for one backward pass.
///
/// Nodes are appended in evaluation order, so every operation's inputs precede
/// it. A tape is single-threaded; independent rollouts use independent tapes.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Drops every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: impl Into<Value>) -> NodeId {
        self.push(value.into(), Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: impl Into<Value>) -> NodeId {
        self.push(value.into(), Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    /// Value of a real node. Panics on complex nodes.
    pub fn real(&self, id: NodeId) -> &RealTensor {
        self.nodes[id.0]
            .value
            .as_real()
            .expect("node is not real-valued")
    }

    /// Value of a complex node. Panics on real nodes.
    pub fn complex(&self, id: NodeId) -> &ComplexMatrix {
        self.nodes[id.0]
            .value
            .as_complex()
            .expect("node is not complex-valued")
    }

    /// The single entry of a real 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let t = self.real(id);
        debug_assert_eq!(t.shape(), (1, 1));
        t.data[0]
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Value, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&id| self.nodes[id.0].requires_grad)
    }
}
