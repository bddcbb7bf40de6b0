use num_complex::Complex64;

use super::{Axis, NodeId, Op, RealTensor, Tape, TapeError, Value};
use crate::tensor::{kron, partial_trace_indexed, ComplexMatrix, LinalgError, RegisterShape, TraceIndex};

fn mismatch(op: &'static str, detail: String) -> TapeError {
    TapeError::ShapeMismatch { op, detail }
}

/// `exp(i θ/2 σ) = cos(θ/2) I + i sin(θ/2) σ`
pub(crate) fn rotation_matrix(theta: f64, axis: Axis) -> ComplexMatrix {
    let (s, c) = (0.5 * theta).sin_cos();
    let z = Complex64::new(0.0, 0.0);
    let entries = match axis {
        Axis::X => [Complex64::new(c, 0.0), Complex64::new(0.0, s), Complex64::new(0.0, s), Complex64::new(c, 0.0)],
        Axis::Y => [Complex64::new(c, 0.0), Complex64::new(s, 0.0), Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
        Axis::Z => [Complex64::new(c, s), z, z, Complex64::new(c, -s)],
    };
    ComplexMatrix::from_entries(2, 2, &entries).expect("2x2")
}

pub(crate) fn apply_gate_kernel(gate: &ComplexMatrix, state: &ComplexMatrix, mask: usize) -> ComplexMatrix {
    let g = [gate.get(0, 0), gate.get(0, 1), gate.get(1, 0), gate.get(1, 1)];
    let cols = state.cols();
    let mut out = state.clone();
    let (ore, oim) = out.planes_mut();
    let (sre, sim) = (state.re(), state.im());
    for r0 in 0..state.rows() {
        if r0 & mask != 0 {
            continue;
        }
        let r1 = r0 | mask;
        for c in 0..cols {
            let x0 = Complex64::new(sre[r0 * cols + c], sim[r0 * cols + c]);
            let x1 = Complex64::new(sre[r1 * cols + c], sim[r1 * cols + c]);
            let y0 = g[0] * x0 + g[1] * x1;
            let y1 = g[2] * x0 + g[3] * x1;
            ore[r0 * cols + c] = y0.re;
            oim[r0 * cols + c] = y0.im;
            ore[r1 * cols + c] = y1.re;
            oim[r1 * cols + c] = y1.im;
        }
    }
    out
}

/// Row permutation of a controlled-X; self-inverse.
pub(crate) fn cnot_kernel(state: &ComplexMatrix, control: usize, target: usize) -> ComplexMatrix {
    let cols = state.cols();
    let mut out = state.clone();
    let (ore, oim) = out.planes_mut();
    for r in 0..state.rows() {
        if r & control != 0 {
            let src = r ^ target;
            ore[r * cols..(r + 1) * cols].copy_from_slice(&state.re()[src * cols..(src + 1) * cols]);
            oim[r * cols..(r + 1) * cols].copy_from_slice(&state.im()[src * cols..(src + 1) * cols]);
        }
    }
    out
}

fn map_real(t: &RealTensor, f: impl Fn(f64) -> f64) -> RealTensor {
    RealTensor {
        rows: t.rows,
        cols: t.cols,
        data: t.data.iter().map(|&x| f(x)).collect(),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    fn real_of(&self, op: &'static str, id: NodeId) -> Result<&RealTensor, TapeError> {
        self.node(id)
            .value
            .as_real()
            .ok_or(TapeError::KindMismatch { op, expected: "real" })
    }

    fn complex_of(&self, op: &'static str, id: NodeId) -> Result<&ComplexMatrix, TapeError> {
        self.node(id)
            .value
            .as_complex()
            .ok_or(TapeError::KindMismatch { op, expected: "complex" })
    }

    fn same_kind_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), TapeError> {
        let (va, vb) = (&self.node(a).value, &self.node(b).value);
        let same_kind = matches!(
            (va, vb),
            (Value::Real(_), Value::Real(_)) | (Value::Complex(_), Value::Complex(_))
        );
        if !same_kind || va.shape() != vb.shape() {
            return Err(mismatch(op, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        Ok(())
    }

    fn record(&mut self, value: Value, op: Op, inputs: &[NodeId]) -> NodeId {
        let rg = self.any_grad(inputs);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.same_kind_shape("add", a, b)?;
        let value = match (&self.node(a).value, &self.node(b).value) {
            (Value::Real(x), Value::Real(y)) => Value::Real(RealTensor {
                rows: x.rows,
                cols: x.cols,
                data: x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect(),
            }),
            (Value::Complex(x), Value::Complex(y)) => Value::Complex(x.add(y)?),
            _ => unreachable!(),
        };
        Ok(self.record(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        self.same_kind_shape("sub", a, b)?;
        let value = match (&self.node(a).value, &self.node(b).value) {
            (Value::Real(x), Value::Real(y)) => Value::Real(RealTensor {
                rows: x.rows,
                cols: x.cols,
                data: x.data.iter().zip(&y.data).map(|(p, q)| p - q).collect(),
            }),
            (Value::Complex(x), Value::Complex(y)) => Value::Complex(x.sub(y)?),
            _ => unreachable!(),
        };
        Ok(self.record(value, Op::Sub(a, b), &[a, b]))
    }

    /// Multiplication by a fixed real factor.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, TapeError> {
        let value = match &self.node(x).value {
            Value::Real(t) => Value::Real(map_real(t, |v| v * factor)),
            Value::Complex(m) => Value::Complex(m.scale(factor)),
        };
        Ok(self.record(value, Op::Scale(x, factor), &[x]))
    }

    /// Multiplication by a differentiable real scalar node.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId, TapeError> {
        let st = self.real_of("scale_by", s)?;
        if st.shape() != (1, 1) {
            return Err(mismatch("scale_by", format!("scalar expected, got {:?}", st.shape())));
        }
        let factor = st.data[0];
        let value = match &self.node(x).value {
            Value::Real(t) => Value::Real(map_real(t, |v| v * factor)),
            Value::Complex(m) => Value::Complex(m.scale(factor)),
        };
        Ok(self.record(value, Op::ScaleBy { x, s }, &[x, s]))
    }

    /// Elementwise product of real tensors.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (x, y) = (self.real_of("mul", a)?, self.real_of("mul", b)?);
        if x.shape() != y.shape() {
            return Err(mismatch("mul", format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        let value = RealTensor {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
        };
        Ok(self.record(Value::Real(value), Op::Mul(a, b), &[a, b]))
    }

    /// Sum of equally shaped nodes of one kind, accumulated in list order.
    pub fn sum(&mut self, ids: &[NodeId]) -> Result<NodeId, TapeError> {
        let (&first, rest) = ids
            .split_first()
            .ok_or_else(|| mismatch("sum", "empty input list".into()))?;
        for &id in rest {
            self.same_kind_shape("sum", first, id)?;
        }
        let mut acc = self.node(first).value.zeros_like();
        for &id in ids {
            match (&mut acc, &self.node(id).value) {
                (Value::Real(a), Value::Real(b)) => {
                    for (p, q) in a.data.iter_mut().zip(&b.data) {
                        *p += q;
                    }
                }
                (Value::Complex(a), Value::Complex(b)) => a.add_assign(b),
                _ => unreachable!(),
            }
        }
        Ok(self.record(acc, Op::Sum(ids.to_vec()), ids))
    }

    /// Complex matrix product.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let value = self
            .complex_of("matmul", a)?
            .matmul(self.complex_of("matmul", b)?)?;
        Ok(self.record(Value::Complex(value), Op::MatMul(a, b), &[a, b]))
    }

    /// `W[:, col_start..col_start + len(x)] · x` for a real matrix `W` and real
    /// column vector `x`.
    pub fn linear(&mut self, w: NodeId, x: NodeId, col_start: usize) -> Result<NodeId, TapeError> {
        let wt = self.real_of("linear", w)?;
        let xt = self.real_of("linear", x)?;
        if xt.cols != 1 || col_start + xt.rows > wt.cols {
            return Err(mismatch(
                "linear",
                format!("W {:?}, x {:?}, col_start {col_start}", wt.shape(), xt.shape()),
            ));
        }
        let k = xt.rows;
        let data = (0..wt.rows)
            .map(|i| {
                let row = &wt.data[i * wt.cols + col_start..i * wt.cols + col_start + k];
                row.iter().zip(&xt.data).map(|(a, b)| a * b).sum()
            })
            .collect();
        let value = RealTensor::vector(data);
        Ok(self.record(Value::Real(value), Op::Linear { w, x, col_start }, &[w, x]))
    }

    pub fn kron(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let value = kron(self.complex_of("kron", a)?, self.complex_of("kron", b)?);
        Ok(self.record(Value::Complex(value), Op::Kron(a, b), &[a, b]))
    }

    pub fn partial_trace(
        &mut self,
        x: NodeId,
        shape: RegisterShape,
        keep: &[usize],
    ) -> Result<NodeId, TapeError> {
        let m = self.complex_of("partial_trace", x)?;
        if !m.is_square() || m.rows() != shape.dim() {
            return Err(LinalgError::DimensionMismatch {
                op: "partial_trace",
                left: m.shape(),
                right: (shape.dim(), shape.dim()),
            }
            .into());
        }
        let index = TraceIndex::new(shape, keep)?;
        let value = partial_trace_indexed(m, &index);
        Ok(self.record(Value::Complex(value), Op::PartialTrace { x, index }, &[x]))
    }

    /// Re Tr(X) as a real scalar.
    pub fn trace_re(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        let m = self.complex_of("trace_re", x)?;
        if !m.is_square() {
            return Err(mismatch("trace_re", format!("{:?} is not square", m.shape())));
        }
        let value = RealTensor::scalar(m.trace().re);
        Ok(self.record(Value::Real(value), Op::TraceRe(x), &[x]))
    }

    pub fn adjoint(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        let value = self.complex_of("adjoint", x)?.adjoint();
        Ok(self.record(Value::Complex(value), Op::Adjoint(x), &[x]))
    }

    fn unary_real(
        &mut self,
        op_name: &'static str,
        x: NodeId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<NodeId, TapeError> {
        let value = map_real(self.real_of(op_name, x)?, f);
        Ok(self.record(Value::Real(value), op, &[x]))
    }

    pub fn sin(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        self.unary_real("sin", x, f64::sin, Op::Sin(x))
    }

    pub fn cos(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        self.unary_real("cos", x, f64::cos, Op::Cos(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        self.unary_real("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        self.unary_real("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn ln(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        self.unary_real("ln", x, f64::ln, Op::Ln(x))
    }

    pub fn recip(&mut self, x: NodeId) -> Result<NodeId, TapeError> {
        self.unary_real("recip", x, f64::recip, Op::Recip(x))
    }

    /// 2x2 gate `exp(i θ/2 σ_axis)` with θ taken from entry `index` of a real
    /// angle vector.
    pub fn rotation(&mut self, angles: NodeId, index: usize, axis: Axis) -> Result<NodeId, TapeError> {
        let t = self.real_of("rotation", angles)?;
        let theta = *t
            .data
            .get(index)
            .ok_or_else(|| mismatch("rotation", format!("index {index} out of {}", t.len())))?;
        let value = rotation_matrix(theta, axis);
        Ok(self.record(Value::Complex(value), Op::Rotation { angles, index, axis }, &[angles]))
    }

    /// Applies a 2x2 gate to `qubit` of every column of a `2^n x c` state
    /// matrix.
    pub fn apply_gate(
        &mut self,
        gate: NodeId,
        state: NodeId,
        qubit: usize,
        n_qubits: usize,
    ) -> Result<NodeId, TapeError> {
        let g = self.complex_of("apply_gate", gate)?;
        let s = self.complex_of("apply_gate", state)?;
        if g.shape() != (2, 2) || s.rows() != 1 << n_qubits || qubit >= n_qubits {
            return Err(mismatch(
                "apply_gate",
                format!("gate {:?}, state {:?}, qubit {qubit} of {n_qubits}", g.shape(), s.shape()),
            ));
        }
        let mask = RegisterShape::new(n_qubits).mask(qubit);
        let value = apply_gate_kernel(g, s, mask);
        Ok(self.record(Value::Complex(value), Op::ApplyGate { gate, state, mask }, &[gate, state]))
    }

    /// Controlled-X on the rows of a `2^n x c` state matrix.
    pub fn cnot(
        &mut self,
        state: NodeId,
        control: usize,
        target: usize,
        n_qubits: usize,
    ) -> Result<NodeId, TapeError> {
        let s = self.complex_of("cnot", state)?;
        if s.rows() != 1 << n_qubits || control >= n_qubits || target >= n_qubits || control == target {
            return Err(mismatch(
                "cnot",
                format!("state {:?}, control {control}, target {target} of {n_qubits}", s.shape()),
            ));
        }
        let reg = RegisterShape::new(n_qubits);
        let (cm, tm) = (reg.mask(control), reg.mask(target));
        let value = cnot_kernel(s, cm, tm);
        Ok(self.record(
            Value::Complex(value),
            Op::Cnot {
                state,
                control: cm,
                target: tm,
            },
            &[state],
        ))
    }

    /// Gathers the listed rows of a complex matrix.
    pub fn select_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId, TapeError> {
        let m = self.complex_of("select_rows", x)?;
        if rows.iter().any(|&r| r >= m.rows()) {
            return Err(mismatch("select_rows", format!("row out of range for {:?}", m.shape())));
        }
        let cols = m.cols();
        let mut re = Vec::with_capacity(rows.len() * cols);
        let mut im = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            re.extend_from_slice(&m.re()[r * cols..(r + 1) * cols]);
            im.extend_from_slice(&m.im()[r * cols..(r + 1) * cols]);
        }
        let value = ComplexMatrix::from_planes(rows.len(), cols, re, im)?;
        Ok(self.record(
            Value::Complex(value),
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            &[x],
        ))
    }

    /// Concatenation of real column vectors.
    pub fn concat(&mut self, ids: &[NodeId]) -> Result<NodeId, TapeError> {
        let mut data = Vec::new();
        for &id in ids {
            let t = self.real_of("concat", id)?;
            if t.cols != 1 {
                return Err(mismatch("concat", format!("{:?} is not a column vector", t.shape())));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(self.record(Value::Real(RealTensor::vector(data)), Op::Concat(ids.to_vec()), ids))
    }

    /// Entries `start..start + len` of a real column vector.
    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId, TapeError> {
        let t = self.real_of("slice", x)?;
        if t.cols != 1 || start + len > t.rows {
            return Err(mismatch("slice", format!("{start}..{} of {:?}", start + len, t.shape())));
        }
        let value = RealTensor::vector(t.data[start..start + len].to_vec());
        Ok(self.record(Value::Real(value), Op::Slice { x, start }, &[x]))
    }
}
