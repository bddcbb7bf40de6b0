use num_complex::Complex64;

use super::fused::{circuit_backward, sandwich_backward};
use super::ops::{apply_gate_kernel, cnot_kernel};
use super::{Axis, Node, NodeId, Op, RealTensor, Tape, TapeError, Value};
use crate::tensor::ComplexMatrix;

/// Gradients of a scalar loss with respect to every node that influenced it.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Value>>,
}

impl Gradients {
    /// `None` means the node did not participate (its gradient is zero).
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn real(&self, id: NodeId) -> Option<&RealTensor> {
        self.get(id).and_then(Value::as_real)
    }

    pub fn complex(&self, id: NodeId) -> Option<&ComplexMatrix> {
        self.get(id).and_then(Value::as_complex)
    }

    /// Gradient of a 1x1 real node; zero when it did not participate.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.real(id).map_or(0.0, |t| t.data[0])
    }

    /// Gradient of a real node flattened row-major, zero-filled when absent.
    pub fn real_or_zeros(&self, id: NodeId, len: usize) -> Vec<f64> {
        match self.real(id) {
            Some(t) => t.data.clone(),
            None => vec![0.0; len],
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Value>], nodes: &[Node], id: NodeId) -> Option<&'a mut Value> {
    if !nodes[id.0].requires_grad {
        return None;
    }
    let entry = &mut grads[id.0];
    if entry.is_none() {
        *entry = Some(nodes[id.0].value.zeros_like());
    }
    entry.as_mut()
}

fn real_slot<'a>(grads: &'a mut [Option<Value>], nodes: &[Node], id: NodeId) -> Option<&'a mut RealTensor> {
    match slot(grads, nodes, id) {
        Some(Value::Real(t)) => Some(t),
        _ => None,
    }
}

fn complex_slot<'a>(
    grads: &'a mut [Option<Value>],
    nodes: &[Node],
    id: NodeId,
) -> Option<&'a mut ComplexMatrix> {
    match slot(grads, nodes, id) {
        Some(Value::Complex(m)) => Some(m),
        _ => None,
    }
}

/// dst += factor * src
fn axpy(dst: &mut Value, src: &Value, factor: f64) {
    match (dst, src) {
        (Value::Real(d), Value::Real(s)) => {
            for (a, b) in d.data.iter_mut().zip(&s.data) {
                *a += factor * b;
            }
        }
        (Value::Complex(d), Value::Complex(s)) => {
            let (dre, dim) = d.planes_mut();
            for (a, b) in dre.iter_mut().zip(s.re()) {
                *a += factor * b;
            }
            for (a, b) in dim.iter_mut().zip(s.im()) {
                *a += factor * b;
            }
        }
        _ => unreachable!("gradient kind mismatch"),
    }
}

/// Re Σ conj(a) ⊙ b
fn real_inner(a: &Value, b: &Value) -> f64 {
    match (a, b) {
        (Value::Real(x), Value::Real(y)) => x.data.iter().zip(&y.data).map(|(p, q)| p * q).sum(),
        (Value::Complex(x), Value::Complex(y)) => {
            let re: f64 = x.re().iter().zip(y.re()).map(|(p, q)| p * q).sum();
            let im: f64 = x.im().iter().zip(y.im()).map(|(p, q)| p * q).sum();
            re + im
        }
        _ => unreachable!("gradient kind mismatch"),
    }
}

fn pauli(axis: Axis) -> ComplexMatrix {
    let o = Complex64::new(0.0, 0.0);
    let e = match axis {
        Axis::X => [o, Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), o],
        Axis::Y => [o, Complex64::new(0.0, -1.0), Complex64::new(0.0, 1.0), o],
        Axis::Z => [Complex64::new(1.0, 0.0), o, o, Complex64::new(-1.0, 0.0)],
    };
    ComplexMatrix::from_entries(2, 2, &e).expect("2x2")
}

impl Tape {
    /// Reverse sweep from a real scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TapeError> {
        let nodes = &self.nodes;
        match &nodes[loss.0].value {
            Value::Complex(_) => return Err(TapeError::ComplexLoss),
            Value::Real(t) if t.shape() != (1, 1) => {
                return Err(TapeError::NonScalarLoss(t.rows, t.cols))
            }
            _ => {}
        }
        let mut grads: Vec<Option<Value>> = vec![None; nodes.len()];
        if !nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Value::Real(RealTensor::scalar(1.0)));

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Value, grads: &mut [Option<Value>]) {
        let nodes = &self.nodes;
        let val = |id: NodeId| &nodes[id.0].value;
        let creal = |id: NodeId| nodes[id.0].value.as_complex().expect("complex input");
        let rreal = |id: NodeId| nodes[id.0].value.as_real().expect("real input");

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if let Some(d) = slot(grads, nodes, *a) {
                    axpy(d, g, 1.0);
                }
                if let Some(d) = slot(grads, nodes, *b) {
                    axpy(d, g, 1.0);
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = slot(grads, nodes, *a) {
                    axpy(d, g, 1.0);
                }
                if let Some(d) = slot(grads, nodes, *b) {
                    axpy(d, g, -1.0);
                }
            }
            Op::Scale(x, f) => {
                if let Some(d) = slot(grads, nodes, *x) {
                    axpy(d, g, *f);
                }
            }
            Op::ScaleBy { x, s } => {
                let factor = rreal(*s).data[0];
                if let Some(d) = slot(grads, nodes, *x) {
                    axpy(d, g, factor);
                }
                let ds = real_inner(g, val(*x));
                if let Some(d) = real_slot(grads, nodes, *s) {
                    d.data[0] += ds;
                }
            }
            Op::Mul(a, b) => {
                let gv = g.as_real().expect("real grad");
                let (av, bv) = (rreal(*a), rreal(*b));
                if let Some(d) = real_slot(grads, nodes, *a) {
                    for ((o, gi), bi) in d.data.iter_mut().zip(&gv.data).zip(&bv.data) {
                        *o += gi * bi;
                    }
                }
                if let Some(d) = real_slot(grads, nodes, *b) {
                    for ((o, gi), ai) in d.data.iter_mut().zip(&gv.data).zip(&av.data) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Sum(ids) => {
                for id in ids {
                    if let Some(d) = slot(grads, nodes, *id) {
                        axpy(d, g, 1.0);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let gm = g.as_complex().expect("complex grad");
                let (am, bm) = (creal(*a), creal(*b));
                if nodes[a.0].requires_grad {
                    let ga = gm.matmul(&bm.adjoint()).expect("shapes checked on record");
                    complex_slot(grads, nodes, *a).unwrap().add_assign(&ga);
                }
                if nodes[b.0].requires_grad {
                    let gb = am.adjoint().matmul(gm).expect("shapes checked on record");
                    complex_slot(grads, nodes, *b).unwrap().add_assign(&gb);
                }
            }
            Op::Linear { w, x, col_start } => {
                let gv = &g.as_real().expect("real grad").data;
                let (wt, xt) = (rreal(*w), rreal(*x));
                let (wc, k, cs) = (wt.cols, xt.rows, *col_start);
                if let Some(d) = real_slot(grads, nodes, *w) {
                    for (i, &gi) in gv.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &mut d.data[i * wc + cs..i * wc + cs + k];
                        for (o, xj) in row.iter_mut().zip(&xt.data) {
                            *o += gi * xj;
                        }
                    }
                }
                if let Some(d) = real_slot(grads, nodes, *x) {
                    for (i, &gi) in gv.iter().enumerate() {
                        let row = &wt.data[i * wc + cs..i * wc + cs + k];
                        for (o, wij) in d.data.iter_mut().zip(row) {
                            *o += gi * wij;
                        }
                    }
                }
            }
            Op::Kron(a, b) => {
                let gm = g.as_complex().expect("complex grad");
                let (am, bm) = (creal(*a), creal(*b));
                let (ar, ac) = am.shape();
                let (br, bc) = bm.shape();
                let at = |i: usize, j: usize, k: usize, l: usize| gm.get(i * br + k, j * bc + l);
                if nodes[a.0].requires_grad {
                    let ga = ComplexMatrix::from_fn(ar, ac, |i, j| {
                        let mut s = Complex64::new(0.0, 0.0);
                        for k in 0..br {
                            for l in 0..bc {
                                s += at(i, j, k, l) * bm.get(k, l).conj();
                            }
                        }
                        s
                    });
                    complex_slot(grads, nodes, *a).unwrap().add_assign(&ga);
                }
                if nodes[b.0].requires_grad {
                    let gb = ComplexMatrix::from_fn(br, bc, |k, l| {
                        let mut s = Complex64::new(0.0, 0.0);
                        for i in 0..ar {
                            for j in 0..ac {
                                s += at(i, j, k, l) * am.get(i, j).conj();
                            }
                        }
                        s
                    });
                    complex_slot(grads, nodes, *b).unwrap().add_assign(&gb);
                }
            }
            Op::PartialTrace { x, index } => {
                let gm = g.as_complex().expect("complex grad");
                if let Some(d) = complex_slot(grads, nodes, *x) {
                    let full = d.cols();
                    let dk = index.kept.len();
                    let (dre, dim) = d.planes_mut();
                    for (a, &ka) in index.kept.iter().enumerate() {
                        for (b, &kb) in index.kept.iter().enumerate() {
                            let (gr, gi) = (gm.re()[a * dk + b], gm.im()[a * dk + b]);
                            for &t in &index.traced {
                                let k = (ka | t) * full + (kb | t);
                                dre[k] += gr;
                                dim[k] += gi;
                            }
                        }
                    }
                }
            }
            Op::TraceRe(x) => {
                let gs = g.as_real().expect("real grad").data[0];
                if let Some(d) = complex_slot(grads, nodes, *x) {
                    let n = d.rows();
                    let re = d.re_mut();
                    for i in 0..n {
                        re[i * n + i] += gs;
                    }
                }
            }
            Op::Adjoint(x) => {
                let gm = g.as_complex().expect("complex grad");
                if let Some(d) = complex_slot(grads, nodes, *x) {
                    d.add_assign(&gm.adjoint());
                }
            }
            Op::Sin(x) | Op::Cos(x) | Op::Tanh(x) | Op::Sigmoid(x) | Op::Ln(x) | Op::Recip(x) => {
                let gv = &g.as_real().expect("real grad").data;
                let xin = &rreal(*x).data;
                let out = &node.value.as_real().expect("real output").data;
                let deriv: fn(f64, f64) -> f64 = match node.op {
                    Op::Sin(_) => |x, _| x.cos(),
                    Op::Cos(_) => |x, _| -x.sin(),
                    Op::Tanh(_) => |_, y| 1.0 - y * y,
                    Op::Sigmoid(_) => |_, y| y * (1.0 - y),
                    Op::Ln(_) => |x, _| 1.0 / x,
                    _ => |_, y| -y * y,
                };
                if let Some(d) = real_slot(grads, nodes, *x) {
                    for i in 0..d.data.len() {
                        d.data[i] += gv[i] * deriv(xin[i], out[i]);
                    }
                }
            }
            Op::Rotation { angles, index, axis } => {
                let gm = g.as_complex().expect("complex grad");
                let u = node.value.as_complex().expect("complex output");
                // dU/dθ = (i/2) σ U
                let du = pauli(*axis)
                    .matmul(u)
                    .expect("2x2")
                    .scale_complex(Complex64::new(0.0, 0.5));
                let dtheta = real_inner(&Value::Complex(gm.clone()), &Value::Complex(du));
                if let Some(d) = real_slot(grads, nodes, *angles) {
                    d.data[*index] += dtheta;
                }
            }
            Op::ApplyGate { gate, state, mask } => {
                let gm = g.as_complex().expect("complex grad");
                let (gate_m, state_m) = (creal(*gate), creal(*state));
                if nodes[state.0].requires_grad {
                    let back = apply_gate_kernel(&gate_m.adjoint(), gm, *mask);
                    complex_slot(grads, nodes, *state).unwrap().add_assign(&back);
                }
                if nodes[gate.0].requires_grad {
                    let cols = state_m.cols();
                    let mut acc = [Complex64::new(0.0, 0.0); 4];
                    for r0 in 0..state_m.rows() {
                        if r0 & mask != 0 {
                            continue;
                        }
                        let r1 = r0 | mask;
                        for c in 0..cols {
                            let g0 = gm.get(r0, c);
                            let g1 = gm.get(r1, c);
                            let x0 = state_m.get(r0, c).conj();
                            let x1 = state_m.get(r1, c).conj();
                            acc[0] += g0 * x0;
                            acc[1] += g0 * x1;
                            acc[2] += g1 * x0;
                            acc[3] += g1 * x1;
                        }
                    }
                    let ga = ComplexMatrix::from_entries(2, 2, &acc).expect("2x2");
                    complex_slot(grads, nodes, *gate).unwrap().add_assign(&ga);
                }
            }
            Op::Cnot { state, control, target } => {
                let gm = g.as_complex().expect("complex grad");
                if let Some(d) = complex_slot(grads, nodes, *state) {
                    d.add_assign(&cnot_kernel(gm, *control, *target));
                }
            }
            Op::SelectRows { x, rows } => {
                let gm = g.as_complex().expect("complex grad");
                if let Some(d) = complex_slot(grads, nodes, *x) {
                    let cols = d.cols();
                    let (dre, dim) = d.planes_mut();
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            dre[r * cols + c] += gm.re()[i * cols + c];
                            dim[r * cols + c] += gm.im()[i * cols + c];
                        }
                    }
                }
            }
            Op::Concat(ids) => {
                let gv = &g.as_real().expect("real grad").data;
                let mut offset = 0;
                for id in ids {
                    let len = rreal(*id).data.len();
                    if let Some(d) = real_slot(grads, nodes, *id) {
                        for (o, gi) in d.data.iter_mut().zip(&gv[offset..offset + len]) {
                            *o += gi;
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { x, start } => {
                let gv = &g.as_real().expect("real grad").data;
                if let Some(d) = real_slot(grads, nodes, *x) {
                    for (o, gi) in d.data[*start..*start + gv.len()].iter_mut().zip(gv) {
                        *o += gi;
                    }
                }
            }
            Op::Circuit { angles, state, gates } => {
                let gm = g.as_complex().expect("complex grad");
                let out = node.value.as_complex().expect("complex output");
                let theta = &rreal(*angles).data;
                let d_angles = real_slot(grads, nodes, *angles).map(|d| d.data.as_mut_slice());
                let back = circuit_backward(out, gm, theta, gates, d_angles);
                if let Some(d) = complex_slot(grads, nodes, *state) {
                    d.add_assign(&back);
                }
            }
            Op::Sandwich { v, rho, rows, block } => {
                let gm = g.as_complex().expect("complex grad");
                let (gv, grho) = sandwich_backward(creal(*v), creal(*rho), rows, *block, gm);
                if let Some(d) = complex_slot(grads, nodes, *v) {
                    let cols = d.cols();
                    let (dre, dim) = d.planes_mut();
                    for (i, &r) in rows.iter().enumerate() {
                        for c in 0..cols {
                            dre[r * cols + c] += gv.re()[i * cols + c];
                            dim[r * cols + c] += gv.im()[i * cols + c];
                        }
                    }
                }
                if let Some(d) = complex_slot(grads, nodes, *rho) {
                    d.add_assign(&grho);
                }
            }
        }
    }
}
