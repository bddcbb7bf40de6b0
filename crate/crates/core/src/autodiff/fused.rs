//! Fused operations for the hot path of a rollout: a whole gate sequence as
//! one node, and the projected, partially traced sandwich `Σ_t V_t ρ V_t†`.

use std::sync::Arc;

use num_complex::Complex64;

use super::{Axis, NodeId, Op, Tape, TapeError};
use crate::tensor::{ComplexMatrix, RegisterShape};

/// One gate of a fused circuit, acting on qubits of a `2^n`-row register.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// `exp(i θ/2 σ_axis)` with θ = `angles[index]`.
    Rotation { qubit: usize, axis: Axis, index: usize },
    Cnot { control: usize, target: usize },
}

/// Gate with qubits resolved to row masks.
#[derive(Clone, Copy, Debug)]
pub(crate) enum MaskedGate {
    Rotation { mask: usize, axis: Axis, index: usize },
    Cnot { control: usize, target: usize },
}

/// `exp(i θ/2 σ_axis)` on the masked qubit, in place.
fn rotate_in_place(m: &mut ComplexMatrix, theta: f64, axis: Axis, mask: usize) {
    let (s, c) = (0.5 * theta).sin_cos();
    let cols = m.cols();
    let (re, im) = m.planes_mut();
    let width = mask * cols;
    let blocks = re.chunks_exact_mut(2 * width).zip(im.chunks_exact_mut(2 * width));
    for (rb, ib) in blocks {
        let (r0, r1) = rb.split_at_mut(width);
        let (i0, i1) = ib.split_at_mut(width);
        let lanes = r0.iter_mut().zip(i0.iter_mut()).zip(r1.iter_mut().zip(i1.iter_mut()));
        match axis {
            Axis::X => {
                for ((a, b), (p, q)) in lanes {
                    (*a, *b, *p, *q) = (c * *a - s * *q, c * *b + s * *p, c * *p - s * *b, c * *q + s * *a);
                }
            }
            Axis::Y => {
                for ((a, b), (p, q)) in lanes {
                    (*a, *b, *p, *q) = (c * *a + s * *p, c * *b + s * *q, c * *p - s * *a, c * *q - s * *b);
                }
            }
            Axis::Z => {
                for ((a, b), (p, q)) in lanes {
                    (*a, *b, *p, *q) = (c * *a - s * *b, c * *b + s * *a, c * *p + s * *q, c * *q - s * *p);
                }
            }
        }
    }
}

fn cnot_in_place(m: &mut ComplexMatrix, control: usize, target: usize) {
    let (rows, cols) = m.shape();
    let (re, im) = m.planes_mut();
    for r in (0..rows).filter(|r| r & control != 0 && r & target == 0) {
        let s = r | target;
        let (a, b) = re.split_at_mut(s * cols);
        a[r * cols..(r + 1) * cols].swap_with_slice(&mut b[..cols]);
        let (a, b) = im.split_at_mut(s * cols);
        a[r * cols..(r + 1) * cols].swap_with_slice(&mut b[..cols]);
    }
}

/// `Re Σ conj(G) ⊙ ((i/2) σ X)` with σ acting on the masked qubit.
fn rotation_sensitivity(g: &ComplexMatrix, x: &ComplexMatrix, mask: usize, axis: Axis) -> f64 {
    let width = mask * x.cols();
    let mut acc = 0.0;
    let planes = g
        .re()
        .chunks_exact(2 * width)
        .zip(g.im().chunks_exact(2 * width))
        .zip(x.re().chunks_exact(2 * width).zip(x.im().chunks_exact(2 * width)));
    for ((gr, gi), (xr, xi)) in planes {
        let (gr0, gr1) = gr.split_at(width);
        let (gi0, gi1) = gi.split_at(width);
        let (xr0, xr1) = xr.split_at(width);
        let (xi0, xi1) = xi.split_at(width);
        for k in 0..width {
            acc += match axis {
                Axis::X => -gr0[k] * xi1[k] + gi0[k] * xr1[k] - gr1[k] * xi0[k] + gi1[k] * xr0[k],
                Axis::Y => gr0[k] * xr1[k] + gi0[k] * xi1[k] - gr1[k] * xr0[k] - gi1[k] * xi0[k],
                Axis::Z => -gr0[k] * xi0[k] + gi0[k] * xr0[k] + gr1[k] * xi1[k] - gi1[k] * xr1[k],
            };
        }
    }
    0.5 * acc
}

pub(crate) fn run_circuit(state: &ComplexMatrix, angles: &[f64], gates: &[MaskedGate]) -> ComplexMatrix {
    let mut out = state.clone();
    for gate in gates {
        match *gate {
            MaskedGate::Rotation { mask, axis, index } => rotate_in_place(&mut out, angles[index], axis, mask),
            MaskedGate::Cnot { control, target } => cnot_in_place(&mut out, control, target),
        }
    }
    out
}

/// Walks the circuit backwards from its output, undoing each gate on a copy of
/// the output. Returns the gradient with respect to the input state and adds
/// angle gradients to `d_angles`.
pub(crate) fn circuit_backward(
    output: &ComplexMatrix,
    grad: &ComplexMatrix,
    angles: &[f64],
    gates: &[MaskedGate],
    mut d_angles: Option<&mut [f64]>,
) -> ComplexMatrix {
    let mut x = output.clone();
    let mut g = grad.clone();
    for gate in gates.iter().rev() {
        match *gate {
            MaskedGate::Rotation { mask, axis, index } => {
                if let Some(d) = d_angles.as_deref_mut() {
                    d[index] += rotation_sensitivity(&g, &x, mask, axis);
                }
                rotate_in_place(&mut x, -angles[index], axis, mask);
                rotate_in_place(&mut g, -angles[index], axis, mask);
            }
            MaskedGate::Cnot { control, target } => {
                cnot_in_place(&mut x, control, target);
                cnot_in_place(&mut g, control, target);
            }
        }
    }
    g
}

/// `Σ_t V_(a,t) ρ V_(b,t)*` where row `a·block + t` of the selection is row
/// `rows[a·block + t]` of `v`.
pub(crate) fn sandwich_forward(v: &ComplexMatrix, rho: &ComplexMatrix, rows: &[usize], block: usize) -> ComplexMatrix {
    let vs = select(v, rows);
    let w = vs.matmul(rho).expect("shapes checked on record");
    let k = rows.len() / block;
    let d = v.cols();
    ComplexMatrix::from_fn(k, k, |a, b| {
        let mut s = Complex64::new(0.0, 0.0);
        for t in 0..block {
            let (ra, rb) = (a * block + t, b * block + t);
            for l in 0..d {
                s += w.get(ra, l) * vs.get(rb, l).conj();
            }
        }
        s
    })
}

fn select(v: &ComplexMatrix, rows: &[usize]) -> ComplexMatrix {
    let cols = v.cols();
    ComplexMatrix::from_fn(rows.len(), cols, |i, j| v.get(rows[i], j))
}

/// Gradients of [`sandwich_forward`] with respect to the selected rows of `v`
/// (in selection order) and to `rho`.
pub(crate) fn sandwich_backward(
    v: &ComplexMatrix,
    rho: &ComplexMatrix,
    rows: &[usize],
    block: usize,
    g: &ComplexMatrix,
) -> (ComplexMatrix, ComplexMatrix) {
    let vs = select(v, rows);
    let w = vs.matmul(rho).expect("shapes checked on record");
    let (n, d) = vs.shape();
    // G_J[(a,t),(b,t')] = G[a,b] δ(t,t'); G_W = G_J Vs, G_Vs = G_J† W + G_W ρ†.
    let mut gw = ComplexMatrix::zeros(n, d);
    let mut gvs = ComplexMatrix::zeros(n, d);
    let k = n / block;
    for a in 0..k {
        for b in 0..k {
            let gab = g.get(a, b);
            if gab == Complex64::new(0.0, 0.0) {
                continue;
            }
            for t in 0..block {
                let (ra, rb) = (a * block + t, b * block + t);
                for l in 0..d {
                    let gw_al = gw.get(ra, l) + gab * vs.get(rb, l);
                    gw.set(ra, l, gw_al);
                    let gv_bl = gvs.get(rb, l) + gab.conj() * w.get(ra, l);
                    gvs.set(rb, l, gv_bl);
                }
            }
        }
    }
    gvs.add_assign(&gw.matmul(&rho.adjoint()).expect("square"));
    let grho = vs.adjoint().matmul(&gw).expect("shapes checked on record");
    (gvs, grho)
}

impl Tape {
    /// Applies `gates` in order to the rows of a `2^n x c` state matrix, with
    /// rotation angles read from the real vector `angles`. Recorded as a single
    /// node.
    pub fn circuit(&mut self, angles: NodeId, state: NodeId, gates: &[Gate], n_qubits: usize) -> Result<NodeId, TapeError> {
        let mismatch = |detail: String| TapeError::ShapeMismatch { op: "circuit", detail };
        let a = self
            .node(angles)
            .value
            .as_real()
            .ok_or(TapeError::KindMismatch { op: "circuit", expected: "real" })?;
        let s = self
            .node(state)
            .value
            .as_complex()
            .ok_or(TapeError::KindMismatch { op: "circuit", expected: "complex" })?;
        if s.rows() != 1 << n_qubits {
            return Err(mismatch(format!("state {:?} for {n_qubits} qubits", s.shape())));
        }
        let reg = RegisterShape::new(n_qubits);
        let mut masked = Vec::with_capacity(gates.len());
        for gate in gates {
            masked.push(match *gate {
                Gate::Rotation { qubit, axis, index } => {
                    if qubit >= n_qubits || index >= a.len() {
                        return Err(mismatch(format!("rotation on qubit {qubit} with angle {index} of {}", a.len())));
                    }
                    MaskedGate::Rotation {
                        mask: reg.mask(qubit),
                        axis,
                        index,
                    }
                }
                Gate::Cnot { control, target } => {
                    if control >= n_qubits || target >= n_qubits || control == target {
                        return Err(mismatch(format!("cnot {control}->{target} on {n_qubits} qubits")));
                    }
                    MaskedGate::Cnot {
                        control: reg.mask(control),
                        target: reg.mask(target),
                    }
                }
            });
        }
        let value = run_circuit(s, a.data(), &masked);
        let rg = self.any_grad(&[angles, state]);
        Ok(self.push(
            value.into(),
            Op::Circuit {
                angles,
                state,
                gates: Arc::from(masked),
            },
            rg,
        ))
    }

    /// `Σ_t V_t ρ V_t†` where `V_t` gathers rows `rows[a·block + t]` of `v` for
    /// output index `a`. With `block = 1` this is `P V ρ V† P`; larger blocks
    /// also trace out the trailing register.
    pub fn sandwich(&mut self, v: NodeId, rho: NodeId, rows: &[usize], block: usize) -> Result<NodeId, TapeError> {
        let mismatch = |detail: String| TapeError::ShapeMismatch { op: "sandwich", detail };
        let kind = TapeError::KindMismatch {
            op: "sandwich",
            expected: "complex",
        };
        let vm = self.node(v).value.as_complex().ok_or(kind.clone())?;
        let rm = self.node(rho).value.as_complex().ok_or(kind)?;
        if !rm.is_square() || rm.rows() != vm.cols() {
            return Err(mismatch(format!("V {:?}, rho {:?}", vm.shape(), rm.shape())));
        }
        if block == 0 || rows.len() % block != 0 || rows.iter().any(|&r| r >= vm.rows()) {
            return Err(mismatch(format!("{} rows in blocks of {block} from {:?}", rows.len(), vm.shape())));
        }
        let value = sandwich_forward(vm, rm, rows, block);
        let rg = self.any_grad(&[v, rho]);
        Ok(self.push(
            value.into(),
            Op::Sandwich {
                v,
                rho,
                rows: rows.to_vec(),
                block,
            },
            rg,
        ))
    }
}
