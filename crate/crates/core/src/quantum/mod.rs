//! Register semantics for the measurement-and-feedback protocol: initial
//! states, the parameterized step circuit, ancilla measurement and trace-out.
//!
//! The joint register is ordered `[system, measured ancillas, traced
//! ancillas]` with qubit 0 as the most significant bit of a basis index. A step
//! never materializes `ρ ⊗ |0…0⟩⟨0…0|`: the circuit is applied to the isometry
//! `E = Σ_s |s⟩|0…0⟩⟨s|`, giving `V = U E` with `V ρ V† = U (ρ ⊗ |0⟩⟨0|) U†`.
//! Outcome `m` of the measured ancillas keeps the rows of `V` whose measured
//! bits equal `m`, which is `P_m V`.

mod states;

pub use states::{pure_state_from_angles, random_mixed_state, random_pure_state};

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{Axis, Gate, NodeId, Tape, TapeError};
use crate::tensor::{partial_trace, ComplexMatrix, LinalgError, RegisterShape};

/// Largest joint register.
pub const MAX_QUBITS: usize = 6;

/// Outcome probabilities below this are treated as impossible.
pub const MIN_PROBABILITY: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("expected {expected} gate angles, got {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("state is {found}x{found}, expected {expected}x{expected}")]
    StateDimension { expected: usize, found: usize },
    #[error("all outcome probabilities are below {MIN_PROBABILITY:e} (total {total:e})")]
    DeadState { total: f64 },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Qubit allocation and circuit depth of one protocol step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepLayout {
    n_sys: usize,
    n_meas: usize,
    n_traced: usize,
    depth: usize,
}

impl StepLayout {
    pub fn new(n_sys: usize, n_meas: usize, n_traced: usize, depth: usize) -> Result<Self, QuantumError> {
        let n = n_sys + n_meas + n_traced;
        if n_sys == 0 {
            return Err(QuantumError::Layout("at least one system qubit is required".into()));
        }
        if n > MAX_QUBITS {
            return Err(QuantumError::Layout(format!(
                "{n} qubits in total exceeds the limit of {MAX_QUBITS}"
            )));
        }
        if depth == 0 {
            return Err(QuantumError::Layout("depth must be positive".into()));
        }
        Ok(Self {
            n_sys,
            n_meas,
            n_traced,
            depth,
        })
    }

    pub fn n_sys(&self) -> usize {
        self.n_sys
    }

    pub fn n_meas(&self) -> usize {
        self.n_meas
    }

    pub fn n_traced(&self) -> usize {
        self.n_traced
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_total(&self) -> usize {
        self.n_sys + self.n_meas + self.n_traced
    }

    pub fn n_ancilla(&self) -> usize {
        self.n_meas + self.n_traced
    }

    /// `depth · 2N`; angle `layer·2N + 2q` drives R_x on qubit q and the next
    /// one drives R_y.
    pub fn parameter_count(&self) -> usize {
        self.depth * 2 * self.n_total()
    }

    pub fn outcome_count(&self) -> usize {
        1 << self.n_meas
    }

    pub fn sys_dim(&self) -> usize {
        1 << self.n_sys
    }

    pub fn register(&self) -> RegisterShape {
        RegisterShape::new(self.n_total())
    }

    /// All outcomes in index order.
    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        (0..self.outcome_count()).map(move |m| Outcome::new(m, self.n_meas))
    }

    /// Joint-register rows consistent with outcome `m`, ordered as the basis of
    /// the `[system, traced]` register.
    fn outcome_rows(&self, m: usize) -> Vec<usize> {
        let (nm, nt) = (self.n_meas, self.n_traced);
        let mut rows = Vec::with_capacity(self.sys_dim() << nt);
        for s in 0..self.sys_dim() {
            for t in 0..1usize << nt {
                rows.push((s << (nm + nt)) | (m << nt) | t);
            }
        }
        rows
    }

    fn check_theta(&self, found: usize) -> Result<(), QuantumError> {
        if found != self.parameter_count() {
            return Err(QuantumError::ParameterCount {
                expected: self.parameter_count(),
                found,
            });
        }
        Ok(())
    }
}

/// Measurement record of one step. Ancilla `l` (0-based among the measured
/// ancillas) is bit `n_meas − 1 − l` of the index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    index: usize,
    width: usize,
}

impl Outcome {
    pub fn new(index: usize, width: usize) -> Self {
        debug_assert!(index < 1 << width);
        Self { index, width }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let index = bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1));
        Self {
            index,
            width: bits.len(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.width)
            .map(|l| ((self.index >> (self.width - 1 - l)) & 1) as u8)
            .collect()
    }

    /// Bits mapped to `1 − 2b`.
    pub fn signs(&self) -> Vec<f64> {
        self.bits().iter().map(|&b| 1.0 - 2.0 * b as f64).collect()
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for b in self.bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Projector `Π_l (1 + s_l σ_z)/2` on the measured ancillas, identity
/// elsewhere, with `s_l = 1 − 2 b_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub outcome: Outcome,
    pub matrix: ComplexMatrix,
}

impl Projector {
    pub fn new(layout: &StepLayout, outcome: Outcome) -> Self {
        let reg = layout.register();
        let signs = outcome.signs();
        let diag: Vec<f64> = (0..reg.dim())
            .map(|r| {
                signs
                    .iter()
                    .enumerate()
                    .map(|(l, s)| {
                        let z = if r & reg.mask(layout.n_sys + l) == 0 { 1.0 } else { -1.0 };
                        0.5 * (1.0 + s * z)
                    })
                    .product()
            })
            .collect();
        Self {
            outcome,
            matrix: ComplexMatrix::diagonal(&diag),
        }
    }

    pub fn all(layout: &StepLayout) -> Vec<Self> {
        layout.outcomes().map(|m| Self::new(layout, m)).collect()
    }
}

/// Unnormalized branch of the measurement tree on the system register.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchState {
    pub rho: ComplexMatrix,
    /// `Tr ρ`, the probability of `history`.
    pub weight: f64,
    pub history: Vec<Outcome>,
}

impl BranchState {
    pub fn root(rho: ComplexMatrix) -> Self {
        let weight = rho.trace().re;
        Self {
            rho,
            weight,
            history: Vec::new(),
        }
    }
}

/// `V = U E` on the tape, `2^N x 2^n_sys`.
pub fn step_isometry(tape: &mut Tape, theta: NodeId, layout: &StepLayout) -> Result<NodeId, QuantumError> {
    let mut e = ComplexMatrix::zeros(1 << layout.n_total(), layout.sys_dim());
    let shift = layout.n_ancilla();
    for s in 0..layout.sys_dim() {
        e.set(s << shift, s, num_complex::Complex64::new(1.0, 0.0));
    }
    let e = tape.constant(e);
    apply_circuit(tape, theta, e, layout)
}

/// Full step unitary `U_θ` on the tape, `2^N x 2^N`.
pub fn build_step_unitary(tape: &mut Tape, theta: NodeId, layout: &StepLayout) -> Result<NodeId, QuantumError> {
    let id = tape.constant(ComplexMatrix::identity(1 << layout.n_total()));
    apply_circuit(tape, theta, id, layout)
}

/// Plain-value step unitary.
pub fn step_unitary(theta: &[f64], layout: &StepLayout) -> Result<ComplexMatrix, QuantumError> {
    let mut tape = Tape::new();
    let t = tape.constant(crate::autodiff::RealTensor::vector(theta.to_vec()));
    let u = build_step_unitary(&mut tape, t, layout)?;
    Ok(tape.complex(u).clone())
}

/// Gate list of the step circuit: per layer, `R_y R_x` on every qubit, then a
/// CX chain `q → q+1`.
pub fn step_gates(layout: &StepLayout) -> Vec<Gate> {
    let n = layout.n_total();
    let mut gates = Vec::with_capacity(layout.depth * (3 * n));
    for layer in 0..layout.depth {
        for q in 0..n {
            let base = layer * 2 * n + 2 * q;
            gates.push(Gate::Rotation { qubit: q, axis: Axis::X, index: base });
            gates.push(Gate::Rotation { qubit: q, axis: Axis::Y, index: base + 1 });
        }
        for q in 0..n.saturating_sub(1) {
            gates.push(Gate::Cnot { control: q, target: q + 1 });
        }
    }
    gates
}

fn apply_circuit(tape: &mut Tape, theta: NodeId, state: NodeId, layout: &StepLayout) -> Result<NodeId, QuantumError> {
    layout.check_theta(tape.real(theta).len())?;
    Ok(tape.circuit(theta, state, &step_gates(layout), layout.n_total())?)
}

fn check_state(tape: &Tape, rho: NodeId, layout: &StepLayout) -> Result<(), QuantumError> {
    let found = tape.complex(rho).rows();
    if found != layout.sys_dim() || !tape.complex(rho).is_square() {
        return Err(QuantumError::StateDimension {
            expected: layout.sys_dim(),
            found,
        });
    }
    Ok(())
}

/// `Tr_traced(V_m ρ V_m†)` for one outcome, where `V_m` are the rows of `v`
/// selected by the outcome.
pub fn project_outcome(
    tape: &mut Tape,
    v: NodeId,
    rho: NodeId,
    layout: &StepLayout,
    outcome: Outcome,
) -> Result<NodeId, QuantumError> {
    let rows = layout.outcome_rows(outcome.index());
    Ok(tape.sandwich(v, rho, &rows, 1 << layout.n_traced)?)
}

/// One measured step in branch mode: unnormalized child states for every
/// outcome, in outcome order. Children's traces sum to `Tr ρ`.
pub fn step_channel_exact(
    tape: &mut Tape,
    rho: NodeId,
    theta: NodeId,
    layout: &StepLayout,
) -> Result<Vec<NodeId>, QuantumError> {
    check_state(tape, rho, layout)?;
    let v = step_isometry(tape, theta, layout)?;
    step_children(tape, v, rho, layout)
}

/// Children of `rho` for an already built isometry.
pub fn step_children(tape: &mut Tape, v: NodeId, rho: NodeId, layout: &StepLayout) -> Result<Vec<NodeId>, QuantumError> {
    layout
        .outcomes()
        .map(|m| project_outcome(tape, v, rho, layout, m))
        .collect()
}

/// Final step: circuit then trace over every ancilla, no measurement.
pub fn step_channel_traced(
    tape: &mut Tape,
    rho: NodeId,
    theta: NodeId,
    layout: &StepLayout,
) -> Result<NodeId, QuantumError> {
    check_state(tape, rho, layout)?;
    let v = step_isometry(tape, theta, layout)?;
    let rows: Vec<usize> = (0..1 << layout.n_total()).collect();
    Ok(tape.sandwich(v, rho, &rows, 1 << layout.n_ancilla())?)
}

/// Outcome probabilities `Tr(P_m V ρ V† P_m)` read from tape values.
pub fn outcome_probabilities(tape: &Tape, v: NodeId, rho: NodeId, layout: &StepLayout) -> Result<Vec<f64>, QuantumError> {
    let v = tape.complex(v);
    let w = v.matmul(tape.complex(rho))?;
    let mut probs = vec![0.0; layout.outcome_count()];
    let mask = layout.outcome_count() - 1;
    for r in 0..v.rows() {
        let m = (r >> layout.n_traced) & mask;
        let diag: f64 = (0..v.cols())
            .map(|k| (w.get(r, k) * v.get(r, k).conj()).re)
            .sum();
        probs[m] += diag;
    }
    Ok(probs)
}

/// Result of one sampled step.
#[derive(Clone, Copy, Debug)]
pub struct SampledStep {
    /// Normalized post-measurement system state.
    pub rho: NodeId,
    pub outcome: Outcome,
    pub probability: f64,
    /// `p_m` as a differentiable scalar node.
    pub probability_node: NodeId,
}

/// One measured step in trajectory mode: draws `m ~ p_m` and returns the
/// normalized conditional state.
pub fn step_channel_sampled<R: Rng + ?Sized>(
    tape: &mut Tape,
    rho: NodeId,
    theta: NodeId,
    layout: &StepLayout,
    rng: &mut R,
) -> Result<SampledStep, QuantumError> {
    check_state(tape, rho, layout)?;
    let v = step_isometry(tape, theta, layout)?;
    sample_from_isometry(tape, v, rho, layout, rng)
}

pub fn sample_from_isometry<R: Rng + ?Sized>(
    tape: &mut Tape,
    v: NodeId,
    rho: NodeId,
    layout: &StepLayout,
    rng: &mut R,
) -> Result<SampledStep, QuantumError> {
    let probs = outcome_probabilities(tape, v, rho, layout)?;
    let total: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    if !(probs.iter().any(|&p| p >= MIN_PROBABILITY)) || !total.is_finite() {
        return Err(QuantumError::DeadState { total });
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (m, &p) in probs.iter().enumerate() {
        if p < MIN_PROBABILITY {
            continue;
        }
        acc += p;
        chosen = Some(m);
        if u < acc {
            break;
        }
    }
    let m = chosen.expect("at least one outcome is possible");
    let outcome = Outcome::new(m, layout.n_meas);
    let child = project_outcome(tape, v, rho, layout, outcome)?;
    let p = tape.trace_re(child)?;
    let inv = tape.recip(p)?;
    let normalized = tape.scale_by(child, inv)?;
    Ok(SampledStep {
        rho: normalized,
        outcome,
        probability: tape.scalar(p),
        probability_node: p,
    })
}

/// Plain-value branch expansion of [`step_channel_exact`].
pub fn expand_branch(branch: &BranchState, theta: &[f64], layout: &StepLayout) -> Result<Vec<BranchState>, QuantumError> {
    let mut tape = Tape::new();
    let rho = tape.constant(branch.rho.clone());
    let t = tape.constant(crate::autodiff::RealTensor::vector(theta.to_vec()));
    let children = step_channel_exact(&mut tape, rho, t, layout)?;
    Ok(children
        .into_iter()
        .zip(layout.outcomes())
        .map(|(c, m)| {
            let rho = tape.complex(c).clone();
            let mut history = branch.history.clone();
            history.push(m);
            BranchState {
                weight: rho.trace().re,
                rho,
                history,
            }
        })
        .collect())
}

/// Plain-value reference channel: `Tr_anc(U (ρ ⊗ |0⟩⟨0|) U†)` computed with
/// explicit Kronecker product and full unitary.
pub fn reference_trace_out(rho: &ComplexMatrix, u: &ComplexMatrix, layout: &StepLayout) -> Result<ComplexMatrix, QuantumError> {
    let anc = layout.n_ancilla();
    let mut reset = ComplexMatrix::zeros(1 << anc, 1 << anc);
    reset.set(0, 0, num_complex::Complex64::new(1.0, 0.0));
    let joint = crate::tensor::kron(rho, &reset);
    let evolved = u.matmul(&joint)?.matmul(&u.adjoint())?;
    let keep: Vec<usize> = (0..layout.n_sys).collect();
    Ok(partial_trace(&evolved, layout.register(), &keep)?)
}
