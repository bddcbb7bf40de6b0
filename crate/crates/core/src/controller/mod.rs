//! LSTM feedback policy mapping (Hamiltonian, previous outcome) to the next
//! step's gate angles.
//!
//! The cell input is `[4ⁿ Hamiltonian coefficients, N_anc_m outcome signs]`.
//! Gate rows are stacked `i, f, g, o`, each `hidden` rows tall, over columns
//! `[input, hidden]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Gradients, NodeId, RealTensor, Tape, TapeError};
use crate::hamiltonian::PauliHamiltonian;
use crate::quantum::Outcome;

pub const DEFAULT_HIDDEN: usize = 64;
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("{what}: expected {expected}, got {found}")]
    Width {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("widths must be positive")]
    ZeroWidth,
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Layer widths of the controller.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControllerWidths {
    /// Number of Hamiltonian coefficients, 4ⁿ.
    pub coefficients: usize,
    /// Number of measured ancillas.
    pub outcomes: usize,
    pub hidden: usize,
    /// Gate angles per step.
    pub output: usize,
}

impl ControllerWidths {
    pub fn new(n_sys: usize, n_meas: usize, hidden: usize, output: usize) -> Self {
        Self {
            coefficients: 1 << (2 * n_sys),
            outcomes: n_meas,
            hidden,
            output,
        }
    }

    pub fn input(&self) -> usize {
        self.coefficients + self.outcomes
    }

    /// `4·hidden·(input + hidden + 1) + output·(hidden + 1)`
    pub fn parameter_count(&self) -> usize {
        4 * self.hidden * (self.input() + self.hidden + 1) + self.output * (self.hidden + 1)
    }

    fn gate_cols(&self) -> usize {
        self.input() + self.hidden
    }
}

/// Controller weights, flattened in the order `w_gates, b_gates, w_out, b_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerParams {
    widths: ControllerWidths,
    /// `4H x (input + H)`, row-major.
    pub w_gates: Vec<f64>,
    pub b_gates: Vec<f64>,
    /// `output x H`, row-major.
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl ControllerParams {
    pub fn zeros(widths: ControllerWidths) -> Self {
        let h = widths.hidden;
        Self {
            widths,
            w_gates: vec![0.0; 4 * h * widths.gate_cols()],
            b_gates: vec![0.0; 4 * h],
            w_out: vec![0.0; widths.output * h],
            b_out: vec![0.0; widths.output],
        }
    }

    /// Weights ~ Uniform(±1/√fan_in), forget bias [`FORGET_BIAS`], other
    /// biases zero.
    pub fn init(widths: ControllerWidths, seed: u64) -> Result<Self, ControllerError> {
        if widths.hidden == 0 || widths.output == 0 || widths.input() == 0 {
            return Err(ControllerError::ZeroWidth);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(widths);
        let a = 1.0 / (widths.gate_cols() as f64).sqrt();
        p.w_gates.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        let a = 1.0 / (widths.hidden as f64).sqrt();
        p.w_out.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        let h = widths.hidden;
        p.b_gates[h..2 * h].fill(FORGET_BIAS);
        Ok(p)
    }

    pub fn widths(&self) -> ControllerWidths {
        self.widths
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.widths.parameter_count());
        v.extend_from_slice(&self.w_gates);
        v.extend_from_slice(&self.b_gates);
        v.extend_from_slice(&self.w_out);
        v.extend_from_slice(&self.b_out);
        v
    }

    pub fn from_flat(widths: ControllerWidths, flat: &[f64]) -> Result<Self, ControllerError> {
        if flat.len() != widths.parameter_count() {
            return Err(ControllerError::Width {
                what: "flat parameter vector",
                expected: widths.parameter_count(),
                found: flat.len(),
            });
        }
        let mut p = Self::zeros(widths);
        let mut rest = flat;
        for part in [&mut p.w_gates, &mut p.b_gates, &mut p.w_out, &mut p.b_out] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        Ok(p)
    }
}

/// Cell input for one step: Hamiltonian coefficients followed by outcome
/// signs `1 − 2b`, or zeros when there is no previous outcome.
pub fn encode_input(
    h: &PauliHamiltonian,
    previous: Option<&Outcome>,
    widths: &ControllerWidths,
) -> Result<Vec<f64>, ControllerError> {
    let mut v = h.coefficient_vector();
    if v.len() != widths.coefficients {
        return Err(ControllerError::Width {
            what: "Hamiltonian coefficients",
            expected: widths.coefficients,
            found: v.len(),
        });
    }
    v.extend(encode_outcome(previous, widths)?);
    Ok(v)
}

pub fn encode_outcome(previous: Option<&Outcome>, widths: &ControllerWidths) -> Result<Vec<f64>, ControllerError> {
    match previous {
        None => Ok(vec![0.0; widths.outcomes]),
        Some(m) if m.width() == widths.outcomes => Ok(m.signs()),
        Some(m) => Err(ControllerError::Width {
            what: "outcome bits",
            expected: widths.outcomes,
            found: m.width(),
        }),
    }
}

/// Controller weights placed on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ControllerNodes {
    widths: ControllerWidths,
    pub w_gates: NodeId,
    pub b_gates: NodeId,
    pub w_out: NodeId,
    pub b_out: NodeId,
}

/// Hidden and cell vectors of one trajectory, as tape nodes.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub hidden: NodeId,
    pub cell: NodeId,
}

impl ControllerNodes {
    /// Places the weights on the tape as leaves when `trainable`, constants
    /// otherwise.
    pub fn register(tape: &mut Tape, params: &ControllerParams, trainable: bool) -> Self {
        let w = params.widths;
        let h = w.hidden;
        let mut put = |rows: usize, cols: usize, data: &[f64]| {
            let t = RealTensor::new(rows, cols, data.to_vec()).expect("consistent widths");
            if trainable {
                tape.leaf(t)
            } else {
                tape.constant(t)
            }
        };
        Self {
            widths: w,
            w_gates: put(4 * h, w.gate_cols(), &params.w_gates),
            b_gates: put(4 * h, 1, &params.b_gates),
            w_out: put(w.output, h, &params.w_out),
            b_out: put(w.output, 1, &params.b_out),
        }
    }

    pub fn widths(&self) -> ControllerWidths {
        self.widths
    }

    /// Gradient with respect to the flattened parameters.
    pub fn flat_gradient(&self, grads: &Gradients) -> Vec<f64> {
        let w = self.widths;
        let h = w.hidden;
        let mut v = grads.real_or_zeros(self.w_gates, 4 * h * w.gate_cols());
        v.extend(grads.real_or_zeros(self.b_gates, 4 * h));
        v.extend(grads.real_or_zeros(self.w_out, w.output * h));
        v.extend(grads.real_or_zeros(self.b_out, w.output));
        v
    }

    /// Zero hidden and cell state.
    pub fn initial_state(&self, tape: &mut Tape) -> CellState {
        let h = self.widths.hidden;
        CellState {
            hidden: tape.constant(RealTensor::zeros(h, 1)),
            cell: tape.constant(RealTensor::zeros(h, 1)),
        }
    }

    /// Constant input columns shared by every step of a rollout:
    /// `W[:, coefficients] · coefs + b`.
    pub fn drive_hamiltonian(&self, tape: &mut Tape, h: &PauliHamiltonian) -> Result<NodeId, ControllerError> {
        let coefs = h.coefficient_vector();
        if coefs.len() != self.widths.coefficients {
            return Err(ControllerError::Width {
                what: "Hamiltonian coefficients",
                expected: self.widths.coefficients,
                found: coefs.len(),
            });
        }
        let x = tape.constant(RealTensor::vector(coefs));
        let wx = tape.linear(self.w_gates, x, 0)?;
        Ok(tape.add(wx, self.b_gates)?)
    }

    /// Recurrent contribution `W[:, hidden] · h`, shared by all children of a
    /// branch.
    pub fn drive_recurrent(&self, tape: &mut Tape, state: &CellState) -> Result<NodeId, ControllerError> {
        Ok(tape.linear(self.w_gates, state.hidden, self.widths.input())?)
    }

    /// Gate pre-activations from the shared parts plus the outcome columns.
    pub fn preactivation(
        &self,
        tape: &mut Tape,
        drive_h: NodeId,
        recurrent: NodeId,
        previous: Option<&Outcome>,
    ) -> Result<NodeId, ControllerError> {
        let base = tape.add(drive_h, recurrent)?;
        if previous.is_none() || self.widths.outcomes == 0 {
            return Ok(base);
        }
        let m = tape.constant(RealTensor::vector(encode_outcome(previous, &self.widths)?));
        let wm = tape.linear(self.w_gates, m, self.widths.coefficients)?;
        Ok(tape.add(base, wm)?)
    }

    /// Gate nonlinearities, cell update and output projection.
    pub fn cell_update(
        &self,
        tape: &mut Tape,
        pre: NodeId,
        previous: &CellState,
    ) -> Result<(CellState, NodeId), ControllerError> {
        let h = self.widths.hidden;
        let zi = tape.slice(pre, 0, h)?;
        let zf = tape.slice(pre, h, h)?;
        let zg = tape.slice(pre, 2 * h, h)?;
        let zo = tape.slice(pre, 3 * h, h)?;
        let i = tape.sigmoid(zi)?;
        let f = tape.sigmoid(zf)?;
        let g = tape.tanh(zg)?;
        let o = tape.sigmoid(zo)?;
        let keep = tape.mul(f, previous.cell)?;
        let write = tape.mul(i, g)?;
        let cell = tape.add(keep, write)?;
        let squashed = tape.tanh(cell)?;
        let hidden = tape.mul(o, squashed)?;
        let proj = tape.linear(self.w_out, hidden, 0)?;
        let theta = tape.add(proj, self.b_out)?;
        Ok((CellState { hidden, cell }, theta))
    }

    /// One full LSTM step on an explicit input vector.
    pub fn lstm_step(
        &self,
        tape: &mut Tape,
        state: &CellState,
        input: NodeId,
    ) -> Result<(CellState, NodeId), ControllerError> {
        let found = tape.real(input).len();
        if found != self.widths.input() {
            return Err(ControllerError::Width {
                what: "cell input",
                expected: self.widths.input(),
                found,
            });
        }
        let wx = tape.linear(self.w_gates, input, 0)?;
        let wh = tape.linear(self.w_gates, state.hidden, self.widths.input())?;
        let s = tape.add(wx, wh)?;
        let pre = tape.add(s, self.b_gates)?;
        self.cell_update(tape, pre, state)
    }
}

#[cfg(test)]
mod tests;
