//! Dense complex linear algebra for registers of at most six qubits.
//!
//! Qubit 0 is the most significant bit of a basis index, so that
//! `kron(a, b)` places `a` on the leading qubits.

mod eig;
mod matrix;

pub use eig::{hermitian_eig, HermitianEigen};
pub use matrix::ComplexMatrix;

use thiserror::Error;

/// Largest matrix side handled by the kernel.
pub const MAX_DIM: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: {detail}")]
    InvalidShape { op: &'static str, detail: String },
    #[error("matrix is not Hermitian (max |h - h†| = {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
}

/// Qubit register layout; every site is two-dimensional.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegisterShape {
    qubit_count: usize,
}

impl RegisterShape {
    pub fn new(qubit_count: usize) -> Self {
        Self { qubit_count }
    }

    pub fn qubit_count(&self) -> usize {
        self.qubit_count
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![2; self.qubit_count]
    }

    /// Hilbert-space dimension, 2^qubit_count.
    pub fn dim(&self) -> usize {
        1 << self.qubit_count
    }

    /// Bit mask selecting `qubit` inside a basis index.
    #[inline]
    pub fn mask(&self, qubit: usize) -> usize {
        1 << (self.qubit_count - 1 - qubit)
    }
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let cols = ac * bc;
    let mut out = ComplexMatrix::zeros(ar * br, cols);
    let (ore, oim) = out.planes_mut();
    for i in 0..ar {
        for j in 0..ac {
            let xr = a.re()[i * ac + j];
            let xi = a.im()[i * ac + j];
            if xr == 0.0 && xi == 0.0 {
                continue;
            }
            for k in 0..br {
                let row = (i * br + k) * cols + j * bc;
                for l in 0..bc {
                    let yr = b.re()[k * bc + l];
                    let yi = b.im()[k * bc + l];
                    ore[row + l] = xr * yr - xi * yi;
                    oim[row + l] = xr * yi + xi * yr;
                }
            }
        }
    }
    out
}

/// Index tables mapping reduced (kept) indices and traced indices into the full
/// register. `full = kept[a] | traced[t]`.
#[derive(Clone, Debug)]
pub(crate) struct TraceIndex {
    pub kept: Vec<usize>,
    pub traced: Vec<usize>,
}

impl TraceIndex {
    pub fn new(shape: RegisterShape, keep: &[usize]) -> Result<Self, LinalgError> {
        let n = shape.qubit_count();
        if keep.is_empty() {
            return Err(LinalgError::InvalidShape {
                op: "partial_trace",
                detail: "keep set is empty".into(),
            });
        }
        let mut sorted = keep.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != keep.len() || sorted.last().is_some_and(|&q| q >= n) {
            return Err(LinalgError::InvalidShape {
                op: "partial_trace",
                detail: format!("keep set {keep:?} is not a set of distinct qubits below {n}"),
            });
        }
        let traced_qubits: Vec<usize> = (0..n).filter(|q| !sorted.contains(q)).collect();
        Ok(Self {
            kept: expand_indices(shape, &sorted),
            traced: expand_indices(shape, &traced_qubits),
        })
    }
}

/// For each assignment of the listed qubits (first listed = most significant),
/// the corresponding full-register index with all other bits zero.
fn expand_indices(shape: RegisterShape, qubits: &[usize]) -> Vec<usize> {
    let k = qubits.len();
    (0..1usize << k)
        .map(|a| {
            qubits.iter().enumerate().fold(0, |acc, (pos, &q)| {
                if a & (1 << (k - 1 - pos)) != 0 {
                    acc | shape.mask(q)
                } else {
                    acc
                }
            })
        })
        .collect()
}

/// Reduced matrix on the `keep` qubits (returned in ascending qubit order).
pub fn partial_trace(
    m: &ComplexMatrix,
    shape: RegisterShape,
    keep: &[usize],
) -> Result<ComplexMatrix, LinalgError> {
    if !m.is_square() || m.rows() != shape.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "partial_trace",
            left: m.shape(),
            right: (shape.dim(), shape.dim()),
        });
    }
    let index = TraceIndex::new(shape, keep)?;
    Ok(partial_trace_indexed(m, &index))
}

pub(crate) fn partial_trace_indexed(m: &ComplexMatrix, index: &TraceIndex) -> ComplexMatrix {
    let d = index.kept.len();
    let full = m.cols();
    let mut out = ComplexMatrix::zeros(d, d);
    let (ore, oim) = out.planes_mut();
    for (a, &ka) in index.kept.iter().enumerate() {
        for (b, &kb) in index.kept.iter().enumerate() {
            let mut sr = 0.0;
            let mut si = 0.0;
            for &t in &index.traced {
                let k = (ka | t) * full + (kb | t);
                sr += m.re()[k];
                si += m.im()[k];
            }
            ore[a * d + b] = sr;
            oim[a * d + b] = si;
        }
    }
    out
}
