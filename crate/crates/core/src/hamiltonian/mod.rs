//! Pauli-string Hamiltonians: sampling, dense realization, exact ground
//! states and energy expectations.

mod format;

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::tensor::{hermitian_eig, kron, ComplexMatrix, LinalgError};

/// Largest supported register for dense Hamiltonians.
pub const MAX_QUBITS: usize = 3;

/// Eigenvalues closer than this to the ground energy span the ground space.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("Pauli string length {found} does not match qubit count {expected}")]
    QubitCount { expected: usize, found: usize },
    #[error("unsupported qubit count {0} (supported: 1..={MAX_QUBITS})")]
    Unsupported(usize),
    #[error("expectation has imaginary part {0:e}; state or Hamiltonian is not Hermitian")]
    NotReal(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> ComplexMatrix {
        let o = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let e = match self {
            Pauli::I => [one, o, o, one],
            Pauli::X => [o, one, one, o],
            Pauli::Y => [o, -i, i, o],
            Pauli::Z => [one, o, o, -one],
        };
        ComplexMatrix::from_entries(2, 2, &e).expect("2x2")
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Tensor product of single-qubit Paulis; entry 0 acts on qubit 0.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        Self(ops)
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![Pauli::I; n])
    }

    /// String with index `idx` in the base-4 ordering I<X<Y<Z, qubit 0 most
    /// significant.
    pub fn from_index(n: usize, idx: usize) -> Self {
        Self(
            (0..n)
                .map(|q| Pauli::ALL[(idx >> (2 * (n - 1 - q))) & 3])
                .collect(),
        )
    }

    pub fn index(&self) -> usize {
        self.0.iter().fold(0, |acc, p| acc * 4 + p.index())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.0
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        self.0
            .iter()
            .fold(ComplexMatrix::identity(1), |acc, p| kron(&acc, &p.matrix()))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PauliString {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| Pauli::from_symbol(c).ok_or_else(|| format!("invalid Pauli symbol {c:?}")))
            .collect::<Result<Vec<_>, _>>()
            .map(PauliString)
    }
}

/// Real linear combination of n-qubit Pauli strings with merged duplicates,
/// kept in canonical string order.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliHamiltonian {
    n: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliHamiltonian {
    pub fn new(n: usize, terms: Vec<(f64, PauliString)>) -> Result<Self, HamiltonianError> {
        let mut merged: BTreeMap<usize, (f64, PauliString)> = BTreeMap::new();
        for (c, s) in terms {
            if s.len() != n {
                return Err(HamiltonianError::QubitCount {
                    expected: n,
                    found: s.len(),
                });
            }
            merged.entry(s.index()).or_insert((0.0, s)).0 += c;
        }
        Ok(Self {
            n,
            terms: merged.into_values().collect(),
        })
    }

    /// `h · I`
    pub fn identity(n: usize, h: f64) -> Self {
        Self {
            n,
            terms: vec![(h, PauliString::identity(n))],
        }
    }

    /// Hamiltonian from the full 4ⁿ coefficient vector in canonical order.
    pub fn from_coefficients(n: usize, coefficients: &[f64]) -> Result<Self, HamiltonianError> {
        if coefficients.len() != 1 << (2 * n) {
            return Err(HamiltonianError::QubitCount {
                expected: 1 << (2 * n),
                found: coefficients.len(),
            });
        }
        Ok(Self {
            n,
            terms: coefficients
                .iter()
                .enumerate()
                .map(|(i, &c)| (c, PauliString::from_index(n, i)))
                .collect(),
        })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    /// Coefficients of all 4ⁿ strings in canonical order I<X<Y<Z, qubit 0
    /// most significant; absent strings are zero.
    pub fn coefficient_vector(&self) -> Vec<f64> {
        let mut v = vec![0.0; 1 << (2 * self.n)];
        for (c, s) in &self.terms {
            v[s.index()] += c;
        }
        v
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let dim = 1 << self.n;
        let mut out = ComplexMatrix::zeros(dim, dim);
        for (c, s) in &self.terms {
            if *c != 0.0 {
                out.add_assign(&s.to_dense().scale(*c));
            }
        }
        out
    }

    pub fn ground(&self) -> Result<GroundSolution, HamiltonianError> {
        GroundSolution::of_matrix(&self.to_dense())
    }

    /// Re Tr(ρH); errors when the imaginary part exceeds 1e-9.
    pub fn expectation(&self, rho: &ComplexMatrix) -> Result<f64, HamiltonianError> {
        expectation_dense(rho, &self.to_dense())
    }
}

/// Re Tr(ρH) against an already dense Hamiltonian.
pub fn expectation_dense(rho: &ComplexMatrix, h: &ComplexMatrix) -> Result<f64, HamiltonianError> {
    if rho.shape() != h.shape() {
        return Err(LinalgError::DimensionMismatch {
            op: "expectation",
            left: rho.shape(),
            right: h.shape(),
        }
        .into());
    }
    let n = rho.rows();
    let mut z = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            z += rho.get(i, j) * h.get(j, i);
        }
    }
    if z.im.abs() > 1e-9 {
        return Err(HamiltonianError::NotReal(z.im));
    }
    Ok(z.re)
}

/// Lowest eigenpair of a Hamiltonian with its spectral gap and ground-space
/// projector.
#[derive(Clone, Debug)]
pub struct GroundSolution {
    pub energy: f64,
    /// Unit-norm ground vector (one representative if degenerate).
    pub state: Vec<Complex64>,
    /// E₁ − E₀, zero for a degenerate ground level.
    pub gap: f64,
    /// Number of eigenvalues within [`DEGENERACY_TOL`] of the ground energy.
    pub degeneracy: usize,
    /// Projector onto the ground space.
    pub projector: ComplexMatrix,
}

impl GroundSolution {
    pub fn of_matrix(h: &ComplexMatrix) -> Result<Self, HamiltonianError> {
        let eig = hermitian_eig(h)?;
        let e0 = eig.eigenvalues[0];
        let degeneracy = eig
            .eigenvalues
            .iter()
            .take_while(|&&e| e - e0 < DEGENERACY_TOL)
            .count();
        let gap = eig.eigenvalues.get(1).map_or(0.0, |e1| (e1 - e0).max(0.0));
        let dim = h.rows();
        let mut projector = ComplexMatrix::zeros(dim, dim);
        for k in 0..degeneracy {
            projector.add_assign(&ComplexMatrix::outer(&eig.vector(k)));
        }
        Ok(Self {
            energy: e0,
            state: eig.vector(0),
            gap,
            degeneracy,
            projector,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.degeneracy > 1
    }
}

/// All 4ⁿ Pauli strings with i.i.d. Uniform[-1, 1] coefficients.
pub fn sample_hamiltonian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<PauliHamiltonian, HamiltonianError> {
    if n == 0 || n > MAX_QUBITS {
        return Err(HamiltonianError::Unsupported(n));
    }
    let coefficients: Vec<f64> = (0..1usize << (2 * n))
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    PauliHamiltonian::from_coefficients(n, &coefficients)
}

/// `cos θ σx + (sin θ/√2) σy + (sin θ/√2) σz`, a unit-norm field direction.
pub fn test_family_single_qubit(theta: f64) -> PauliHamiltonian {
    let s = theta.sin() * std::f64::consts::FRAC_1_SQRT_2;
    PauliHamiltonian::new(
        1,
        vec![
            (theta.cos(), PauliString::new(vec![Pauli::X])),
            (s, PauliString::new(vec![Pauli::Y])),
            (s, PauliString::new(vec![Pauli::Z])),
        ],
    )
    .expect("single-qubit strings")
}
