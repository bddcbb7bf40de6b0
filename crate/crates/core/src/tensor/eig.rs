use num_complex::Complex64;

use super::{ComplexMatrix, LinalgError};

const HERMITIAN_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        self.eigenvectors.column(k)
    }

    /// V diag(λ) V†
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v.get(i, k) * self.eigenvalues[k] * v.get(j, k).conj())
                .sum()
        })
    }
}

/// Cyclic complex Jacobi eigensolver.
///
/// Each rotation zeroes one off-diagonal pair (p, q) with the unitary
/// `J = diag(1, e^{-iφ}) · [[c, s], [-s, c]]`, where φ is the phase of `a_pq`,
/// reducing the problem to a real symmetric 2×2 Jacobi rotation.
pub fn hermitian_eig(h: &ComplexMatrix) -> Result<HermitianEigen, LinalgError> {
    if !h.is_square() {
        return Err(LinalgError::InvalidShape {
            op: "hermitian_eig",
            detail: format!("matrix is {}x{}", h.rows(), h.cols()),
        });
    }
    let deviation = h.hermitian_deviation();
    if !(deviation <= HERMITIAN_TOL * h.max_abs().max(1.0)) {
        return Err(LinalgError::NotHermitian { deviation });
    }

    let n = h.rows();
    // Work on the exactly Hermitian part.
    let mut a: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (h.get(i, j) + h.get(j, i).conj()) * 0.5;
        }
    }
    let mut v: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }

    let scale = h.frobenius_norm();
    if scale > 0.0 {
        let mut converged = false;
        let mut off = off_diagonal_norm(&a, n);
        for _ in 0..MAX_SWEEPS {
            if off <= 1e-15 * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    rotate(&mut a, &mut v, n, p, q, scale);
                }
            }
            off = off_diagonal_norm(&a, n);
        }
        if !converged && off > 1e-13 * scale {
            return Err(LinalgError::NoConvergence {
                sweeps: MAX_SWEEPS,
                off_norm: off,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].re.total_cmp(&a[y * n + y].re));
    let eigenvalues = order.iter().map(|&k| a[k * n + k].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &[Complex64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i * n + j].norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut [Complex64], v: &mut [Complex64], n: usize, p: usize, q: usize, scale: f64) {
    let apq = a[p * n + q];
    let abs = apq.norm();
    if abs <= 1e-300 || abs <= 1e-18 * scale {
        return;
    }
    let alpha = a[p * n + p].re;
    let gamma = a[q * n + q].re;
    let tau = (gamma - alpha) / (2.0 * abs);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let phase_conj = (apq / abs).conj();
    let jpp = Complex64::new(c, 0.0);
    let jpq = Complex64::new(s, 0.0);
    let jqp = -phase_conj * s;
    let jqq = phase_conj * c;

    // A <- A J
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = akp * jpp + akq * jqp;
        a[k * n + q] = akp * jpq + akq * jqq;
    }
    // A <- J† A
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = jpp.conj() * apk + jqp.conj() * aqk;
        a[q * n + k] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[p * n + q] = Complex64::new(0.0, 0.0);
    a[q * n + p] = Complex64::new(0.0, 0.0);
    a[p * n + p] = Complex64::new(alpha - t * abs, 0.0);
    a[q * n + q] = Complex64::new(gamma + t * abs, 0.0);

    for k in 0..n {
        let vkp = v[k * n + p];
        let vkq = v[k * n + q];
        v[k * n + p] = vkp * jpp + vkq * jqp;
        v[k * n + q] = vkp * jpq + vkq * jqq;
    }
}
