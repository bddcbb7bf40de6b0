use crate::error::{Error, Result};
use crate::hamiltonian::GroundSolution;
use crate::tensor::{ComplexMatrix, LinalgError};

/// Tolerance on `Tr ρ = 1` for states handed to the metrics.
pub const TRACE_TOL: f64 = 1e-9;

/// How fidelities are defined, echoed into every report.
pub const FIDELITY_CONVENTION: &str =
    "squared overlap <g|rho|g>; Tr(rho P_ground) when the ground level is degenerate";

fn check_square(rho: &ComplexMatrix, dim: usize, op: &'static str) -> Result<()> {
    if rho.shape() != (dim, dim) {
        return Err(LinalgError::DimensionMismatch {
            op,
            left: rho.shape(),
            right: (dim, dim),
        }
        .into());
    }
    Ok(())
}

/// `⟨g|ρ|g⟩`, or `Tr(ρ Π)` with `Π` the ground-space projector when the ground
/// level is degenerate.
pub fn fidelity(rho: &ComplexMatrix, ground: &GroundSolution) -> Result<f64> {
    check_square(rho, ground.state.len(), "fidelity")?;
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > TRACE_TOL {
        return Err(Error::Numerical(format!("fidelity needs a unit-trace state, got trace {trace}")));
    }
    if ground.is_degenerate() {
        Ok(rho.matmul(&ground.projector)?.trace().re)
    } else {
        Ok(rho.quadratic_form(&ground.state).re)
    }
}

/// `(Tr ρσx, Tr ρσy, Tr ρσz)` of a single-qubit state.
pub fn bloch_coordinates(rho: &ComplexMatrix) -> Result<[f64; 3]> {
    check_square(rho, 2, "bloch_coordinates")?;
    let off = rho.get(1, 0);
    Ok([2.0 * off.re, 2.0 * off.im, rho.get(0, 0).re - rho.get(1, 1).re])
}

/// `Tr(ρ σz ⊗ σz)` of a two-qubit state.
pub fn zz_expectation(rho: &ComplexMatrix) -> Result<f64> {
    check_square(rho, 4, "zz_expectation")?;
    Ok(rho.get(0, 0).re - rho.get(1, 1).re - rho.get(2, 2).re + rho.get(3, 3).re)
}
