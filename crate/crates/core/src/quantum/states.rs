use num_complex::Complex64;
use rand::Rng;
use rand_distr::Exp1;

use crate::tensor::ComplexMatrix;

const TWO_PI: f64 = std::f64::consts::TAU;

fn rotate(amps: &mut [Complex64], n: usize, q: usize, g: [Complex64; 4]) {
    let mask = 1 << (n - 1 - q);
    for r0 in 0..amps.len() {
        if r0 & mask == 0 {
            let r1 = r0 | mask;
            let (a, b) = (amps[r0], amps[r1]);
            amps[r0] = g[0] * a + g[1] * b;
            amps[r1] = g[2] * a + g[3] * b;
        }
    }
}

fn rx(theta: f64) -> [Complex64; 4] {
    let (s, c) = (0.5 * theta).sin_cos();
    [Complex64::new(c, 0.0), Complex64::new(0.0, s), Complex64::new(0.0, s), Complex64::new(c, 0.0)]
}

fn rz_phases(phi: f64) -> (Complex64, Complex64) {
    let h = 0.5 * phi;
    (Complex64::from_polar(1.0, h), Complex64::from_polar(1.0, -h))
}

/// `|ψ⟩⟨ψ|` for the initial-state circuit with given angles: on each qubit
/// `q`, R_x(θ_q) then R_z(φ_q) acting on |0⟩, followed by controlled-R_z(φ'_i)
/// from qubit i to qubit i+1.
pub fn pure_state_from_angles(n: usize, local: &[(f64, f64)], entangling: &[f64]) -> ComplexMatrix {
    assert!(n >= 1 && local.len() == n && entangling.len() == n - 1);
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
    amps[0] = Complex64::new(1.0, 0.0);
    for (q, &(theta, phi)) in local.iter().enumerate() {
        rotate(&mut amps, n, q, rx(theta));
        let (p0, p1) = rz_phases(phi);
        rotate(&mut amps, n, q, [p0, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), p1]);
    }
    for (i, &phi) in entangling.iter().enumerate() {
        let control = 1 << (n - 1 - i);
        let target = 1 << (n - 2 - i);
        let (p0, p1) = rz_phases(phi);
        for (r, a) in amps.iter_mut().enumerate() {
            if r & control != 0 {
                *a *= if r & target == 0 { p0 } else { p1 };
            }
        }
    }
    ComplexMatrix::outer(&amps)
}

/// Random pure state from the initial-state circuit with every angle drawn
/// from Uniform[0, 2π).
pub fn random_pure_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix {
    let local: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..TWO_PI), rng.random_range(0.0..TWO_PI)))
        .collect();
    let entangling: Vec<f64> = (1..n).map(|_| rng.random_range(0.0..TWO_PI)).collect();
    pure_state_from_angles(n, &local, &entangling)
}

/// Mixture of `q` random pure states with weights uniform on the simplex.
pub fn random_mixed_state<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> ComplexMatrix {
    assert!(q >= 1, "mixture needs at least one component");
    let raw: Vec<f64> = (0..q).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    let mut rho = ComplexMatrix::zeros(1 << n, 1 << n);
    for w in raw {
        rho.add_assign(&random_pure_state(n, rng).scale(w / total));
    }
    rho
}
