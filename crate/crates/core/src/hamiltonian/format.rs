//! Plain-text Hamiltonian files.
//!
//! One term per line, `<coeff> <string>`, qubit 0 leftmost. `#` starts a
//! comment, blank lines are skipped, and a leading Unicode minus (U+2212) is
//! accepted in place of `-`.

use std::fmt;
use std::str::FromStr;

use super::{HamiltonianError, PauliHamiltonian, PauliString, MAX_QUBITS};

impl PauliHamiltonian {
    pub fn parse(text: &str) -> Result<Self, HamiltonianError> {
        let mut n = None;
        let mut terms = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| HamiltonianError::Parse { line, message };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let (Some(coeff), Some(string), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(err(format!("expected `<coeff> <string>`, got {content:?}")));
            };
            let coeff = coeff.replace('\u{2212}', "-");
            let c: f64 = coeff
                .parse()
                .map_err(|_| err(format!("invalid coefficient {coeff:?}")))?;
            if !c.is_finite() {
                return Err(err(format!("coefficient {c} is not finite")));
            }
            let s = PauliString::from_str(string).map_err(err)?;
            if s.is_empty() || s.len() > MAX_QUBITS {
                return Err(err(format!("unsupported string length {}", s.len())));
            }
            match n {
                None => n = Some(s.len()),
                Some(k) if k != s.len() => {
                    return Err(err(format!("string {string} has {} qubits, expected {k}", s.len())))
                }
                _ => {}
            }
            terms.push((c, s));
        }
        let Some(n) = n else {
            return Err(HamiltonianError::Parse {
                line: 0,
                message: "no terms".into(),
            });
        };
        PauliHamiltonian::new(n, terms)
    }
}

impl FromStr for PauliHamiltonian {
    type Err = HamiltonianError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

/// Writes one term per line with round-trip precision.
impl fmt::Display for PauliHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, s) in &self.terms {
            writeln!(f, "{c:?} {s}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_unicode_minus() {
        let h: PauliHamiltonian = "# two-qubit\n\n\u{2212}0.42 XY\n0.5 zz  # trailing\n0.1 XY\n".parse().unwrap();
        assert_eq!(h.qubits(), 2);
        assert_eq!(h.terms().len(), 2);
        assert!((h.terms()[0].0 + 0.32).abs() < 1e-15);
        assert_eq!(h.terms()[1].1.to_string(), "ZZ");
    }

    #[test]
    fn round_trip() {
        let h = PauliHamiltonian::from_coefficients(1, &[0.1, -0.25, 1.0 / 3.0, 0.0]).unwrap();
        let back: PauliHamiltonian = h.to_string().parse().unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in ["", "# only comment", "1.0", "x Z", "1.0 ZQ", "1.0 Z\n1.0 ZZ", "1 Z extra", "inf Z", "1 XXXX"] {
            assert!(PauliHamiltonian::parse(bad).is_err(), "{bad:?}");
        }
        match PauliHamiltonian::parse("1 Z\n2 K") {
            Err(HamiltonianError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
