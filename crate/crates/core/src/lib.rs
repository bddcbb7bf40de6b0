//! Measurement-and-feedback ground-state preparation.
//!
//! A recurrent controller reads a Hamiltonian and the outcomes of mid-circuit
//! ancilla measurements and emits the gate angles of the next circuit step.
//! The whole rollout, from a random initial density matrix through `T`
//! measured steps to the final energy, is differentiable, so the controller is
//! trained end to end with Adam.

pub mod autodiff;
pub mod controller;
pub mod error;
pub mod eval;
pub mod hamiltonian;
pub mod quantum;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
