//! Simulation and verification toolkit for frequency-encoded linear cluster
//! states emitted by a weakly driven, Raman-scattering hole spin.
//!
//! The crate is organised along the physical pipeline:
//!
//! - [`system`]: the driven four-level trion model, its Hamiltonian and jump
//!   operators.
//! - [`trajectory`]: quantum-jump Monte Carlo unravelling, Raman rates and
//!   per-bin success statistics.
//! - [`protocol`]: exact spin–photon algebra of the entangling sequence.
//! - [`cluster`]: independent stabilizer construction and verification of
//!   linear cluster states.
//! - [`noise`]: frozen Overhauser-field fluctuations, noisy precession and
//!   ensemble fidelities.
//! - [`entanglement`]: density-matrix utilities, negativity and localisable
//!   entanglement.
//! - [`stats`]: closed-form protocol statistics and fusion scaling.
//! - [`tomography`]: random-phase state tomography with Cholesky MLE.
//!
//! Basis ordering is fixed everywhere to `(⇑, ⇓, T↑, T↓)` for the quantum dot,
//! `{B, R, Ray}` for a photon slot, and qubit 1 as the most significant bit of
//! a computational-basis index.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod entanglement;
mod error;
pub mod export;
pub mod noise;
pub mod optim;
pub mod protocol;
pub mod rng;
pub mod stats;
pub mod system;
pub mod tomography;
pub mod trajectory;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;

/// Squared overlap `|⟨a|b⟩|²`, insensitive to global phase.
pub fn overlap_fidelity(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len(), "overlap of states with different dimension");
    a.iter()
        .zip(b)
        .map(|(x, y)| x.conj() * y)
        .sum::<C64>()
        .norm_sqr()
}

/// Euclidean norm of a complex vector.
pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
