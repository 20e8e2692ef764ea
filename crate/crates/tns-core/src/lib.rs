//! Numerical toolkit for a family of tensor-network states built by applying
//! commuting-operator exponentials `(1/Z) e^{beta K_1} e^{i t K_2}` to a product
//! state, together with the machinery that makes the family useful:
//!
//! - frustration-free parent Hamiltonians with analytically zero ground energy,
//! - SDP-based lower bounds on the spectral gap, at a point and over parameter
//!   intervals via explicit continuity bounds,
//! - complete sets of local observables with known expectation values,
//! - single-qubit-measurement verification protocols with honest and adversarial
//!   provers,
//! - a dense exact-diagonalization oracle for desk-scale cross-validation.
//!
//! Everything is deterministic: randomized components take explicit seeds and
//! derive per-round streams from a counter-based generator.

pub mod gap;
pub mod lattice;
pub mod linalg;
pub mod models;
pub mod observables;
pub mod operators;
pub mod oracle;
pub mod rng;
pub mod sdp;
pub mod state;
pub mod verify;
