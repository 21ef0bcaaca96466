//! Analysis toolkit for bounded quantum-control landscapes.
//!
//! The crate studies two frozen control problems — a driven qubit and an
//! Ising-coupled qubit pair (triplet sector) — through the dual
//! rotation-group representation of their dynamics. It provides:
//!
//! * [`problem`] — exact propagation and infidelity in dual and Hilbert form;
//! * [`expansions`] — Taylor/Dyson landscape coefficients around arbitrary
//!   protocols, Magnus resummations in the rotating frame, and the cumulant
//!   (logarithm) resummation;
//! * [`stability`] — linear stability of bang-bang protocol families,
//!   transition-point location, and the traced optimal-window family;
//! * [`samplers`] — stochastic descent over bang-bang protocols and
//!   Langevin Monte Carlo over continuous ones, with trap diagnostics and
//!   order-parameter estimators;
//! * [`field_theory`] — Hessian spectra in mode space, saddle-point
//!   evaluation of the level-set partition function, and the derived
//!   order-parameter predictions;
//! * [`linalg`], [`rng`] — deterministic numerics shared by everything else.
//!
//! All randomness flows through explicitly derived streams (see [`rng`]), so
//! any result in this crate is reproducible from a base seed.

pub mod error;
pub mod expansions;
pub mod field_theory;
pub mod linalg;
pub mod problem;
pub mod rng;
pub mod samplers;
pub mod stability;

pub use error::{Error, Result};
pub use problem::{
    build_single_qubit_problem, build_two_qubit_problem, dualize_state, infidelity_exact,
    propagate_exact, ControlProblem, ModelKind, Propagator, Protocol,
};
